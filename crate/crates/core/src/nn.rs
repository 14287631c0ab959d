//! A small fully connected network stack: ReLU hidden layers, linear
//! output, exact backprop, Adam and soft target updates.
//!
//! Arithmetic runs in `f64`, but every stored parameter and optimizer
//! moment is kept exactly representable as `f32`. That makes the 32-bit
//! checkpoint format lossless: a save/load round trip restores the network
//! bit for bit.

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

#[inline]
fn q32(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.biases.clone();
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }
}

/// Weights and biases of a multilayer perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Values saved by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to every layer.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of every layer.
    pub pre: Vec<Vec<f64>>,
}

/// Partial derivatives shaped like an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Mlp {
        assert!(dims.len() >= 2, "need at least input and output sizes");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (inputs, outputs) = (d[0], d[1]);
                let limit = (6.0 / inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| q32(rng.gen_range(-limit..limit)))
                    .collect();
                Layer {
                    weights,
                    ..Layer::zeros(inputs, outputs)
                }
            })
            .collect();
        Mlp { layers }
    }

    /// All-zero network with the given dims.
    pub fn zeros(dims: &[usize]) -> Mlp {
        Mlp {
            layers: dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Output only; no cache.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.affine(&a);
            if i < last {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            cache.inputs.push(a);
            a = if i < last { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            cache.pre.push(z);
        }
        (a, cache)
    }

    /// Gradient of `d_out · output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, d_out, &mut grads);
        grads
    }

    /// Accumulates the gradient of `d_out · output` into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut Gradients) {
        assert_eq!(d_out.len(), self.output_dim(), "output gradient dimension mismatch");
        let last = self.layers.len() - 1;
        let mut delta = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                for (d, z) in delta.iter_mut().zip(&cache.pre[i]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
                delta = prev;
            }
        }
    }

    /// Order-sensitive digest of every parameter's bit pattern.
    pub fn digest(&self) -> u64 {
        digest_f64(self.params())
    }
}

/// FNV-1a over the bit patterns of a value stream.
pub fn digest_f64(values: impl Iterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Central difference `(f(x + h) − f(x − h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Parameter `k` of layer `layer`: weights first, then biases.
fn slot(layers: &mut [Layer], layer: usize, k: usize) -> &mut f64 {
    let l = &mut layers[layer];
    let n_w = l.weights.len();
    if k < n_w {
        &mut l.weights[k]
    } else {
        &mut l.biases[k - n_w]
    }
}

/// Central finite difference of `d_out · output` for one parameter, indexed
/// within its layer (weights first, then biases).
pub fn finite_diff_param(net: &Mlp, x: &[f64], d_out: &[f64], layer: usize, k: usize, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let mut probe = net.clone();
    let orig = *slot(&mut probe.layers, layer, k);
    let mut objective = |v: f64| {
        *slot(&mut probe.layers, layer, k) = v;
        probe.predict(x).iter().zip(d_out).map(|(y, d)| y * d).sum::<f64>()
    };
    let up = objective(orig + h);
    let down = objective(orig - h);
    (up - down) / (2.0 * h)
}

/// Central finite differences of `d_out · output` for every parameter.
pub fn finite_diff_grad(net: &Mlp, x: &[f64], d_out: &[f64], h: f64) -> Gradients {
    assert!(h > 0.0, "step must be positive");
    let mut probe = net.clone();
    let mut grads = Gradients::zeros_like(net);
    for li in 0..net.layers.len() {
        let n = net.layers[li].weights.len() + net.layers[li].biases.len();
        for k in 0..n {
            let orig = *slot(&mut probe.layers, li, k);
            *slot(&mut probe.layers, li, k) = orig + h;
            let up: f64 = probe.predict(x).iter().zip(d_out).map(|(y, d)| y * d).sum();
            *slot(&mut probe.layers, li, k) = orig - h;
            let down: f64 = probe.predict(x).iter().zip(d_out).map(|(y, d)| y * d).sum();
            *slot(&mut probe.layers, li, k) = orig;
            *slot(&mut grads.layers, li, k) = (up - down) / (2.0 * h);
        }
    }
    grads
}


/// `d_out · output` with one parameter moved by `delta`, evaluated from the
/// cached forward pass: only the perturbed unit and what lies downstream of
/// it are recomputed. The flag reports whether any hidden pre-activation
/// changed sign, i.e. whether the step crossed a ReLU kink.
pub fn perturbed_objective(
    net: &Mlp,
    cache: &ForwardCache,
    d_out: &[f64],
    layer: usize,
    k: usize,
    delta: f64,
) -> (f64, bool) {
    let last = net.layers.len() - 1;
    let l = &net.layers[layer];
    let n_w = l.weights.len();
    let (unit, dz) = if k < n_w {
        (k / l.inputs, delta * cache.inputs[layer][k % l.inputs])
    } else {
        (k - n_w, delta)
    };
    let mut z = cache.pre[layer].clone();
    z[unit] += dz;
    let mut crossed = false;
    if layer < last {
        let old = cache.pre[layer][unit];
        crossed = (old > 0.0) != (z[unit] > 0.0);
        let da = z[unit].max(0.0) - old.max(0.0);
        let next = &net.layers[layer + 1];
        z = cache.pre[layer + 1].clone();
        if da != 0.0 {
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += next.weights[r * next.inputs + unit] * da;
            }
        }
        for m in layer + 1..last {
            crossed |= z.iter().zip(&cache.pre[m]).any(|(a, b)| (*a > 0.0) != (*b > 0.0));
            let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            z = net.layers[m + 1].affine(&a);
        }
    }
    (z.iter().zip(d_out).map(|(y, d)| y * d).sum(), crossed)
}

/// Relative error with the denominator floored at `floor`, so that two
/// near-zero derivatives are compared absolutely.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Step used by [`gradient_check`].
pub const GRADCHECK_STEP: f64 = 1e-3;
/// Denominator floor used by [`gradient_check`].
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Backprop against central finite differences over whole networks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub nets: usize,
    pub params_checked: usize,
    /// Parameters whose ±h step crossed a ReLU kink; their central
    /// difference is not a derivative, so they are not compared.
    pub kinks_skipped: usize,
    pub max_rel_error: f64,
}

/// Draws `nets` random networks of shape `dims` (He weights, small random
/// biases), random inputs in [0, 1) and random output weightings, and
/// compares every parameter's backprop gradient with its central finite
/// difference.
pub fn gradient_check(dims: &[usize], nets: usize, seed: u64) -> GradCheckReport {
    let mut report = GradCheckReport {
        nets,
        params_checked: 0,
        kinks_skipped: 0,
        max_rel_error: 0.0,
    };
    let h = GRADCHECK_STEP;
    for i in 0..nets {
        let mut rng = crate::rng::stream(seed, 0, i as u64);
        let mut net = Mlp::init(dims, &mut rng);
        for l in &mut net.layers {
            l.biases.iter_mut().for_each(|b| *b = q32(rng.gen_range(-0.1..0.1)));
        }
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen::<f64>()).collect();
        let d_out: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x);
        let grads = net.backward(&cache, &d_out);
        for (li, g) in grads.layers.iter().enumerate() {
            for (k, &analytic) in g.weights.iter().chain(&g.biases).enumerate() {
                let (up, c1) = perturbed_objective(&net, &cache, &d_out, li, k, h);
                let (down, c2) = perturbed_objective(&net, &cache, &d_out, li, k, -h);
                if c1 || c2 {
                    report.kinks_skipped += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                report.params_checked += 1;
                report.max_rel_error = report.max_rel_error.max(relative_error(analytic, numeric, GRADCHECK_FLOOR));
            }
        }
    }
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First moments, shaped like the network.
    pub m: Gradients,
    /// Second moments, shaped like the network.
    pub v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn digest(&self) -> u64 {
        digest_f64(
            [self.lr, self.beta1, self.beta2, self.eps, self.step as f64]
                .into_iter()
                .chain(self.m.iter())
                .chain(self.v.iter()),
        )
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.lr;
    let eps = state.eps;
    for (li, layer) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut state.m.layers[li];
        let v = &mut state.v.layers[li];
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = q32(b1 * *m + (1.0 - b1) * g);
            *v = q32(b2 * *v + (1.0 - b2) * g * g);
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = q32(*p - lr * m_hat / (v_hat.sqrt() + eps));
        };
        for k in 0..layer.weights.len() {
            update(&mut layer.weights[k], g.weights[k], &mut m.weights[k], &mut v.weights[k]);
        }
        for k in 0..layer.biases.len() {
            update(&mut layer.biases[k], g.biases[k], &mut m.biases[k], &mut v.biases[k]);
        }
    }
}

/// `target ← τ·online + (1 − τ)·target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    assert_eq!(target.dims(), online.dims(), "shape mismatch");
    for (t, o) in target.params_mut().zip(online.params()) {
        *t = q32(tau * o + (1.0 - tau) * *t);
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SQN1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic, not an SQN1 checkpoint")]
    BadMagic,
    #[error("invalid layer dims {0:?}")]
    BadDims(Vec<usize>),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("{0} trailing bytes after checkpoint")]
    Trailing(usize),
    #[error("expected network dims {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
}

fn put_tensors(out: &mut Vec<u8>, layers: &[Layer]) {
    for l in layers {
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
}

/// Serializes a network and its optimizer:
///
/// ```text
/// "SQN1" | u32 n_dims | u32 dims[n_dims]
///        | per layer: f32 weights (row-major), f32 biases
///        | f64 lr, beta1, beta2, eps | u64 step
///        | first moments, second moments (f32, same layout as params)
/// ```
///
/// All integers and floats are little-endian.
pub fn checkpoint_to_bytes(net: &Mlp, adam: &AdamState) -> Vec<u8> {
    let dims = net.dims();
    let mut out = Vec::with_capacity(16 + 12 * net.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in &dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    put_tensors(&mut out, &net.layers);
    for v in [adam.lr, adam.beta1, adam.beta2, adam.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&adam.step.to_le_bytes());
    put_tensors(&mut out, &adam.m.layers);
    put_tensors(&mut out, &adam.v.layers);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, layers: &mut [Layer]) -> Result<(), CheckpointError> {
        for l in layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64;
            }
        }
        Ok(())
    }
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<(Mlp, AdamState), CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(CheckpointError::BadDims(vec![n]));
    }
    let dims = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    if dims.iter().any(|&d| d == 0 || d > 1 << 20) {
        return Err(CheckpointError::BadDims(dims));
    }
    let params: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
    // Params plus two moment tensors plus hyperparameters; checked before
    // allocating so a corrupt header cannot request huge buffers.
    let needed = 12 * params + 40;
    if buf.len() - r.pos < needed {
        return Err(CheckpointError::Truncated);
    }
    let mut net = Mlp::zeros(&dims);
    r.fill(&mut net.layers)?;
    let mut adam = AdamState::new(&net, 0.0);
    adam.lr = r.f64()?;
    adam.beta1 = r.f64()?;
    adam.beta2 = r.f64()?;
    adam.eps = r.f64()?;
    adam.step = r.u64()?;
    r.fill(&mut adam.m.layers)?;
    r.fill(&mut adam.v.layers)?;
    if r.pos != buf.len() {
        return Err(CheckpointError::Trailing(buf.len() - r.pos));
    }
    Ok((net, adam))
}

pub fn save_checkpoint(net: &Mlp, adam: &AdamState, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint_to_bytes(net, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Mlp, AdamState), CheckpointError> {
    checkpoint_from_bytes(&fs::read(path)?)
}
