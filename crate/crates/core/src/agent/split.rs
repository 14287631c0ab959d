use std::path::Path;

use rand::{Rng, RngCore};

use super::{
    read_manifest, write_manifest, AgentConfig, AgentError, EpsilonSchedule, Manifest, QAgent,
    ReplayBuffer, ScheduleState, Transition,
};
use crate::features::{State, FEATURE_LEN};
use crate::nn::{self, AdamState, Gradients, Mlp};
use crate::physics::Primitive;

/// Online network, its slowly tracking target copy, and the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveNet {
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
}

impl PrimitiveNet {
    pub fn fresh<R: Rng + ?Sized>(cfg: &AgentConfig, rng: &mut R) -> Self {
        let mut dims = vec![FEATURE_LEN];
        dims.extend(&cfg.split_hidden);
        dims.push(1);
        let online = Mlp::init(&dims, rng);
        Self::from_online(online, cfg.lr)
    }

    pub fn from_online(online: Mlp, lr: f64) -> Self {
        let adam = AdamState::new(&online, lr);
        Self {
            target: online.clone(),
            online,
            adam,
        }
    }

    /// Digests of online params, target params and optimizer state.
    pub fn digests(&self) -> [u64; 3] {
        [self.online.digest(), self.target.digest(), self.adam.digest()]
    }

    fn check_shape(&self) -> Result<(), AgentError> {
        for net in [&self.online, &self.target] {
            if net.input_dim() != FEATURE_LEN || net.output_dim() != 1 {
                return Err(AgentError::Shape {
                    expected: vec![FEATURE_LEN, 1],
                    found: vec![net.input_dim(), net.output_dim()],
                });
            }
        }
        if self.online.dims() != self.target.dims() {
            return Err(AgentError::Shape {
                expected: self.online.dims(),
                found: self.target.dims(),
            });
        }
        Ok(())
    }
}

/// One value network and one replay buffer per push primitive. Action
/// `u` is scored by network `u / w` on the feature vector of orientation
/// `u % w`.
#[derive(Clone, Debug)]
pub struct SplitAgent {
    pub nets: Vec<PrimitiveNet>,
    pub buffers: Vec<ReplayBuffer>,
    pub w: usize,
    pub cfg: AgentConfig,
    pub schedule: EpsilonSchedule,
    pub global_step: u64,
    name: String,
}

impl SplitAgent {
    pub fn new<R: Rng + ?Sized>(n_primitives: usize, w: usize, cfg: AgentConfig, rng: &mut R) -> Self {
        assert!(w >= 1 && n_primitives >= 1);
        let nets = (0..n_primitives).map(|_| PrimitiveNet::fresh(&cfg, rng)).collect();
        let buffers = (0..n_primitives).map(|_| ReplayBuffer::new(cfg.buffer_capacity)).collect();
        Self {
            nets,
            buffers,
            w,
            cfg,
            schedule: EpsilonSchedule::default(),
            global_step: 0,
            name: format!("SplitDQN-{n_primitives}"),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_primitives(&self) -> usize {
        self.nets.len()
    }

    /// Q-values from the online or target networks.
    fn scores(&self, state: &State, use_target: bool) -> Vec<f64> {
        assert_eq!(state.w(), self.w, "state has {} orientations, agent expects {}", state.w(), self.w);
        self.nets
            .iter()
            .flat_map(|n| {
                let net = if use_target { &n.target } else { &n.online };
                state.features.iter().map(move |f| net.predict(f.as_slice())[0])
            })
            .collect()
    }

    /// Largest target-network Q-value over the whole action space, taken
    /// as the max of per-primitive maxima.
    pub fn target_max(&self, state: &State) -> f64 {
        self.nets
            .iter()
            .map(|n| {
                state
                    .features
                    .iter()
                    .map(|f| n.target.predict(f.as_slice())[0])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `y = r` for terminal transitions, else `r + γ · max_u Q⁻(x_next, u)`.
    pub fn td_targets(&self, batch: &[&Transition]) -> Vec<f64> {
        assert!(!batch.is_empty(), "empty batch");
        batch
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + self.cfg.gamma * self.target_max(&t.next_state)
                }
            })
            .collect()
    }

    /// Loss and gradient for primitive `p` on a batch with given targets.
    pub fn batch_loss(&self, p: usize, batch: &[&Transition], targets: &[f64]) -> (f64, Gradients) {
        let net = &self.nets[p].online;
        let k = batch.len() as f64;
        let mut grads = Gradients::zeros_like(net);
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(targets) {
            debug_assert_eq!(t.action / self.w, p);
            let (q, cache) = net.forward(t.state.features[t.action % self.w].as_slice());
            let err = q[0] - y;
            loss += err * err;
            net.backward_into(&cache, &[2.0 * err / k], &mut grads);
        }
        (loss / k, grads)
    }

    /// Appends a primitive: pretrained if given, freshly initialized
    /// otherwise. Existing networks are untouched.
    pub fn add_primitive<R: Rng + ?Sized>(
        &mut self,
        pretrained: Option<PrimitiveNet>,
        rng: &mut R,
    ) -> Result<(), AgentError> {
        let net = match pretrained {
            Some(n) => {
                n.check_shape()?;
                n
            }
            None => PrimitiveNet::fresh(&self.cfg, rng),
        };
        self.nets.push(net);
        self.buffers.push(ReplayBuffer::new(self.cfg.buffer_capacity));
        self.name = format!("SplitDQN-{}", self.nets.len());
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), AgentError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (i, n) in self.nets.iter().enumerate() {
            let online = format!("p{i}.online.sqn1");
            let target = format!("p{i}.target.sqn1");
            for (file, net, adam) in [
                (&online, &n.online, n.adam.clone()),
                (&target, &n.target, AdamState::new(&n.target, n.adam.lr)),
            ] {
                let path = dir.join(file);
                nn::save_checkpoint(net, &adam, &path).map_err(|source| AgentError::Checkpoint { path, source })?;
            }
            files.push(online);
            files.push(target);
        }
        let manifest = Manifest {
            kind: "split".into(),
            w: self.w,
            primitives: (0..self.nets.len())
                .map(|i| Primitive::from_index(i).map_or_else(|| format!("primitive_{i}"), |p| p.name().to_string()))
                .collect(),
            files,
            config: self.cfg.clone(),
            schedule: ScheduleState {
                start: self.schedule.start,
                end: self.schedule.end,
                horizon: self.schedule.horizon,
                global_step: self.global_step,
            },
        };
        write_manifest(dir, &manifest)
    }

    /// Restores networks and optimizer state; replay buffers start empty.
    pub fn load(dir: impl AsRef<Path>) -> Result<SplitAgent, AgentError> {
        let dir = dir.as_ref();
        let m = read_manifest(dir)?;
        if m.kind != "split" || m.files.len() != 2 * m.primitives.len() {
            return Err(AgentError::Manifest {
                path: dir.join(super::MANIFEST_FILE),
                message: "not a split agent manifest".into(),
            });
        }
        let mut nets = Vec::new();
        for pair in m.files.chunks(2) {
            let load = |f: &String| {
                let path = dir.join(f);
                nn::load_checkpoint(&path).map_err(|source| AgentError::Checkpoint { path, source })
            };
            let (online, adam) = load(&pair[0])?;
            let (target, _) = load(&pair[1])?;
            let net = PrimitiveNet { online, target, adam };
            net.check_shape()?;
            nets.push(net);
        }
        let buffers = nets.iter().map(|_| ReplayBuffer::new(m.config.buffer_capacity)).collect();
        Ok(SplitAgent {
            name: format!("SplitDQN-{}", nets.len()),
            nets,
            buffers,
            w: m.w,
            cfg: m.config,
            schedule: EpsilonSchedule {
                start: m.schedule.start,
                end: m.schedule.end,
                horizon: m.schedule.horizon,
            },
            global_step: m.schedule.global_step,
        })
    }
}

impl QAgent for SplitAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn w(&self) -> usize {
        self.w
    }

    fn n_actions(&self) -> usize {
        self.nets.len() * self.w
    }

    fn q_values(&self, state: &State) -> Vec<f64> {
        self.scores(state, false)
    }

    fn store(&mut self, t: Transition) {
        let p = t.action / self.w;
        self.buffers[p].push(t);
    }

    fn train_step(&mut self, explored_u: usize, rng: &mut dyn RngCore) -> Option<f64> {
        let p = explored_u / self.w;
        let k = self.cfg.batch_size;
        if self.buffers[p].len() < k {
            return None;
        }
        let batch = self.buffers[p].sample(k, rng);
        let targets = self.td_targets(&batch);
        let (loss, grads) = self.batch_loss(p, &batch, &targets);
        let net = &mut self.nets[p];
        nn::adam_step(&mut net.online, &grads, &mut net.adam);
        nn::soft_update(&mut net.target, &net.online, self.cfg.tau);
        Some(loss)
    }

    fn buffer_lens(&self) -> Vec<usize> {
        self.buffers.iter().map(ReplayBuffer::len).collect()
    }

    fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    fn set_schedule(&mut self, schedule: EpsilonSchedule) {
        self.schedule = schedule;
    }

    fn global_step(&self) -> u64 {
        self.global_step
    }

    fn set_global_step(&mut self, t: u64) {
        self.global_step = t;
    }

    fn save(&self, dir: &Path) -> Result<(), AgentError> {
        SplitAgent::save(self, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn state(w: usize, fill: f64) -> Arc<State> {
        Arc::new(State {
            features: (0..w).map(|i| FeatureVector(vec![fill * (i + 1) as f64 / w as f64; FEATURE_LEN])).collect(),
        })
    }

    fn constant_net(bias: f64) -> PrimitiveNet {
        let mut online = Mlp::zeros(&[FEATURE_LEN, 4, 1]);
        online.layers[1].biases[0] = bias;
        PrimitiveNet::from_online(online, 1e-3)
    }

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            split_hidden: vec![8],
            batch_size: 4,
            ..Default::default()
        }
    }

    #[test]
    fn constant_nets_and_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = SplitAgent::new(2, 8, small_cfg(), &mut rng);
        a.nets = vec![constant_net(0.7), constant_net(0.7)];
        let q = a.q_values(&state(8, 0.3));
        assert_eq!(q, vec![0.7; 16]);
        assert_eq!(a.greedy_action(&state(8, 0.3)), 0);
        a.nets = vec![constant_net(1.0), constant_net(2.0)];
        assert_eq!(a.greedy_action(&state(8, 0.3)), 8);
    }

    #[test]
    fn store_routes_by_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = SplitAgent::new(2, 8, small_cfg(), &mut rng);
        let t = |u| Transition {
            state: state(8, 0.1),
            action: u,
            reward: -1.0,
            next_state: state(8, 0.2),
            terminal: false,
        };
        a.store(t(3));
        assert_eq!(a.buffer_lens(), vec![1, 0]);
        a.store(t(8));
        assert_eq!(a.buffer_lens(), vec![1, 1]);
    }

    #[test]
    fn td_target_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = SplitAgent::new(2, 4, small_cfg(), &mut rng);
        a.nets = vec![constant_net(2.0), constant_net(-1.0)];
        let t = |r, terminal| Transition {
            state: state(4, 0.1),
            action: 0,
            reward: r,
            next_state: state(4, 0.2),
            terminal,
        };
        let (t1, t2) = (t(10.0, true), t(-1.0, false));
        let y = a.td_targets(&[&t1, &t2]);
        assert_eq!(y[0], 10.0);
        assert!((y[1] - 0.8).abs() < 1e-12);
        a.cfg.gamma = 0.0;
        assert_eq!(a.td_targets(&[&t2]), vec![-1.0]);
    }

    #[test]
    fn underfilled_buffer_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = SplitAgent::new(2, 4, small_cfg(), &mut rng);
        assert_eq!(a.train_step(0, &mut rng), None);
    }

    #[test]
    fn add_primitive_rejects_bad_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = SplitAgent::new(2, 4, small_cfg(), &mut rng);
        let bad = PrimitiveNet::from_online(Mlp::zeros(&[100, 4, 1]), 1e-3);
        assert!(matches!(a.add_primitive(Some(bad), &mut rng), Err(AgentError::Shape { .. })));
        assert_eq!(a.n_primitives(), 2);
        a.add_primitive(None, &mut rng).unwrap();
        assert_eq!(a.n_actions(), 12);
        assert_eq!(a.name(), "SplitDQN-3");
    }
}
