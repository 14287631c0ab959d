//! State features: heightmaps rasterized in the target frame at `w`
//! orientations, averaged over a 16×16 grid of regions and rescaled to
//! `[0, 1]`.
//!
//! Each orientation is rasterized straight from the box geometry rather
//! than by resampling one image, so rotating the scene about the target by
//! a multiple of `2π/w` permutes the per-orientation region blocks exactly.

use std::f64::consts::TAU;

use crate::geometry::{self, Vec2};
use crate::scene::{Scene, SupportDistances};

/// Number of regions per heightmap side.
pub const REGIONS_PER_SIDE: usize = 16;
pub const N_REGIONS: usize = REGIONS_PER_SIDE * REGIONS_PER_SIDE;
/// Region means, two target extents, the orientation and four support
/// distances.
pub const FEATURE_LEN: usize = N_REGIONS + 2 + 1 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Number of orientations.
    pub w: usize,
    pub grid_n: usize,
    /// Cell side, cm.
    pub cell_size: f64,
    pub region_n: usize,
    pub cells_per_region: usize,
    pub z_max: f64,
    pub b_max: f64,
    pub sd_max: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            w: 8,
            grid_n: 100,
            cell_size: 0.5,
            region_n: REGIONS_PER_SIDE,
            cells_per_region: 4,
            z_max: 2.0,
            b_max: 3.0,
            sd_max: 50.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.w == 0 {
            return Err("w must be at least 1".into());
        }
        if self.region_n != REGIONS_PER_SIDE {
            return Err(format!("region_n must be {REGIONS_PER_SIDE}"));
        }
        if self.cells_per_region == 0 || self.region_n * self.cells_per_region > self.grid_n {
            return Err("region window does not fit the heightmap".into());
        }
        if !(self.cell_size > 0.0 && self.z_max > 0.0 && self.b_max > 0.0 && self.sd_max > 0.0) {
            return Err("cell size and rescaling maxima must be positive".into());
        }
        Ok(())
    }

    /// Orientation of the `i`-th heightmap.
    pub fn theta(&self, i: usize) -> f64 {
        TAU * i as f64 / self.w as f64
    }
}

/// Top-down height grid centered on the target, with its x axis along
/// `theta`. Row-major, row index along the rotated y axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Heightmap {
    pub grid: Vec<f64>,
    pub n: usize,
    pub cell_size: f64,
    pub theta: f64,
}

impl Heightmap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.n + col]
    }

    /// Binary PGM (P5, 16-bit big-endian), heights in 0.01 cm units.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.n, self.n).into_bytes();
        for &h in &self.grid {
            let v = (h * 100.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }
}

fn cell_offset(index: usize, n: usize, cell: f64) -> f64 {
    (index as f64 + 0.5 - n as f64 / 2.0) * cell
}

/// Rasterizes the scene in the target frame rotated by `theta`.
pub fn rasterize_heightmap(scene: &Scene, theta: f64, cfg: &FeatureConfig) -> Heightmap {
    let n = cfg.grid_n;
    let cs = cfg.cell_size;
    let origin = scene.target.center;
    let mut grid = vec![0.0; n * n];
    let to_world = |row: usize, col: usize| -> Vec2 {
        let q = [cell_offset(col, n, cs), cell_offset(row, n, cs)];
        geometry::add(origin, geometry::rotate(q, theta))
    };
    for block in scene.blocks() {
        let fp = block.footprint();
        // Cell range covering the box, from its corners in the map frame.
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in fp.corners() {
            let l = geometry::rotate(geometry::sub(c, origin), -theta);
            for k in 0..2 {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(l[k]);
            }
        }
        let span = |a: f64, b: f64| -> Option<(usize, usize)> {
            let first = (a / cs + n as f64 / 2.0 - 0.5).floor() - 1.0;
            let last = (b / cs + n as f64 / 2.0 - 0.5).ceil() + 1.0;
            if last < 0.0 || first > (n - 1) as f64 {
                return None;
            }
            Some((first.max(0.0) as usize, last.min((n - 1) as f64) as usize))
        };
        let (Some((c0, c1)), Some((r0, r1))) = (span(lo[0], hi[0]), span(lo[1], hi[1])) else {
            continue;
        };
        let h = block.height();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = &mut grid[row * n + col];
                if h > *cell && fp.contains(to_world(row, col)) {
                    *cell = h;
                }
            }
        }
    }
    Heightmap {
        grid,
        n,
        cell_size: cs,
        theta,
    }
}

/// Means over the 16×16 regions tiling the centered window, row-major.
pub fn region_features(h: &Heightmap, cfg: &FeatureConfig) -> Vec<f64> {
    let c = cfg.cells_per_region;
    let offset = (h.n - cfg.region_n * c) / 2;
    let inv = 1.0 / (c * c) as f64;
    let mut z = Vec::with_capacity(N_REGIONS);
    for ry in 0..cfg.region_n {
        for rx in 0..cfg.region_n {
            let mut sum = 0.0;
            for y in 0..c {
                let row = offset + ry * c + y;
                for x in 0..c {
                    sum += h.at(row, offset + rx * c + x);
                }
            }
            z.push(sum * inv);
        }
    }
    z
}

/// One orientation's rescaled feature vector of length [`FEATURE_LEN`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The region block.
    pub fn z(&self) -> &[f64] {
        &self.0[..N_REGIONS]
    }

    pub fn b(&self) -> [f64; 2] {
        [self.0[N_REGIONS], self.0[N_REGIONS + 1]]
    }

    pub fn theta(&self) -> f64 {
        self.0[N_REGIONS + 2]
    }

    pub fn s_d(&self) -> &[f64] {
        &self.0[N_REGIONS + 3..]
    }
}

fn unit_clamp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn assemble_feature(
    z: &[f64],
    scene: &Scene,
    theta_i: f64,
    s_d: &SupportDistances,
    cfg: &FeatureConfig,
) -> FeatureVector {
    assert_eq!(z.len(), N_REGIONS, "region block must have {N_REGIONS} entries");
    let mut f = Vec::with_capacity(FEATURE_LEN);
    f.extend(z.iter().map(|v| unit_clamp(v / cfg.z_max)));
    let b = scene.target.extents();
    f.push(unit_clamp(b[0] / cfg.b_max));
    f.push(unit_clamp(b[1] / cfg.b_max));
    f.push(unit_clamp(theta_i / TAU));
    f.extend(s_d.s_d.iter().map(|d| unit_clamp(d / cfg.sd_max)));
    FeatureVector(f)
}

/// The per-orientation feature vectors `[f_0, …, f_{w-1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub features: Vec<FeatureVector>,
}

impl State {
    pub fn w(&self) -> usize {
        self.features.len()
    }

    /// All orientations back to back, `w · 263` entries.
    pub fn concatenated(&self) -> Vec<f64> {
        self.features.iter().flat_map(|f| f.0.iter().copied()).collect()
    }
}

pub fn build_state(scene: &Scene, cfg: &FeatureConfig) -> State {
    let s_d = scene.support_distances();
    let features = (0..cfg.w)
        .map(|i| {
            let theta = cfg.theta(i);
            let h = rasterize_heightmap(scene, theta, cfg);
            assemble_feature(&region_features(&h, cfg), scene, theta, &s_d, cfg)
        })
        .collect();
    State { features }
}
