//! Scene model: a target box and obstacle boxes resting on a square
//! support surface, plus random clutter generation.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Rect, Vec2};

/// Number of placement attempts per obstacle before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 255;

/// Id carried by the target box.
pub const TARGET_ID: u32 = 0;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("could not place obstacle {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },
    #[error("invalid scene generation config: {0}")]
    InvalidConfig(String),
}

/// A rectangular box resting on the support surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: u32,
    /// Half extents (x, y, z) in the box's own frame, cm.
    pub half_extents: [f64; 3],
    /// Footprint center in the workspace frame, cm.
    pub center: Vec2,
    /// Rotation about the vertical axis, in `[0, 2π)`.
    pub yaw: f64,
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Block {
    pub fn new(id: u32, extents: [f64; 3], center: Vec2, yaw: f64) -> Self {
        Self {
            id,
            half_extents: [extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0],
            center,
            yaw: wrap_angle(yaw),
        }
    }

    /// Full extents `b = [b1, b2, b3]`.
    pub fn extents(&self) -> [f64; 3] {
        [
            2.0 * self.half_extents[0],
            2.0 * self.half_extents[1],
            2.0 * self.half_extents[2],
        ]
    }

    pub fn height(&self) -> f64 {
        2.0 * self.half_extents[2]
    }

    pub fn footprint(&self) -> Rect {
        Rect::new(
            self.center,
            [self.half_extents[0], self.half_extents[1]],
            self.yaw,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub target: Block,
    pub obstacles: Vec<Block>,
    /// Half side of the square support surface, centered at the origin.
    pub workspace_half: f64,
}

/// Distances of the target center to the four workspace edges:
/// `[W - x, W + x, W + y, W - y]`, i.e. the +x, -x, -y and +y edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportDistances {
    pub s_d: [f64; 4],
}

impl SupportDistances {
    /// False once the target center has left the surface.
    pub fn on_surface(&self) -> bool {
        self.s_d.iter().all(|&d| d >= 0.0)
    }
}

impl Scene {
    pub fn new(target: Block, obstacles: Vec<Block>, workspace_half: f64) -> Self {
        Self {
            target,
            obstacles,
            workspace_half,
        }
    }

    /// Target first, then obstacles in order.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        std::iter::once(&self.target).chain(self.obstacles.iter())
    }

    pub fn min_obstacle_distance(&self) -> f64 {
        let t = self.target.footprint();
        self.obstacles
            .iter()
            .map(|o| geometry::rect_distance(&t, &o.footprint()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn support_distances(&self) -> SupportDistances {
        let w = self.workspace_half;
        let [x, y] = self.target.center;
        SupportDistances {
            s_d: [w - x, w + x, w + y, w - y],
        }
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        p[0].abs() <= self.workspace_half && p[1].abs() <= self.workspace_half
    }

    /// Rigid rotation of every box about the target center.
    pub fn rotated_about_target(&self, angle: f64) -> Scene {
        let pivot = self.target.center;
        let rot = |b: &Block| Block {
            center: geometry::add(pivot, geometry::rotate(geometry::sub(b.center, pivot), angle)),
            yaw: wrap_angle(b.yaw + angle),
            ..b.clone()
        };
        Scene {
            target: Block {
                yaw: wrap_angle(self.target.yaw + angle),
                ..self.target.clone()
            },
            obstacles: self.obstacles.iter().map(rot).collect(),
            workspace_half: self.workspace_half,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Scene> {
        serde_json::from_str(s)
    }
}

/// Random clutter parameters. Extents are full box sizes in cm.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGenConfig {
    pub n_obstacles_min: usize,
    pub n_obstacles_max: usize,
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub equal_height_prob: f64,
    pub workspace_half: f64,
    /// Target center is drawn uniformly from `[-spread, spread]^2`.
    pub target_spread: f64,
    pub seed: u64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            n_obstacles_min: 5,
            n_obstacles_max: 8,
            box_min: [1.0, 1.0, 0.5],
            box_max: [3.0, 3.0, 2.0],
            equal_height_prob: 0.0,
            workspace_half: 25.0,
            target_spread: 5.0,
            seed: 0,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidConfig(m.to_string()));
        if self.n_obstacles_min > self.n_obstacles_max {
            return bad("n_obstacles_min > n_obstacles_max");
        }
        if (0..3).any(|i| self.box_min[i] <= 0.0 || self.box_min[i] > self.box_max[i]) {
            return bad("box extents must satisfy 0 < box_min <= box_max");
        }
        if !(0.0..=1.0).contains(&self.equal_height_prob) {
            return bad("equal_height_prob outside [0, 1]");
        }
        if self.workspace_half <= 0.0 || self.target_spread < 0.0 {
            return bad("workspace dimensions must be positive");
        }
        if self.target_spread >= self.workspace_half {
            return bad("target_spread must be inside the workspace");
        }
        Ok(())
    }

    fn sample_extents<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let mut e = [0.0; 3];
        for (i, v) in e.iter_mut().enumerate() {
            *v = if self.box_max[i] > self.box_min[i] {
                rng.gen_range(self.box_min[i]..=self.box_max[i])
            } else {
                self.box_min[i]
            };
        }
        e
    }
}

/// Pushes `cand` outward along `dir` until it clears every placed block.
fn separate_outward(placed: &[Block], cand: &mut Block, dir: Vec2) -> bool {
    for _ in 0..32 {
        let fp = cand.footprint();
        let s = placed
            .iter()
            .map(|b| geometry::separation_along(&b.footprint(), &fp, dir))
            .fold(0.0, f64::max);
        if s == 0.0 {
            return true;
        }
        cand.center = geometry::add(cand.center, geometry::scale(dir, s));
    }
    false
}

/// Allowed center distance, in circumradius sums, for placement attempt
/// `attempt`. Starts at 1.5 and widens to 3.0 over the second half of the
/// attempts, so crowded draws still terminate.
fn reach_factor(attempt: usize) -> f64 {
    let half = MAX_PLACEMENT_ATTEMPTS / 2;
    if attempt < half {
        1.5
    } else {
        1.5 + 1.5 * (attempt - half) as f64 / (MAX_PLACEMENT_ATTEMPTS - half) as f64
    }
}

/// Draws a cluttered scene: a target near the workspace center with
/// obstacles packed around it.
pub fn generate_scene<R: Rng + ?Sized>(cfg: &SceneGenConfig, rng: &mut R) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let spread = cfg.target_spread;
    let center = if spread > 0.0 {
        [rng.gen_range(-spread..=spread), rng.gen_range(-spread..=spread)]
    } else {
        [0.0, 0.0]
    };
    let target = Block::new(TARGET_ID, cfg.sample_extents(rng), center, rng.gen_range(0.0..TAU));
    let n = rng.gen_range(cfg.n_obstacles_min..=cfg.n_obstacles_max);
    let equal_height = rng.gen_bool(cfg.equal_height_prob);
    let target_radius = target.footprint().circumradius();

    let mut placed = vec![target.clone()];
    for index in 0..n {
        let mut ok = false;
        for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
            let mut ext = cfg.sample_extents(rng);
            if equal_height {
                ext[2] = target.height();
            }
            let yaw = rng.gen_range(0.0..TAU);
            let phi = rng.gen_range(0.0..TAU);
            let mut cand = Block::new(index as u32 + 1, ext, target.center, yaw);
            let reach = reach_factor(attempt) * (target_radius + cand.footprint().circumradius());
            let rho = rng.gen_range(0.0..=reach);
            let dir = geometry::unit(phi);
            cand.center = geometry::add(target.center, geometry::scale(dir, rho));
            if !separate_outward(&placed, &mut cand, dir) {
                continue;
            }
            let dist = geometry::norm(geometry::sub(cand.center, target.center));
            let w = cfg.workspace_half;
            if dist <= reach && cand.center[0].abs() < w && cand.center[1].abs() < w {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SceneError::Placement {
                index,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }
    let target = placed.remove(0);
    Ok(Scene::new(target, placed, cfg.workspace_half))
}
