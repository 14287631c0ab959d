//! The singulation MDP: discrete push actions, sparse rewards and
//! terminal classification.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_state, FeatureConfig, State};
use crate::physics::{self, Finger, Primitive, PushOutcome, PushSpec};
use crate::scene::{generate_scene, Scene, SceneError, SceneGenConfig};

/// Scene draws attempted by [`reset`] before giving up.
pub const MAX_RESET_DRAWS: usize = 255;

pub const REWARD_SINGULATED: f64 = 10.0;
pub const REWARD_FAILURE: f64 = -10.0;
pub const REWARD_EMPTY_PUSH: f64 = -5.0;
pub const REWARD_MOVED: f64 = -1.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("every scene drawn in {0} attempts was already singulated")]
    AlreadySingulated(usize),
    #[error("simulation fault: {0}")]
    SimFault(#[from] physics::PhysicsError),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub w: usize,
    pub push_distance: f64,
    pub epsilon_offset: f64,
    pub d_sing: f64,
    pub t_max: usize,
    pub alpha: f64,
    pub extra_primitive_enabled: bool,
    pub extra_penalty: f64,
    pub finger_radius: f64,
    pub feature_cfg: FeatureConfig,
    pub scene_cfg: SceneGenConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            w: 8,
            push_distance: 10.0,
            epsilon_offset: 0.5,
            d_sing: 3.0,
            t_max: 20,
            alpha: 25.0,
            extra_primitive_enabled: false,
            extra_penalty: -5.0,
            finger_radius: 0.5,
            feature_cfg: FeatureConfig::default(),
            scene_cfg: SceneGenConfig::default(),
        }
    }
}

impl EnvConfig {
    /// The harder clutter used for the extra-primitive experiments: one in
    /// five scenes has equal heights and up to 13 obstacles.
    pub fn complex() -> Self {
        let mut cfg = Self::default();
        cfg.scene_cfg.equal_height_prob = 0.2;
        cfg.scene_cfg.n_obstacles_max = 13;
        cfg
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.w == 0 || self.w != self.feature_cfg.w {
            return bad("w must be >= 1 and match feature_cfg.w");
        }
        if !(self.push_distance > 0.0 && self.d_sing > 0.0 && self.finger_radius > 0.0) {
            return bad("push_distance, d_sing and finger_radius must be positive");
        }
        if self.t_max == 0 {
            return bad("t_max must be >= 1");
        }
        self.feature_cfg.validate().map_err(EnvError::InvalidConfig)?;
        self.scene_cfg.validate()?;
        Ok(())
    }

    pub fn n_primitives(&self) -> usize {
        if self.extra_primitive_enabled {
            3
        } else {
            2
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_primitives() * self.w
    }

    /// Sets `w` on both the environment and its feature extractor.
    pub fn with_w(mut self, w: usize) -> Self {
        self.w = w;
        self.feature_cfg.w = w;
        self
    }
}

/// How a step ended the episode, if it did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalKind {
    None,
    Singulated,
    TargetOff,
    Collision,
    Timeout,
    SimFault,
}

impl TerminalKind {
    pub fn is_terminal(self) -> bool {
        self != TerminalKind::None
    }

    pub fn name(self) -> &'static str {
        match self {
            TerminalKind::None => "None",
            TerminalKind::Singulated => "Singulated",
            TerminalKind::TargetOff => "TargetOff",
            TerminalKind::Collision => "Collision",
            TerminalKind::Timeout => "Timeout",
            TerminalKind::SimFault => "SimFault",
        }
    }
}

/// Direction index and primitive of action `u`.
pub fn decode_action(u: usize, w: usize) -> (Primitive, usize) {
    let p = Primitive::from_index(u / w).expect("action index within the action space");
    (p, u % w)
}

/// Resolves action `u` against the current target into a push.
///
/// The finger always ends at `d · [cos θ, sin θ]` in the target frame, so
/// the target push and the extra push travel their approach distance plus
/// `d`.
pub fn action_to_push(u: usize, scene: &Scene, cfg: &EnvConfig) -> PushSpec {
    assert!(u < cfg.n_actions(), "action {u} outside action space of {}", cfg.n_actions());
    let (primitive, dir) = decode_action(u, cfg.w);
    let theta = TAU * dir as f64 / cfg.w as f64;
    let (c, s) = (theta.cos(), theta.sin());
    let b = scene.target.extents();
    let d = cfg.push_distance;
    match primitive {
        Primitive::Target => {
            let r = b[0].hypot(b[1]) + cfg.epsilon_offset;
            PushSpec {
                p0: [-r * c, -r * s, 0.0],
                theta,
                distance: r + d,
                primitive,
            }
        }
        Primitive::Obstacle => PushSpec {
            p0: [0.0, 0.0, b[2] + cfg.epsilon_offset],
            theta,
            distance: d,
            primitive,
        },
        Primitive::Extra => PushSpec {
            p0: [-cfg.alpha * c, -cfg.alpha * s, 0.0],
            theta,
            distance: cfg.alpha + d,
            primitive,
        },
    }
}

/// Terminal classification, in precedence order: collision, target off
/// the surface, singulation, timeout.
pub fn classify_terminal(scene_after: &Scene, outcome: &PushOutcome, t: usize, cfg: &EnvConfig) -> TerminalKind {
    if outcome.approach_collision {
        TerminalKind::Collision
    } else if outcome.target_off_surface {
        TerminalKind::TargetOff
    } else if scene_after.min_obstacle_distance() >= cfg.d_sing {
        TerminalKind::Singulated
    } else if t + 1 >= cfg.t_max {
        TerminalKind::Timeout
    } else {
        TerminalKind::None
    }
}

pub fn reward(outcome: &PushOutcome, terminal: TerminalKind, primitive: Primitive, extra_penalty: f64) -> f64 {
    let base = match terminal {
        TerminalKind::Singulated => REWARD_SINGULATED,
        TerminalKind::TargetOff | TerminalKind::Collision | TerminalKind::SimFault => REWARD_FAILURE,
        TerminalKind::None | TerminalKind::Timeout => {
            if outcome.moved_any {
                REWARD_MOVED
            } else {
                REWARD_EMPTY_PUSH
            }
        }
    };
    if primitive == Primitive::Extra {
        base + extra_penalty
    } else {
        base
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub scene: Scene,
    pub t: usize,
    pub state: Arc<State>,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub next_state: Arc<State>,
    pub reward: f64,
    pub terminal: TerminalKind,
    pub outcome: PushOutcome,
    pub push: PushSpec,
}

impl EpisodeState {
    pub fn new(scene: Scene, cfg: &EnvConfig) -> Self {
        let state = Arc::new(build_state(&scene, &cfg.feature_cfg));
        Self { scene, t: 0, state }
    }
}

/// Applies action `u`, advancing the episode in place.
pub fn step(ep: &mut EpisodeState, u: usize, cfg: &EnvConfig) -> Result<StepResult, EnvError> {
    let push = action_to_push(u, &ep.scene, cfg);
    let finger = Finger::for_push(cfg.finger_radius, &push);
    let outcome = physics::simulate(&ep.scene, &push, &finger)?;
    let terminal = classify_terminal(&outcome.scene_after, &outcome, ep.t, cfg);
    let r = reward(&outcome, terminal, push.primitive, cfg.extra_penalty);
    let next_state = Arc::new(build_state(&outcome.scene_after, &cfg.feature_cfg));
    ep.scene = outcome.scene_after.clone();
    ep.state = Arc::clone(&next_state);
    ep.t += 1;
    Ok(StepResult {
        next_state,
        reward: r,
        terminal,
        outcome,
        push,
    })
}

/// Draws a fresh, not yet singulated scene.
pub fn reset<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<EpisodeState, EnvError> {
    for _ in 0..MAX_RESET_DRAWS {
        let scene = generate_scene(&cfg.scene_cfg, rng)?;
        if scene.min_obstacle_distance() < cfg.d_sing {
            return Ok(EpisodeState::new(scene, cfg));
        }
    }
    Err(EnvError::AlreadySingulated(MAX_RESET_DRAWS))
}

/// One line of an episode trace log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub episode: usize,
    pub t: usize,
    pub u: usize,
    pub reward: f64,
    pub terminal: TerminalKind,
    /// `None` once no obstacle is left.
    pub min_dist: Option<f64>,
}

impl StepLog {
    pub fn new(episode: usize, t: usize, u: usize, reward: f64, terminal: TerminalKind, scene: &Scene) -> Self {
        let d = scene.min_obstacle_distance();
        Self {
            episode,
            t,
            u,
            reward,
            terminal,
            min_dist: d.is_finite().then_some(d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Block;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn target(b: [f64; 3]) -> Scene {
        Scene::new(Block::new(0, b, [0.0, 0.0], 0.0), vec![], 25.0)
    }

    fn outcome(moved: bool, off: bool, coll: bool, scene: &Scene) -> PushOutcome {
        PushOutcome {
            scene_after: scene.clone(),
            moved_any: moved,
            target_moved: moved,
            target_off_surface: off,
            approach_collision: coll,
            obstacles_removed: vec![],
        }
    }

    #[test]
    fn action_resolution_examples() {
        let cfg = EnvConfig::default();
        let s = target([2.0, 2.0, 1.0]);
        let p = action_to_push(0, &s, &cfg);
        assert_eq!(p.primitive, Primitive::Target);
        assert_eq!(p.theta, 0.0);
        assert!((p.p0[0] + (8f64.sqrt() + 0.5)).abs() < 1e-12);
        assert!((p.p0[0] + 3.3284).abs() < 1e-4);
        assert_eq!(&p.p0[1..], &[0.0, 0.0]);

        let p = action_to_push(8, &s, &cfg);
        assert_eq!(p.primitive, Primitive::Obstacle);
        assert_eq!(p.p0, [0.0, 0.0, 1.5]);
        assert_eq!(p.distance, 10.0);

        let cfg3 = EnvConfig {
            extra_primitive_enabled: true,
            ..EnvConfig::default()
        };
        let p = action_to_push(16, &s, &cfg3);
        assert_eq!(p.primitive, Primitive::Extra);
        assert_eq!(p.p0, [-25.0, 0.0, 0.0]);
        assert_eq!(p.distance, 35.0);
    }

    #[test]
    fn target_push_ends_at_d_along_theta() {
        let cfg = EnvConfig::default();
        let s = target([2.0, 1.0, 1.0]);
        for u in 0..cfg.w {
            let p = action_to_push(u, &s, &cfg);
            let end = p.end_world(&s);
            let want = crate::geometry::scale(p.direction(), cfg.push_distance);
            assert!((end[0] - want[0]).abs() < 1e-12 && (end[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic]
    fn action_out_of_range() {
        action_to_push(16, &target([2.0, 2.0, 1.0]), &EnvConfig::default());
    }

    #[test]
    fn action_space_sizes() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.n_actions(), 16);
        let cfg = EnvConfig {
            extra_primitive_enabled: true,
            ..cfg
        };
        assert_eq!(cfg.n_actions(), 24);
    }

    #[test]
    fn reward_examples() {
        let s = target([2.0, 2.0, 1.0]);
        let moved = outcome(true, false, false, &s);
        let still = outcome(false, false, false, &s);
        assert_eq!(reward(&moved, TerminalKind::Singulated, Primitive::Target, -5.0), 10.0);
        assert_eq!(reward(&still, TerminalKind::None, Primitive::Target, -5.0), -5.0);
        assert_eq!(reward(&moved, TerminalKind::None, Primitive::Extra, -5.0), -6.0);
    }

    #[test]
    fn terminal_examples() {
        let cfg = EnvConfig::default();
        let mut s = target([2.0, 2.0, 1.0]);
        s.obstacles.push(Block::new(1, [2.0, 2.0, 1.0], [5.0, 0.0], 0.0));
        // Gap of exactly 3 cm counts as singulated.
        assert_eq!(
            classify_terminal(&s, &outcome(true, false, false, &s), 0, &cfg),
            TerminalKind::Singulated
        );
        let mut far = s.clone();
        far.obstacles[0].center = [12.0, 0.0];
        assert_eq!(
            classify_terminal(&far, &outcome(false, false, true, &far), 0, &cfg),
            TerminalKind::Collision
        );
        let mut close = s.clone();
        close.obstacles[0].center = [2.5, 0.0];
        assert_eq!(
            classify_terminal(&close, &outcome(true, false, false, &close), 19, &cfg),
            TerminalKind::Timeout
        );
        assert_eq!(
            classify_terminal(&close, &outcome(true, false, false, &close), 18, &cfg),
            TerminalKind::None
        );
    }

    #[test]
    fn reset_is_deterministic_and_cluttered() {
        let cfg = EnvConfig::default();
        let a = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.state, b.state);
        assert_eq!(a.t, 0);
        assert!(a.scene.min_obstacle_distance() < cfg.d_sing);
    }

    #[test]
    fn reset_without_obstacles_fails() {
        let mut cfg = EnvConfig::default();
        cfg.scene_cfg.n_obstacles_min = 0;
        cfg.scene_cfg.n_obstacles_max = 0;
        assert_eq!(
            reset(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err(),
            EnvError::AlreadySingulated(MAX_RESET_DRAWS)
        );
    }

    #[test]
    fn step_collision_leaves_scene() {
        let cfg = EnvConfig::default();
        let mut s = target([2.0, 2.0, 1.0]);
        // Obstacle sitting on the target-push start point for θ = 0.
        s.obstacles.push(Block::new(1, [1.0, 1.0, 1.0], [-3.3, 0.0], 0.0));
        let mut ep = EpisodeState::new(s.clone(), &cfg);
        let r = step(&mut ep, 0, &cfg).unwrap();
        assert_eq!(r.terminal, TerminalKind::Collision);
        assert_eq!(r.reward, -10.0);
        assert_eq!(ep.scene, s);
        assert_eq!(ep.t, 1);
    }

    #[test]
    fn step_empty_push() {
        let cfg = EnvConfig::default();
        let mut s = target([2.0, 2.0, 1.0]);
        // Short neighbour, obstacle push sweeps above everything.
        s.obstacles.push(Block::new(1, [2.0, 2.0, 0.6], [2.5, 0.0], 0.0));
        let mut ep = EpisodeState::new(s, &cfg);
        let r = step(&mut ep, 8, &cfg).unwrap();
        assert_eq!(r.terminal, TerminalKind::None);
        assert_eq!(r.reward, -5.0);
    }

    #[test]
    fn step_singulates_by_pushing_target_away() {
        let cfg = EnvConfig::default();
        let mut s = target([2.0, 2.0, 1.0]);
        s.obstacles.push(Block::new(1, [2.0, 2.0, 1.0], [-2.5, 0.0], 0.0));
        let mut ep = EpisodeState::new(s, &cfg);
        // Push target towards +y, away from the obstacle on its left.
        let r = step(&mut ep, 2, &cfg).unwrap();
        assert_eq!(r.terminal, TerminalKind::Singulated);
        assert_eq!(r.reward, 10.0);
        assert!(ep.scene.min_obstacle_distance() >= 3.0);
    }
}
