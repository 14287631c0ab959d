//! Training loop, evaluation protocol, metrics files and the modularity
//! experiment.

mod eval;
mod modularity;

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{
    aggregate_trace, curves_csv, evaluate, metrics_csv, read_trace, run_episode, upsert_metrics_row, write_trace,
    EpisodeRecord, EvalReport, EvalResult, FnPolicy, GreedyPolicy, Policy, RandomPolicy, METRICS_HEADER,
};
pub use modularity::{
    epochs_to_reach, final_level, run_modularity_experiment, train_base, warm_start, ModularityReport, RunSummary,
    FINAL_WINDOW, REACH_WINDOW,
};

use crate::agent::{select_action, AgentConfig, AgentError, EpsilonSchedule, QAgent, SplitAgent, Transition, VanillaAgent};
use crate::env::{self, EnvConfig, EnvError};
use crate::rng::{self, streams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("agent acts over {agent} actions but the environment has {env}")]
    ActionMismatch { agent: usize, env: usize },
    #[error("no agent checkpoint at {0}")]
    MissingCheckpoint(PathBuf),
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
}

/// Episode budget, learning hyperparameters and the run seed.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Training episodes per epoch; a test pass follows every epoch.
    pub epoch_train_episodes: usize,
    pub epoch_test_episodes: usize,
    /// Random-action transitions loaded into every replay buffer first.
    pub preload: usize,
    /// Episodes of the final evaluation run by the CLI.
    pub eval_episodes: usize,
    pub seed: u64,
    pub agent: AgentConfig,
    pub schedule: EpsilonSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 3000,
            epoch_train_episodes: 20,
            epoch_test_episodes: 10,
            preload: 1000,
            eval_episodes: 1000,
            seed: 0,
            agent: AgentConfig::default(),
            schedule: EpsilonSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.epoch_train_episodes == 0 || self.epoch_test_episodes == 0 {
            return bad("epoch sizes must be positive");
        }
        let a = &self.agent;
        if a.batch_size == 0 || a.buffer_capacity < a.batch_size {
            return bad("batch_size must be positive and fit in the buffer");
        }
        if !(0.0..=1.0).contains(&a.tau) || !(0.0..=1.0).contains(&a.gamma) || a.lr <= 0.0 {
            return bad("tau and gamma must lie in [0, 1] and lr must be positive");
        }
        let s = &self.schedule;
        if !(0.0 < s.end && s.end <= s.start && s.start <= 1.0) || s.horizon == 0 {
            return bad("schedule needs 0 < end <= start <= 1 and a positive horizon");
        }
        Ok(())
    }
}

/// Which agent architecture to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    Split,
    Vanilla,
}

impl AgentKind {
    pub fn parse(s: &str) -> Option<AgentKind> {
        match s {
            "split" | "splitdqn" => Some(AgentKind::Split),
            "dqn" | "vanilla" => Some(AgentKind::Vanilla),
            _ => None,
        }
    }

    /// Fresh agent for `env_cfg`, initialized from the run seed.
    pub fn build(self, env_cfg: &EnvConfig, train_cfg: &TrainConfig) -> Box<dyn QAgent + Send + Sync> {
        let mut init = rng::stream(train_cfg.seed, streams::INIT, 0);
        let (n, w, cfg) = (env_cfg.n_primitives(), env_cfg.w, train_cfg.agent.clone());
        let mut agent: Box<dyn QAgent + Send + Sync> = match self {
            AgentKind::Split => Box::new(SplitAgent::new(n, w, cfg, &mut init)),
            AgentKind::Vanilla => Box::new(VanillaAgent::new(n, w, cfg, &mut init)),
        };
        agent.set_schedule(train_cfg.schedule);
        agent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Greedy test performance after every training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub policy: String,
    pub points: Vec<CurvePoint>,
    /// Training episodes cut short by a simulation fault.
    pub sim_faults: usize,
}

impl TrainingCurve {
    pub fn new(policy: impl Into<String>) -> Self {
        Self {
            policy: policy.into(),
            points: Vec::new(),
            sim_faults: 0,
        }
    }

    pub fn success_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.success_rate).collect()
    }
}

fn check_compatible<A: QAgent + ?Sized>(agent: &A, env_cfg: &EnvConfig) -> Result<(), HarnessError> {
    if agent.n_actions() != env_cfg.n_actions() || agent.w() != env_cfg.w {
        return Err(HarnessError::ActionMismatch {
            agent: agent.n_actions(),
            env: env_cfg.n_actions(),
        });
    }
    Ok(())
}

/// Fills every replay buffer of `agent` with at least `per_buffer`
/// transitions collected by uniformly random actions. Returns the number
/// of environment steps taken.
pub fn preload<A: QAgent + ?Sized, R: Rng + ?Sized>(
    agent: &mut A,
    env_cfg: &EnvConfig,
    per_buffer: usize,
    rng: &mut R,
) -> Result<usize, HarnessError> {
    check_compatible(agent, env_cfg)?;
    let full = |a: &A| a.buffer_lens().iter().all(|&l| l >= per_buffer);
    let mut steps = 0;
    while !full(agent) {
        let mut ep = env::reset(env_cfg, rng)?;
        loop {
            let u = rng.gen_range(0..env_cfg.n_actions());
            let prev = Arc::clone(&ep.state);
            steps += 1;
            match env::step(&mut ep, u, env_cfg) {
                Ok(r) => {
                    agent.store(Transition {
                        state: prev,
                        action: u,
                        reward: r.reward,
                        next_state: r.next_state,
                        terminal: r.terminal.is_terminal(),
                    });
                    if r.terminal.is_terminal() || full(agent) {
                        break;
                    }
                }
                Err(EnvError::SimFault(_)) => break,
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(steps)
}

/// Evaluation seed of the test pass after `epoch`. Every policy trained
/// with run seed `seed` is tested on the same scenes.
pub fn epoch_test_seed(seed: u64, epoch: usize) -> u64 {
    rng::derive(seed, streams::TEST_EPOCH, epoch as u64)
}

/// Trains `agent` in place and returns its per-epoch test curve.
///
/// Training scenes, exploration draws, minibatch sampling and test scenes
/// each come from their own stream of `train_cfg.seed`, so the run is
/// reproducible and the test scenes of an epoch do not depend on how much
/// randomness training consumed.
pub fn train<A: QAgent + Sync + ?Sized>(
    agent: &mut A,
    env_cfg: &EnvConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainingCurve, HarnessError> {
    env_cfg.validate()?;
    train_cfg.validate()?;
    check_compatible(agent, env_cfg)?;
    let mut curve = TrainingCurve::new(agent.name());
    if train_cfg.episodes == 0 {
        return Ok(curve);
    }
    let seed = train_cfg.seed;
    let schedule = train_cfg.schedule;
    agent.set_schedule(schedule);
    preload(agent, env_cfg, train_cfg.preload, &mut rng::stream(seed, streams::PRELOAD, 0))?;

    let mut scene_rng = rng::stream(seed, streams::TRAIN_SCENES, 0);
    let mut action_rng = rng::stream(seed, streams::ACTIONS, 0);
    let mut sample_rng = rng::stream(seed, streams::SAMPLING, 0);
    let mut t = agent.global_step();
    for episode in 0..train_cfg.episodes {
        let mut ep = env::reset(env_cfg, &mut scene_rng)?;
        loop {
            let u = select_action(&*agent, &ep.state, t, &schedule, &mut action_rng);
            let prev = Arc::clone(&ep.state);
            match env::step(&mut ep, u, env_cfg) {
                Ok(r) => {
                    let done = r.terminal.is_terminal();
                    agent.store(Transition {
                        state: prev,
                        action: u,
                        reward: r.reward,
                        next_state: r.next_state,
                        terminal: done,
                    });
                    agent.train_step(u, &mut sample_rng);
                    t += 1;
                    agent.set_global_step(t);
                    if done {
                        break;
                    }
                }
                Err(EnvError::SimFault(_)) => {
                    curve.sim_faults += 1;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if (episode + 1) % train_cfg.epoch_train_episodes == 0 {
            let epoch = (episode + 1) / train_cfg.epoch_train_episodes - 1;
            let res = evaluate(
                &GreedyPolicy::new(&*agent),
                env_cfg,
                train_cfg.epoch_test_episodes,
                epoch_test_seed(seed, epoch),
            )?;
            curve.points.push(CurvePoint {
                epoch,
                success_rate: res.report.success_rate,
                mean_reward: res.report.mean_reward,
            });
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_env() -> EnvConfig {
        let mut cfg = EnvConfig::default().with_w(4);
        cfg.scene_cfg.n_obstacles_min = 3;
        cfg.scene_cfg.n_obstacles_max = 4;
        cfg
    }

    pub(crate) fn tiny_train(episodes: usize) -> TrainConfig {
        TrainConfig {
            episodes,
            epoch_train_episodes: 2,
            epoch_test_episodes: 2,
            preload: 70,
            agent: AgentConfig {
                batch_size: 8,
                buffer_capacity: 200,
                split_hidden: vec![8],
                vanilla_hidden: vec![8],
                ..AgentConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_episodes_leaves_agent_untouched() {
        let env = tiny_env();
        let cfg = tiny_train(0);
        let mut agent = AgentKind::Split.build(&env, &cfg);
        let probe = env::reset(&env, &mut rng::stream(1, 0, 0)).unwrap();
        let before = agent.q_values(&probe.state);
        let curve = train(agent.as_mut(), &env, &cfg).unwrap();
        assert!(curve.points.is_empty());
        assert_eq!(agent.q_values(&probe.state), before);
        assert_eq!(agent.buffer_lens(), vec![0, 0]);
    }

    #[test]
    fn curve_length_and_determinism() {
        let env = tiny_env();
        let cfg = tiny_train(5);
        let run = || {
            let mut agent = AgentKind::Split.build(&env, &cfg);
            let curve = train(agent.as_mut(), &env, &cfg).unwrap();
            (curve, agent.global_step())
        };
        let (a, steps) = run();
        assert_eq!(a.points.len(), 2);
        assert!(steps > 0);
        assert_eq!(run().0, a);
    }

    #[test]
    fn preload_fills_every_buffer() {
        let env = tiny_env();
        let cfg = tiny_train(0);
        let mut agent = AgentKind::Split.build(&env, &cfg);
        preload(agent.as_mut(), &env, 30, &mut rng::stream(3, 0, 0)).unwrap();
        assert!(agent.buffer_lens().iter().all(|&l| l >= 30));
    }

    #[test]
    fn mismatched_agent_is_rejected() {
        let env = tiny_env();
        let cfg = tiny_train(1);
        let mut agent = AgentKind::Vanilla.build(&env.clone().with_w(2), &cfg);
        assert!(matches!(
            train(agent.as_mut(), &env, &cfg),
            Err(HarnessError::ActionMismatch { .. })
        ));
    }
}
