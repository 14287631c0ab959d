use std::path::Path;

use serde::Serialize;

use super::{evaluate, train, EvalReport, GreedyPolicy, HarnessError, TrainConfig, TrainingCurve};
use crate::agent::{QAgent, SplitAgent, MANIFEST_FILE};
use crate::env::{self, EnvConfig};
use crate::rng::{self, streams};

/// Epochs averaged for a curve's final success level.
pub const FINAL_WINDOW: usize = 5;
/// Trailing epochs averaged when asking whether a curve reached a level.
pub const REACH_WINDOW: usize = 3;
const PROBE_STATES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub curve: TrainingCurve,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModularityReport {
    /// The two-primitive base agent, evaluated without the extra primitive.
    pub base: EvalReport,
    /// Base networks plus a fresh extra-primitive network.
    pub warm: RunSummary,
    /// Three fresh networks.
    pub scratch: RunSummary,
    /// Largest `|Q_warm - Q_base|` over the base actions of the probe
    /// states, before any warm-start training.
    pub probe_max_abs_diff: f64,
    /// Final success level of the scratch agent.
    pub level: f64,
    pub warm_epochs: Option<usize>,
    pub scratch_epochs: Option<usize>,
}

/// Mean success over the last [`FINAL_WINDOW`] epochs (or all of them if
/// the curve is shorter).
pub fn final_level(rates: &[f64]) -> f64 {
    let tail = &rates[rates.len().saturating_sub(FINAL_WINDOW)..];
    tail.iter().sum::<f64>() / tail.len().max(1) as f64
}

/// Number of epochs after which the trailing [`REACH_WINDOW`]-epoch mean
/// first reaches `level`.
pub fn epochs_to_reach(rates: &[f64], level: f64) -> Option<usize> {
    (REACH_WINDOW..=rates.len()).find(|&e| {
        let window = &rates[e - REACH_WINDOW..e];
        window.iter().sum::<f64>() / REACH_WINDOW as f64 >= level - 1e-12
    })
}

fn two_primitive(env_complex: &EnvConfig) -> EnvConfig {
    EnvConfig {
        extra_primitive_enabled: false,
        ..env_complex.clone()
    }
}

fn three_primitive(env_complex: &EnvConfig) -> EnvConfig {
    EnvConfig {
        extra_primitive_enabled: true,
        ..env_complex.clone()
    }
}

/// Trains the two-primitive agent on the complex clutter and saves it to
/// `checkpoint`.
pub fn train_base(env_complex: &EnvConfig, cfg: &TrainConfig, checkpoint: &Path) -> Result<RunSummary, HarnessError> {
    let env2 = two_primitive(env_complex);
    let mut init = rng::stream(cfg.seed, streams::INIT, 0);
    let mut agent = SplitAgent::new(2, env2.w, cfg.agent.clone(), &mut init);
    let curve = train(&mut agent, &env2, cfg)?;
    agent.save(checkpoint)?;
    let report = evaluate(&GreedyPolicy::new(&agent), &env2, cfg.eval_episodes, cfg.seed)?.report;
    Ok(RunSummary { curve, report })
}

/// Loads a two-primitive checkpoint and appends a freshly initialized
/// extra-primitive network. The exploration clock restarts at zero.
pub fn warm_start(checkpoint: &Path, cfg: &TrainConfig) -> Result<SplitAgent, HarnessError> {
    if !checkpoint.join(MANIFEST_FILE).is_file() {
        return Err(HarnessError::MissingCheckpoint(checkpoint.to_path_buf()));
    }
    let mut agent = SplitAgent::load(checkpoint)?;
    agent.add_primitive(None, &mut rng::stream(cfg.seed, streams::INIT, 1))?;
    agent.set_schedule(cfg.schedule);
    agent.set_global_step(0);
    Ok(agent)
}

/// Trains the warm-started and the from-scratch three-primitive agents on
/// the same seed and compares how fast they get to the scratch agent's
/// final level.
pub fn run_modularity_experiment(
    env_complex: &EnvConfig,
    cfg: &TrainConfig,
    checkpoint: &Path,
) -> Result<ModularityReport, HarnessError> {
    let env2 = two_primitive(env_complex);
    let env3 = three_primitive(env_complex);
    let mut warm = warm_start(checkpoint, cfg)?;
    let base = SplitAgent::load(checkpoint)?;
    if base.w != env3.w {
        return Err(HarnessError::ActionMismatch {
            agent: base.n_actions(),
            env: env2.n_actions(),
        });
    }

    let mut probe_rng = rng::stream(cfg.seed, streams::EVAL_SCENES, u64::MAX);
    let n_base = base.n_actions();
    let mut probe_max_abs_diff: f64 = 0.0;
    for _ in 0..PROBE_STATES {
        let ep = env::reset(&env3, &mut probe_rng)?;
        let qb = base.q_values(&ep.state);
        let qw = warm.q_values(&ep.state);
        for (a, b) in qw[..n_base].iter().zip(&qb) {
            probe_max_abs_diff = probe_max_abs_diff.max((a - b).abs());
        }
    }
    let base_report = evaluate(&GreedyPolicy::new(&base), &env2, cfg.eval_episodes, cfg.seed)?.report;

    let warm_curve = train(&mut warm, &env3, cfg)?;
    let warm_report = evaluate(&GreedyPolicy::new(&warm), &env3, cfg.eval_episodes, cfg.seed)?.report;

    let mut init = rng::stream(cfg.seed, streams::INIT, 2);
    let mut scratch = SplitAgent::new(3, env3.w, cfg.agent.clone(), &mut init).with_name("SplitDQN-3-scr");
    let scratch_curve = train(&mut scratch, &env3, cfg)?;
    let scratch_report = evaluate(&GreedyPolicy::new(&scratch), &env3, cfg.eval_episodes, cfg.seed)?.report;

    let level = final_level(&scratch_curve.success_rates());
    Ok(ModularityReport {
        base: base_report,
        warm_epochs: epochs_to_reach(&warm_curve.success_rates(), level),
        scratch_epochs: epochs_to_reach(&scratch_curve.success_rates(), level),
        warm: RunSummary {
            curve: warm_curve,
            report: warm_report,
        },
        scratch: RunSummary {
            curve: scratch_curve,
            report: scratch_report,
        },
        probe_max_abs_diff,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_and_reach() {
        let rates = [0.0, 0.2, 0.4, 0.6, 0.8, 0.8, 0.6, 0.8];
        assert!((final_level(&rates) - 0.72).abs() < 1e-12);
        assert_eq!(epochs_to_reach(&rates, 0.6), Some(5));
        assert_eq!(epochs_to_reach(&rates, 0.9), None);
        assert_eq!(epochs_to_reach(&[1.0, 1.0], 0.5), None);
        assert_eq!(final_level(&[0.5]), 0.5);
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_modularity_experiment(&EnvConfig::complex(), &TrainConfig::default(), dir.path()).unwrap_err();
        assert!(matches!(err, HarnessError::MissingCheckpoint(_)));
    }
}
