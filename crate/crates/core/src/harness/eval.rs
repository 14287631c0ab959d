use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::Serialize;

use super::{HarnessError, TrainingCurve};
use crate::agent::QAgent;
use crate::env::{self, EnvConfig, EnvError, EpisodeState, StepLog, TerminalKind, REWARD_FAILURE};
use crate::rng::{self, streams};

/// Chooses actions during evaluation. Implementations must be pure given
/// the episode state and the per-episode generator, so episodes can run on
/// any worker.
pub trait Policy: Sync {
    fn name(&self) -> String;
    fn act(&self, ep: &EpisodeState, rng: &mut dyn RngCore) -> usize;
}

/// Uniform over the action space.
pub struct RandomPolicy {
    pub n_actions: usize,
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "Random".into()
    }

    fn act(&self, _ep: &EpisodeState, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.n_actions)
    }
}

/// ε = 0 over an agent's online Q-values.
pub struct GreedyPolicy<'a, A: QAgent + Sync + ?Sized> {
    agent: &'a A,
}

impl<'a, A: QAgent + Sync + ?Sized> GreedyPolicy<'a, A> {
    pub fn new(agent: &'a A) -> Self {
        Self { agent }
    }
}

impl<A: QAgent + Sync + ?Sized> Policy for GreedyPolicy<'_, A> {
    fn name(&self) -> String {
        self.agent.name().to_string()
    }

    fn act(&self, ep: &EpisodeState, _rng: &mut dyn RngCore) -> usize {
        self.agent.greedy_action(&ep.state)
    }
}

/// A named closure, for scripted and oracle policies.
pub struct FnPolicy<F> {
    pub name: String,
    pub f: F,
}

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&EpisodeState, &mut dyn RngCore) -> usize + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&self, ep: &EpisodeState, rng: &mut dyn RngCore) -> usize {
        (self.f)(ep, rng)
    }
}

/// One finished evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub index: usize,
    pub terminal: TerminalKind,
    pub total_reward: f64,
    pub steps: Vec<StepLog>,
}

impl EpisodeRecord {
    pub fn actions(&self) -> usize {
        self.steps.len()
    }

    pub fn success(&self) -> bool {
        self.terminal == TerminalKind::Singulated
    }
}

/// Aggregate evaluation metrics. Action statistics cover successful
/// episodes only and are NaN when there were none; reward statistics cover
/// every episode. Standard deviations are population deviations.
/// Equality compares floats by bit pattern, so identical NaNs match.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub policy: String,
    pub n_episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_actions: f64,
    pub std_actions: f64,
    pub mean_reward: f64,
    pub std_reward: f64,
}

impl PartialEq for EvalReport {
    fn eq(&self, other: &Self) -> bool {
        let bits = |r: &Self| {
            [r.success_rate, r.mean_actions, r.std_actions, r.mean_reward, r.std_reward].map(f64::to_bits)
        };
        self.policy == other.policy
            && self.n_episodes == other.n_episodes
            && self.successes == other.successes
            && bits(self) == bits(other)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Aggregates `(terminal, actions, total_reward)` per episode, in order.
    pub fn from_summaries(policy: impl Into<String>, episodes: &[(TerminalKind, usize, f64)]) -> Self {
        let successes: Vec<f64> = episodes
            .iter()
            .filter(|e| e.0 == TerminalKind::Singulated)
            .map(|e| e.1 as f64)
            .collect();
        let rewards: Vec<f64> = episodes.iter().map(|e| e.2).collect();
        let (mean_actions, std_actions) = mean_std(&successes);
        let (mean_reward, std_reward) = mean_std(&rewards);
        let n = episodes.len();
        Self {
            policy: policy.into(),
            n_episodes: n,
            successes: successes.len(),
            success_rate: if n == 0 { 0.0 } else { successes.len() as f64 / n as f64 },
            mean_actions,
            std_actions,
            mean_reward,
            std_reward,
        }
    }

    pub fn from_records(policy: impl Into<String>, records: &[EpisodeRecord]) -> Self {
        let summaries: Vec<_> = records.iter().map(|r| (r.terminal, r.actions(), r.total_reward)).collect();
        Self::from_summaries(policy, &summaries)
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}\n",
            self.policy,
            self.n_episodes,
            self.success_rate,
            self.mean_actions,
            self.std_actions,
            self.mean_reward,
            self.std_reward
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub report: EvalReport,
    pub records: Vec<EpisodeRecord>,
}

/// Plays episode `index` of the evaluation seeded by `seed`. The scene and
/// the policy's randomness come from generators keyed by `(seed, index)`,
/// so an episode's outcome does not depend on which other episodes run.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    env_cfg: &EnvConfig,
    seed: u64,
    index: usize,
) -> Result<EpisodeRecord, HarnessError> {
    let mut scene_rng = rng::stream(seed, streams::EVAL_SCENES, index as u64);
    let mut policy_rng = rng::stream(seed, streams::EVAL_POLICY, index as u64);
    let mut ep = env::reset(env_cfg, &mut scene_rng)?;
    let mut steps = Vec::new();
    let mut total = 0.0;
    loop {
        let u = policy.act(&ep, &mut policy_rng);
        let t = ep.t;
        let (reward, terminal) = match env::step(&mut ep, u, env_cfg) {
            Ok(r) => (r.reward, r.terminal),
            Err(EnvError::SimFault(_)) => (REWARD_FAILURE, TerminalKind::SimFault),
            Err(e) => return Err(e.into()),
        };
        total += reward;
        steps.push(StepLog::new(index, t, u, reward, terminal, &ep.scene));
        if terminal.is_terminal() {
            return Ok(EpisodeRecord {
                index,
                terminal,
                total_reward: total,
                steps,
            });
        }
    }
}

/// Runs `n_episodes` independent episodes, spread over the available cores
/// and merged back in episode order.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env_cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult, HarnessError> {
    env_cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n_episodes.max(1));
    let mut slots: Vec<Option<Result<EpisodeRecord, HarnessError>>> = (0..n_episodes).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = n_episodes.div_ceil(workers).max(1);
        for (c, out) in slots.chunks_mut(chunk).enumerate() {
            s.spawn(move || {
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = Some(run_episode(policy, env_cfg, seed, c * chunk + j));
                }
            });
        }
    });
    let records = slots
        .into_iter()
        .map(|r| r.expect("every episode slot is filled"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalResult {
        report: EvalReport::from_records(policy.name(), &records),
        records,
    })
}

/// Writes every step of every record as one JSON object per line.
pub fn write_trace<W: Write>(mut out: W, records: &[EpisodeRecord]) -> std::io::Result<()> {
    for step in records.iter().flat_map(|r| &r.steps) {
        serde_json::to_writer(&mut out, step)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<StepLog>, HarnessError> {
    let mut steps = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(serde_json::from_str(&line).map_err(|e| HarnessError::Trace {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(steps)
}

/// Rebuilds an [`EvalReport`] from a step trace alone.
pub fn aggregate_trace(policy: &str, steps: &[StepLog]) -> Result<EvalReport, HarnessError> {
    let mut episodes: BTreeMap<usize, (TerminalKind, usize, f64)> = BTreeMap::new();
    for (i, s) in steps.iter().enumerate() {
        let e = episodes.entry(s.episode).or_insert((TerminalKind::None, 0, 0.0));
        if e.0.is_terminal() {
            return Err(HarnessError::Trace {
                line: i + 1,
                message: format!("episode {} continues after its terminal step", s.episode),
            });
        }
        e.0 = s.terminal;
        e.1 += 1;
        e.2 += s.reward;
    }
    if let Some((k, _)) = episodes.iter().find(|(_, e)| !e.0.is_terminal()) {
        return Err(HarnessError::Trace {
            line: steps.len(),
            message: format!("episode {k} never terminates"),
        });
    }
    let summaries: Vec<_> = episodes.into_values().collect();
    Ok(EvalReport::from_summaries(policy, &summaries))
}

pub const METRICS_HEADER: &str = "policy,n,success_rate,mean_actions,std_actions,mean_reward,std_reward\n";
const CURVES_HEADER: &str = "policy,epoch,success_rate,mean_reward\n";

pub fn metrics_csv(reports: &[EvalReport]) -> String {
    let mut s = METRICS_HEADER.to_string();
    for r in reports {
        s.push_str(&r.csv_row());
    }
    s
}

pub fn curves_csv(curves: &[TrainingCurve]) -> String {
    let mut s = CURVES_HEADER.to_string();
    for c in curves {
        for p in &c.points {
            writeln!(s, "{},{},{},{}", c.policy, p.epoch, p.success_rate, p.mean_reward).expect("string write");
        }
    }
    s
}

/// Writes `report` into a metrics file, replacing any row of the same
/// policy and keeping the others. Creates the file with a header if needed.
pub fn upsert_metrics_row(path: &Path, report: &EvalReport) -> std::io::Result<()> {
    let existing = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e),
    };
    let mut out = METRICS_HEADER.to_string();
    for line in existing.lines().skip(1) {
        if line.split(',').next() != Some(report.policy.as_str()) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str(&report.csv_row());
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::decode_action;
    use crate::physics::Primitive;

    fn env4() -> EnvConfig {
        let mut cfg = EnvConfig::default().with_w(4);
        cfg.scene_cfg.n_obstacles_min = 3;
        cfg.scene_cfg.n_obstacles_max = 4;
        cfg
    }

    #[test]
    fn report_statistics() {
        let r = EvalReport::from_summaries(
            "x",
            &[
                (TerminalKind::Singulated, 1, 10.0),
                (TerminalKind::Singulated, 3, 8.0),
                (TerminalKind::Collision, 2, -11.0),
                (TerminalKind::Timeout, 20, -20.0),
            ],
        );
        assert_eq!(r.successes, 2);
        assert_eq!(r.success_rate, 0.5);
        assert_eq!(r.mean_actions, 2.0);
        assert_eq!(r.std_actions, 1.0);
        assert_eq!(r.mean_reward, -3.25);
        let none = EvalReport::from_summaries("y", &[(TerminalKind::TargetOff, 1, -10.0)]);
        assert!(none.mean_actions.is_nan());
        assert_eq!(none.success_rate, 0.0);
    }

    #[test]
    fn evaluation_is_deterministic_and_trace_reproduces_report() {
        let env = env4();
        let policy = RandomPolicy { n_actions: env.n_actions() };
        let a = evaluate(&policy, &env, 12, 7).unwrap();
        let b = evaluate(&policy, &env, 12, 7).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_trace(&mut buf, &a.records).unwrap();
        let steps = read_trace(&buf[..]).unwrap();
        assert_eq!(aggregate_trace("Random", &steps).unwrap(), a.report);
    }

    #[test]
    fn single_episode_matches_batch() {
        let env = env4();
        let policy = RandomPolicy { n_actions: env.n_actions() };
        let all = evaluate(&policy, &env, 5, 3).unwrap();
        assert_eq!(run_episode(&policy, &env, 3, 4).unwrap(), all.records[4]);
    }

    #[test]
    fn upward_sweep_above_everything_is_an_empty_push() {
        // Obstacle pushes run above the target; with every obstacle no
        // taller than the target they touch nothing.
        let mut env = env4();
        env.scene_cfg.equal_height_prob = 1.0;
        let policy = FnPolicy {
            name: "above".into(),
            f: |_: &EpisodeState, _: &mut dyn RngCore| env4().w,
        };
        assert_eq!(decode_action(env.w, env.w).0, Primitive::Obstacle);
        let res = evaluate(&policy, &env, 4, 1).unwrap();
        assert_eq!(res.report.success_rate, 0.0);
        assert_eq!(res.report.mean_reward, -5.0 * env.t_max as f64);
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport::from_summaries("Random", &[(TerminalKind::Singulated, 2, 9.0)]);
        assert_eq!(
            metrics_csv(&[r]),
            "policy,n,success_rate,mean_actions,std_actions,mean_reward,std_reward\nRandom,1,1,2,0,9,0\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let human = EvalReport::from_summaries("Human", &[(TerminalKind::Timeout, 20, -20.0)]);
        let random = EvalReport::from_summaries("Random", &[(TerminalKind::Collision, 1, -10.0)]);
        upsert_metrics_row(&path, &human).unwrap();
        upsert_metrics_row(&path, &random).unwrap();
        let human2 = EvalReport::from_summaries("Human", &[(TerminalKind::Singulated, 1, 10.0)]);
        upsert_metrics_row(&path, &human2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, metrics_csv(&[random, human2]));
    }
}
