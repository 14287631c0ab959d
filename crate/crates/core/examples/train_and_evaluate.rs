//! Trains SplitDQN on a short schedule, saves it, reloads the checkpoint
//! and evaluates it next to the random policy.
//!
//! `cargo run --release --example train_and_evaluate -- [episodes] [out dir]`

use std::path::PathBuf;

use singulate::agent::{EpsilonSchedule, SplitAgent};
use singulate::env::EnvConfig;
use singulate::harness::{self, AgentKind, GreedyPolicy, RandomPolicy, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(Ok(200), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "trained_split".into()));

    let env = EnvConfig::default();
    let cfg = TrainConfig {
        episodes,
        schedule: EpsilonSchedule {
            horizon: 2_000,
            ..EpsilonSchedule::default()
        },
        ..TrainConfig::default()
    };
    let mut agent = AgentKind::Split.build(&env, &cfg);
    let curve = harness::train(agent.as_mut(), &env, &cfg)?;
    print!("{}", harness::curves_csv(&[curve]));
    agent.save(&out)?;

    let reloaded = SplitAgent::load(&out)?;
    let reports = [
        harness::evaluate(&GreedyPolicy::new(&reloaded), &env, 200, 1)?.report,
        harness::evaluate(&RandomPolicy { n_actions: env.n_actions() }, &env, 200, 1)?.report,
    ];
    print!("{}", harness::metrics_csv(&reports));
    Ok(())
}
