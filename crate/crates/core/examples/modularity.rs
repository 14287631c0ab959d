//! Warm-starts a three-primitive agent from a trained two-primitive one and
//! races it against a three-primitive agent trained from scratch.
//!
//! `cargo run --release --example modularity -- [seed] [episodes] [epsilon horizon] [max obstacles]`

use std::time::Instant;

use singulate::agent::EpsilonSchedule;
use singulate::env::EnvConfig;
use singulate::harness::{self, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let episodes: usize = args.next().map_or(Ok(300), |s| s.parse())?;
    let horizon: u64 = args.next().map_or(Ok(2_000), |s| s.parse())?;
    let max_obstacles: usize = args.next().map_or(Ok(6), |s| s.parse())?;

    let mut env = EnvConfig::complex().with_w(4);
    env.scene_cfg.n_obstacles_min = 3;
    env.scene_cfg.n_obstacles_max = max_obstacles;
    let cfg = TrainConfig {
        episodes,
        eval_episodes: 100,
        seed,
        schedule: EpsilonSchedule {
            horizon,
            ..EpsilonSchedule::default()
        },
        ..TrainConfig::default()
    };

    let dir = std::env::temp_dir().join(format!("singulate-modularity-{seed}"));
    let start = Instant::now();
    let base = harness::train_base(&env, &cfg, &dir)?;
    println!(
        "SplitDQN-2: final-5 {:.3}, eval success {:.3}",
        harness::final_level(&base.curve.success_rates()),
        base.report.success_rate
    );
    let rep = harness::run_modularity_experiment(&env, &cfg, &dir)?;
    println!("warm start reproduces the base Q-values to within {:e}", rep.probe_max_abs_diff);
    for run in [&rep.warm, &rep.scratch] {
        println!(
            "{}: eval success {:.3}, curve {:?}",
            run.report.policy,
            run.report.success_rate,
            run.curve.success_rates()
        );
    }
    println!(
        "epochs to reach {:.3}: warm {:?}, scratch {:?} ({:.1}s)",
        rep.level,
        rep.warm_epochs,
        rep.scratch_epochs,
        start.elapsed().as_secs_f64()
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
