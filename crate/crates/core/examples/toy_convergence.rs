//! Trains SplitDQN and the monolithic DQN on a small clutter setting and
//! compares their test curves with the random policy.
//!
//! `cargo run --release --example toy_convergence -- [seed] [episodes] [epsilon horizon]`

use std::time::Instant;

use singulate::agent::EpsilonSchedule;
use singulate::env::EnvConfig;
use singulate::harness::{self, AgentKind, RandomPolicy, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let episodes: usize = args.next().map_or(Ok(300), |s| s.parse())?;
    let horizon: u64 = args.next().map_or(Ok(20_000), |s| s.parse())?;

    let mut env = EnvConfig::default().with_w(4);
    env.scene_cfg.n_obstacles_min = 3;
    env.scene_cfg.n_obstacles_max = 4;
    let cfg = TrainConfig {
        episodes,
        seed,
        schedule: EpsilonSchedule {
            horizon,
            ..EpsilonSchedule::default()
        },
        ..TrainConfig::default()
    };

    let random = RandomPolicy { n_actions: env.n_actions() };
    let n_epochs = episodes / cfg.epoch_train_episodes;
    let mut random_rates = Vec::new();
    for epoch in 0..n_epochs {
        let seed = harness::epoch_test_seed(seed, epoch);
        random_rates.push(harness::evaluate(&random, &env, cfg.epoch_test_episodes, seed)?.report.success_rate);
    }
    println!("Random: final-5 {:.3} on the same test scenes", harness::final_level(&random_rates));
    for kind in [AgentKind::Split, AgentKind::Vanilla] {
        let start = Instant::now();
        let mut agent = kind.build(&env, &cfg);
        let curve = harness::train(agent.as_mut(), &env, &cfg)?;
        let rates = curve.success_rates();
        println!(
            "{}: final-5 {:.3} curve {:?} ({:.1}s, {} faults)",
            agent.name(),
            harness::final_level(&rates),
            rates,
            start.elapsed().as_secs_f64(),
            curve.sim_faults
        );
    }
    Ok(())
}
