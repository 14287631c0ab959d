//! Resolves one action on a generated scene and writes the finger sweep as
//! JSON lines, one frame per substep.
//!
//! `cargo run --example push_trace -- [seed] [action] > trace.jsonl`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use singulate::env::{self, EnvConfig};
use singulate::physics::{self, Finger};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let u: usize = args.next().map_or(Ok(8), |s| s.parse())?;
    let cfg = EnvConfig::default();
    let ep = env::reset(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let push = env::action_to_push(u, &ep.scene, &cfg);
    let finger = Finger::for_push(cfg.finger_radius, &push);
    if physics::check_approach(&ep.scene, &push, &finger) {
        eprintln!("{} at {:.0}°: the finger hits a box on the way down", push.primitive.name(), push.theta.to_degrees());
        return Ok(());
    }
    let (outcome, frames) = physics::execute_push_traced(&ep.scene, &push, &finger)?;
    physics::write_trace(&frames, std::io::stdout().lock())?;
    eprintln!(
        "{} at {:.0}°: {} frames, moved anything: {}, clearance {:.2} -> {:.2} cm",
        push.primitive.name(),
        push.theta.to_degrees(),
        frames.len(),
        outcome.moved_any,
        ep.scene.min_obstacle_distance(),
        outcome.scene_after.min_obstacle_distance()
    );
    Ok(())
}
