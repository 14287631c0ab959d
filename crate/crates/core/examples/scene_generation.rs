//! Draws a cluttered scene and prints it as JSON together with the target's
//! clearance and distances to the workspace edges.
//!
//! `cargo run --example scene_generation -- [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use singulate::scene::{generate_scene, SceneGenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let cfg = SceneGenConfig::default();
    let scene = generate_scene(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    println!("{}", scene.to_json());
    eprintln!(
        "{} obstacles, nearest {:.2} cm from the target, edge distances {:?}",
        scene.obstacles.len(),
        scene.min_obstacle_distance(),
        scene.support_distances().s_d
    );
    Ok(())
}
