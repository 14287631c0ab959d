//! Writes the heightmap of every orientation as a 16-bit PGM and prints the
//! region block of the first feature vector.
//!
//! `cargo run --example heightmaps -- [seed] [out dir]`

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use singulate::features::{build_state, rasterize_heightmap, FeatureConfig, REGIONS_PER_SIDE};
use singulate::scene::{generate_scene, SceneGenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "heightmaps".into()));
    std::fs::create_dir_all(&out)?;

    let cfg = FeatureConfig::default();
    let scene = generate_scene(&SceneGenConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    for i in 0..cfg.w {
        let h = rasterize_heightmap(&scene, cfg.theta(i), &cfg);
        let path = out.join(format!("orientation_{i}.pgm"));
        std::fs::write(&path, h.to_pgm())?;
        println!("wrote {}", path.display());
    }
    let state = build_state(&scene, &cfg);
    for row in state.features[0].z().chunks(REGIONS_PER_SIDE) {
        let line: Vec<String> = row.iter().map(|z| format!("{:.0}", z * 9.0)).collect();
        println!("{}", line.join(""));
    }
    Ok(())
}
