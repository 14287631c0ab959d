//! Parses a run configuration, applies a preset and prints the fully
//! expanded file that `singulate train` would store next to its outputs.
//!
//! `cargo run --example config_files -- [path]`

use singulate::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::parse("preset = complex\nw = 4\neps_horizon = 2000\n")?,
    };
    print!("{}", cfg.render());
    eprintln!("{} actions per state", cfg.env.n_actions());
    Ok(())
}
