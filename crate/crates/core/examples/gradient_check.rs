//! Compares backpropagated gradients with central differences on random
//! networks of the per-primitive shape.
//!
//! `cargo run --release --example gradient_check -- [nets] [seed]`

use singulate::nn;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let nets: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let r = nn::gradient_check(&[263, 100, 100, 1], nets, seed);
    println!(
        "{} nets, {} parameters, {} kink crossings skipped, max relative error {:.3e}",
        r.nets, r.params_checked, r.kinks_skipped, r.max_rel_error
    );
    Ok(())
}
