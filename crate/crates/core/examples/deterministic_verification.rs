//! Noise-free run towards the steady Taylor-Green pair with matching forcing,
//! reporting errors per mesh and the fitted orders in `h`.
//!
//! `cargo run --example deterministic_verification`

use stochns::experiments::deterministic_verify;
use stochns::stepper::SchemeConfig;
use std::time::Instant;

fn main() -> stochns::Result<()> {
    let base = SchemeConfig {
        t_final: 10.0,
        n_steps: 10,
        ..Default::default()
    };
    let start = Instant::now();
    let report = deterministic_verify(&base, &[8, 16, 32])?;
    print!("{}", report.to_csv());
    println!(
        "orders in band: {} ({:.1} s)",
        report.passes(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
