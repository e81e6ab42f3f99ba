//! Simulates one noise path with the default stochastic forcing and prints the
//! per-step energy and invariant diagnostics.
//!
//! `cargo run --example single_path -- [n_side] [n_steps] [seed]`

use stochns::noise::WienerPath;
use stochns::stepper::{run_path, SchemeConfig};
use std::time::Instant;

fn main() -> stochns::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let config = SchemeConfig {
        n_side: args.first().copied().unwrap_or(8),
        n_steps: args.get(1).copied().unwrap_or(16),
        ..Default::default()
    };
    let seed = args.get(2).copied().unwrap_or(1) as u64;
    let path = WienerPath::new(seed, 0, config.n_steps, config.dt());
    let start = Instant::now();
    let summary = run_path(&config, &path, None)?;
    let elapsed = start.elapsed().as_secs_f64();
    println!("step,l2,h1");
    for (n, (a, b)) in summary.l2_history.iter().zip(&summary.h1_history).enumerate() {
        println!("{},{a:.6e},{b:.6e}", n + 1);
    }
    println!("max energy residual     {:.3e}", summary.max_energy_residual);
    println!("max divergence residual {:.3e}", summary.max_divergence_residual);
    println!("max pressure mean       {:.3e}", summary.max_pressure_mean);
    println!("max orthogonality       {:.3e}", summary.max_orthogonality_residual);
    println!(
        "nonlinear iterations    {} ({} fallbacks)",
        summary.total_iterations, summary.fallbacks
    );
    println!("wall time {:.2} s ({:.1} ms/step)", elapsed, 1e3 * elapsed / config.n_steps as f64);
    Ok(())
}
