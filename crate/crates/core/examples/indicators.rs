//! Ensemble diagnostics: sample-set fractions for a range of ε, the moment
//! `E[max_n ‖u^n‖²]`, and worst per-step invariant residuals.
//!
//! `cargo run --release --example indicators -- [n_paths] [n_side] [n_steps]`

use stochns::experiments::{indicator_csv, indicator_table, max_energy_moment, path_ensemble, StudyOptions};
use stochns::stepper::SchemeConfig;

fn main() -> stochns::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let base = SchemeConfig {
        n_side: args.get(1).copied().unwrap_or(8),
        n_steps: args.get(2).copied().unwrap_or(16),
        ..Default::default()
    };
    let opts = StudyOptions {
        n_paths: args.first().copied().unwrap_or(16),
        master_seed: 11,
        threads: None,
    };
    let summaries = path_ensemble(&base, &opts, true)?;
    let rows = indicator_table(&summaries, &base, &[0.01, 0.05, 0.1, 0.2, 0.5, 1.0], 1.0, 1.0);
    print!("{}", indicator_csv(&rows));
    println!("E[max |u|^2] = {:.4e}", max_energy_moment(&summaries));
    let worst = |f: &dyn Fn(&stochns::stepper::PathSummary) -> f64| summaries.iter().map(f).fold(0.0, f64::max);
    println!("max energy residual      {:.3e}", worst(&|s| s.max_energy_residual));
    println!("max divergence residual  {:.3e}", worst(&|s| s.max_divergence_residual));
    println!("max pressure mean        {:.3e}", worst(&|s| s.max_pressure_mean));
    println!("max orthogonality        {:.3e}", worst(&|s| s.max_orthogonality_residual));
    Ok(())
}
