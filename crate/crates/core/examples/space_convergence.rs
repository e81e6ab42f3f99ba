//! Strong error in space at a fixed step size: coupled runs on nested meshes
//! `h = 2^-2 .. 2^-5` sharing each Brownian path, fitted slopes per estimator.
//!
//! `cargo run --release --example space_convergence -- [n_paths] [n_steps] [seed]`

use stochns::experiments::{space_convergence_study, StudyOptions};
use stochns::stepper::SchemeConfig;
use std::time::Instant;

fn main() -> stochns::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let base = SchemeConfig {
        n_steps: args.get(1).copied().unwrap_or(64) as usize,
        ..Default::default()
    };
    let opts = StudyOptions {
        n_paths: args.first().copied().unwrap_or(8) as usize,
        master_seed: args.get(2).copied().unwrap_or(2024),
        threads: None,
    };
    let levels: Vec<f64> = (2..=5).map(|i| 2f64.powi(-i)).collect();
    let start = Instant::now();
    let table = space_convergence_study(&base, &levels, &opts)?;
    print!("{}", table.to_csv());
    print!("{}", table.rates_csv());
    println!("wall time {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
