//! Discrete inf-sup constant of the P2/P1 pair under mesh refinement.
//!
//! `cargo run --example inf_sup -- [max_n_side]`

use stochns::experiments::inf_sup_constant;

fn main() -> stochns::Result<()> {
    let max: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(16);
    println!("n_side,beta");
    let mut n = 4;
    while n <= max {
        println!("{n},{:.6}", inf_sup_constant(n, 1.0)?);
        n *= 2;
    }
    Ok(())
}
