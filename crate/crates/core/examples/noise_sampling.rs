//! Samples Wiener increments, checks their variance against `k λ_{j,k}` and
//! shows that coarse increments are sums of fine ones.
//!
//! `cargo run --example noise_sampling -- [n_draws] [seed]`

use stochns::noise::{increment_field, NoiseSpec, WienerPath};

fn main() -> stochns::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let draws = args.first().copied().unwrap_or(10_000) as usize;
    let seed = args.get(1).copied().unwrap_or(1);
    let spec = NoiseSpec::default();
    let k = 1.0 / 64.0;
    let path = WienerPath::new(seed, 0, draws, k);
    let mut sq = vec![0.0; spec.n_modes()];
    for n in 0..draws {
        for (s, c) in sq.iter_mut().zip(path.fine_coefficients(&spec, n)) {
            *s += c * c;
        }
    }
    println!("j,k,sample_variance,k_lambda,ratio");
    for (j, kk) in [(1, 1), (1, 2), (3, 4), (10, 10)] {
        let var = sq[(j - 1) * spec.modes + kk - 1] / draws as f64;
        let target = k * spec.lambda(j, kk);
        println!("{j},{kk},{var:.4e},{target:.4e},{:.4}", var / target);
    }
    let coarse = path.coefficients(&spec, 0, 4)?;
    let sum: Vec<f64> = (0..4).fold(vec![0.0; spec.n_modes()], |mut acc, s| {
        for (a, b) in acc.iter_mut().zip(path.fine_coefficients(&spec, s)) {
            *a += b;
        }
        acc
    });
    println!("coarsening additivity exact: {}", coarse == sum);
    let dw = increment_field(&path, &spec, 0, 1)?;
    println!("dW(0.3, 0.7) = {:?}", dw.eval([0.3, 0.7]));
    Ok(())
}
