//! Splits one realized noise forcing `G(u) ΔW` into a discrete gradient and
//! a part orthogonal to all discrete gradients.
//!
//! `cargo run --example helmholtz_split -- [n_side] [seed]`

use stochns::helmholtz::{helmholtz_step, HelmholtzSolver};
use stochns::mesh::build_periodic_uniform_mesh;
use stochns::noise::{increment_field, DiffusionOperator, NoiseSpec, WienerPath};
use stochns::spaces::{build_dof_map, interpolate, SpaceKind, NONLINEAR_QUAD_DEGREE, quadrature_rule};
use std::f64::consts::PI;

fn main() -> stochns::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(16) as usize;
    let seed = args.get(1).copied().unwrap_or(3);
    let mesh = build_periodic_uniform_mesh(n, 1.0)?;
    let v = build_dof_map(&mesh, SpaceKind::VelocityP2Vector);
    let p1 = build_dof_map(&mesh, SpaceKind::PotentialP1Scalar);
    let solver = HelmholtzSolver::new(&mesh, &p1)?;
    let u = interpolate(&mesh, &v, |x| [(2.0 * PI * x[1]).sin(), (2.0 * PI * x[0]).cos()]);
    let spec = NoiseSpec::default();
    let path = WienerPath::new(seed, 0, 16, 1.0 / 16.0);
    let dw = increment_field(&path, &spec, 0, 1)?;
    let (split, g) = helmholtz_step(&mesh, &v, &solver, &DiffusionOperator::SqrtOnePlusSquare, &u, &dw)?;
    let nq = quadrature_rule(NONLINEAR_QUAD_DEGREE)?.len();
    let eta = split.eta(&g, nq);
    let rms = |f: &[[f64; 2]]| (f.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum::<f64>() / f.len() as f64).sqrt();
    let grad_rms = (split.grad_xi.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum::<f64>() / split.grad_xi.len() as f64).sqrt();
    println!("rms |g|      {:.4e}", rms(&g));
    println!("rms |grad xi| {:.4e}", grad_rms);
    println!("rms |eta|    {:.4e}", rms(&eta));
    println!("orthogonality residual {:.3e}", split.orthogonality_residual);
    Ok(())
}
