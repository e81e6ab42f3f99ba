//! Builds the periodic mesh and the Taylor-Hood spaces, then shows P2
//! interpolation converging for a smooth field.
//!
//! `cargo run --example mesh_and_spaces`

use stochns::mesh::build_periodic_uniform_mesh;
use stochns::spaces::{build_dof_map, compute_norm, interpolate, FieldCoefficients, Norm, SpaceKind};
use std::f64::consts::PI;

fn main() -> stochns::Result<()> {
    let f = |x: [f64; 2]| [(2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin()];
    let mesh = build_periodic_uniform_mesh(4, 1.0)?;
    for line in mesh.dump().lines().take(6) {
        println!("{line}");
    }
    println!("n_side,vertices,edges,triangles,velocity_dofs,pressure_dofs,interp_l2_error");
    for n in [4, 8, 16, 32] {
        let mesh = build_periodic_uniform_mesh(n, 1.0)?;
        let v = build_dof_map(&mesh, SpaceKind::VelocityP2Vector);
        let p = build_dof_map(&mesh, SpaceKind::PressureP1ZeroMean);
        let fine = build_periodic_uniform_mesh(2 * n, 1.0)?;
        let vf = build_dof_map(&fine, SpaceKind::VelocityP2Vector);
        // interpolation error measured as the difference to the next finer interpolant
        let coarse = interpolate(&mesh, &v, f);
        let reference = interpolate(&fine, &vf, f);
        let lifted = stochns::experiments::prolong(&mesh, &v, &coarse, &fine, &vf)?;
        let diff = FieldCoefficients {
            space: SpaceKind::VelocityP2Vector,
            values: lifted.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect(),
        };
        println!(
            "{n},{},{},{},{},{},{:.3e}",
            mesh.n_vertices(),
            mesh.n_edges(),
            mesh.n_triangles(),
            v.n_global(),
            p.n_global(),
            compute_norm(&fine, &vf, &diff, Norm::L2)
        );
    }
    Ok(())
}
