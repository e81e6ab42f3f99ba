//! Discrete Helmholtz split of a vector field `g` into `∇ξ + η`, with `ξ` a
//! zero-mean P1 potential and `η` orthogonal to all discrete gradients.

use crate::assembly::{assemble_stiffness, mean_vector};
use crate::error::{Error, Result};
use crate::linsolve::PinnedSolver;
use crate::mesh::MeshTopology;
use crate::noise::{velocity_at_points, DiffusionOperator, IncrementField, NoiseTable};
use crate::spaces::{evaluate_basis, DofMap, FieldCoefficients, SpaceKind, Tabulation, NONLINEAR_QUAD_DEGREE};

/// Poisson solver for the potential, factorized once per mesh.
#[derive(Debug)]
pub struct HelmholtzSolver {
    dofs: DofMap,
    solver: PinnedSolver,
    tab: Tabulation,
    grads: Vec<[[f64; 2]; 3]>,
}

/// Result of one split. `grad_xi` is constant per triangle.
#[derive(Debug, Clone)]
pub struct HelmholtzSplit {
    pub xi: FieldCoefficients,
    pub grad_xi: Vec<[f64; 2]>,
    /// `max_i |(η, ∇χ_i)| / max(1, max_i |(g, ∇χ_i)|)`
    pub orthogonality_residual: f64,
}

impl HelmholtzSplit {
    /// `η = g - ∇ξ` at the degree-6 points, ordered `(triangle, point)`.
    pub fn eta(&self, g: &[[f64; 2]], points_per_triangle: usize) -> Vec<[f64; 2]> {
        g.iter()
            .enumerate()
            .map(|(i, v)| {
                let d = self.grad_xi[i / points_per_triangle];
                [v[0] - d[0], v[1] - d[1]]
            })
            .collect()
    }
}

impl HelmholtzSolver {
    pub fn new(mesh: &MeshTopology, dofs: &DofMap) -> Result<Self> {
        if dofs.space().order() != 1 || dofs.components() != 1 {
            return Err(Error::SpaceMismatch {
                expected: SpaceKind::PotentialP1Scalar.name().into(),
                found: dofs.space().name().into(),
            });
        }
        let stiff = assemble_stiffness(mesh, dofs);
        let solver = PinnedSolver::new(&stiff, &[mean_vector(mesh, dofs)])?;
        let (_, rg) = evaluate_basis(1, [0.0, 0.0]);
        let grads = (0..mesh.n_triangles())
            .map(|t| {
                let a = mesh.affine(t);
                [a.push_grad(rg[0]), a.push_grad(rg[1]), a.push_grad(rg[2])]
            })
            .collect();
        Ok(HelmholtzSolver {
            dofs: dofs.clone(),
            solver,
            tab: Tabulation::for_degree(1, NONLINEAR_QUAD_DEGREE)?,
            grads,
        })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    fn project_gradients(&self, mesh: &MeshTopology, per_triangle: impl Fn(usize) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs.n_scalar()];
        for t in 0..mesh.n_triangles() {
            let s = per_triangle(t);
            for (a, &i) in self.dofs.cell(t).iter().enumerate() {
                let g = self.grads[t][a];
                out[i] += g[0] * s[0] + g[1] * s[1];
            }
        }
        out
    }

    /// Splits `g` given at the degree-6 points of every triangle.
    pub fn split(&self, mesh: &MeshTopology, g: &[[f64; 2]]) -> Result<HelmholtzSplit> {
        let nq = self.tab.rule.len();
        if g.len() != nq * mesh.n_triangles() {
            return Err(Error::Dimension(format!(
                "expected {} point values, found {}",
                nq * mesh.n_triangles(),
                g.len()
            )));
        }
        // (g, ∇χ) only needs ∫_T g because ∇χ is constant per triangle
        let integrals: Vec<[f64; 2]> = (0..mesh.n_triangles())
            .map(|t| {
                let jw = mesh.affine(t).det.abs();
                let mut s = [0.0; 2];
                for q in 0..nq {
                    let w = self.tab.rule.weights[q] * jw;
                    s[0] += w * g[t * nq + q][0];
                    s[1] += w * g[t * nq + q][1];
                }
                s
            })
            .collect();
        let rhs = self.project_gradients(mesh, |t| integrals[t]);
        let values = self.solver.solve(&rhs);
        let grad_xi: Vec<[f64; 2]> = (0..mesh.n_triangles())
            .map(|t| {
                let mut d = [0.0; 2];
                for (a, &i) in self.dofs.cell(t).iter().enumerate() {
                    d[0] += values[i] * self.grads[t][a][0];
                    d[1] += values[i] * self.grads[t][a][1];
                }
                d
            })
            .collect();
        let eta_proj = self.project_gradients(mesh, |t| {
            let area = mesh.area(t);
            [
                integrals[t][0] - area * grad_xi[t][0],
                integrals[t][1] - area * grad_xi[t][1],
            ]
        });
        let scale = rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let res = eta_proj.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale;
        Ok(HelmholtzSplit {
            xi: FieldCoefficients {
                space: self.dofs.space(),
                values,
            },
            grad_xi,
            orthogonality_residual: res,
        })
    }
}

/// Split of `G(u_prev) ΔW` for one step.
pub fn helmholtz_step(
    mesh: &MeshTopology,
    vdofs: &DofMap,
    solver: &HelmholtzSolver,
    diffusion: &DiffusionOperator,
    u_prev: &FieldCoefficients,
    dw: &IncrementField,
) -> Result<(HelmholtzSplit, Vec<[f64; 2]>)> {
    u_prev.check_space(vdofs)?;
    let tab = Tabulation::for_degree(2, NONLINEAR_QUAD_DEGREE)?;
    let table = NoiseTable::new(mesh, &dw.spec)?;
    let mut dwv = Vec::new();
    table.evaluate(dw, &mut dwv);
    let mut uv = Vec::new();
    velocity_at_points(mesh, vdofs, &tab, u_prev, &mut uv);
    let g: Vec<[f64; 2]> = uv
        .iter()
        .zip(&dwv)
        .map(|(u, w)| {
            let d = diffusion.apply(*u);
            [d[0] * w[0], d[1] * w[1]]
        })
        .collect();
    let split = solver.split(mesh, &g)?;
    Ok((split, g))
}
