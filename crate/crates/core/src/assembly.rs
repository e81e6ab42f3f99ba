//! Finite element operators of the velocity/pressure/potential spaces:
//! mass, stiffness (without viscosity), divergence, the skew-symmetric
//! convection form and its linearizations, and the L2 / Ritz projections.
//!
//! Vector local dofs are ordered `c * 6 + i` (component-major), matching the
//! block-by-component global layout.

use crate::error::{Error, Result};
use crate::linsolve::{solve_spd, PinnedSolver};
use crate::mesh::MeshTopology;
use crate::sparse::{ElementPattern, SparseOperator};
use crate::spaces::{DofMap, FieldCoefficients, SpaceKind, Tabulation, NONLINEAR_QUAD_DEGREE};

/// Tolerance for mass solves inside projections.
pub const PROJECTION_TOL: f64 = 1e-14;

/// Global indices of all local dofs (all components) of triangle `t`.
pub fn local_dofs(dofs: &DofMap, t: usize, out: &mut [usize]) {
    let nb = dofs.nodes_per_cell();
    let cell = dofs.cell(t);
    for c in 0..dofs.components() {
        let off = dofs.component_offset(c);
        for i in 0..nb {
            out[c * nb + i] = off + cell[i];
        }
    }
}

/// Square pattern coupling all local dofs of each element.
pub fn square_pattern(mesh: &MeshTopology, dofs: &DofMap) -> ElementPattern {
    let nl = dofs.nodes_per_cell() * dofs.components();
    ElementPattern::new(
        dofs.n_global(),
        dofs.n_global(),
        mesh.n_triangles(),
        nl,
        nl,
        |t, o| local_dofs(dofs, t, o),
        |t, o| local_dofs(dofs, t, o),
    )
}

fn require(dofs: &DofMap, kind: SpaceKind) -> Result<()> {
    if dofs.space() != kind {
        return Err(Error::SpaceMismatch {
            expected: kind.name().into(),
            found: dofs.space().name().into(),
        });
    }
    Ok(())
}

/// Physical basis gradients of triangle `t` at every point of `tab`.
#[inline]
fn physical_grads(mesh: &MeshTopology, t: usize, tab: &Tabulation, out: &mut Vec<[f64; 2]>) {
    let aff = mesh.affine(t);
    out.clear();
    out.extend(tab.ref_grads.iter().map(|g| aff.push_grad(*g)));
}

/// Assembles a scalar bilinear form elementwise and replicates it on every component.
fn assemble_scalar_form(
    mesh: &MeshTopology,
    dofs: &DofMap,
    degree: usize,
    kernel: impl Fn(&[f64], &[[f64; 2]], usize, usize) -> f64,
) -> SparseOperator {
    let tab = Tabulation::for_degree(dofs.space().order(), degree).expect("degree in range");
    let nb = tab.n_basis;
    let nc = dofs.components();
    let nl = nb * nc;
    let pat = square_pattern(mesh, dofs);
    let mut op = pat.zeros();
    let mut grads = Vec::new();
    let mut local = vec![0.0; nl * nl];
    for t in 0..mesh.n_triangles() {
        physical_grads(mesh, t, &tab, &mut grads);
        let jw = mesh.affine(t).det.abs();
        let mut scalar = vec![0.0; nb * nb];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * jw;
            let phi = tab.phi(q);
            let g = &grads[q * nb..(q + 1) * nb];
            for i in 0..nb {
                for j in 0..nb {
                    scalar[i * nb + j] += w * kernel(phi, g, i, j);
                }
            }
        }
        local.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..nc {
            for i in 0..nb {
                for j in 0..nb {
                    local[(c * nb + i) * nl + c * nb + j] = scalar[i * nb + j];
                }
            }
        }
        pat.scatter(&mut op, t, &local);
    }
    op
}

/// `(φ_j, φ_i)` on every component.
pub fn assemble_mass(mesh: &MeshTopology, dofs: &DofMap) -> SparseOperator {
    assemble_scalar_form(mesh, dofs, 2 * dofs.space().order(), |phi, _, i, j| phi[i] * phi[j])
}

/// `(∇φ_j, ∇φ_i)` on every component; the viscosity is applied by the caller.
pub fn assemble_stiffness(mesh: &MeshTopology, dofs: &DofMap) -> SparseOperator {
    let degree = 2 * (dofs.space().order() - 1).max(1);
    assemble_scalar_form(mesh, dofs, degree, |_, g, i, j| g[i][0] * g[j][0] + g[i][1] * g[j][1])
}

/// `∫ φ_i` for every scalar dof of the first component.
pub fn mean_vector(mesh: &MeshTopology, dofs: &DofMap) -> Vec<f64> {
    let tab = Tabulation::for_degree(dofs.space().order(), dofs.space().order()).expect("degree");
    let mut m = vec![0.0; dofs.n_scalar()];
    for t in 0..mesh.n_triangles() {
        let jw = mesh.affine(t).det.abs();
        let cell = dofs.cell(t);
        for q in 0..tab.rule.len() {
            for (i, p) in tab.phi(q).iter().enumerate() {
                m[cell[i]] += tab.rule.weights[q] * jw * p;
            }
        }
    }
    m
}

/// Pattern of the divergence operator (pressure rows, velocity columns).
pub fn divergence_pattern(mesh: &MeshTopology, vdofs: &DofMap, pdofs: &DofMap) -> ElementPattern {
    ElementPattern::new(
        pdofs.n_global(),
        vdofs.n_global(),
        mesh.n_triangles(),
        3,
        12,
        |t, o| o.copy_from_slice(pdofs.cell(t)),
        |t, o| local_dofs(vdofs, t, o),
    )
}

/// `B[q, v] = (∇·φ_v, ψ_q)` with shape `n_pressure x n_velocity`.
pub fn assemble_divergence(mesh: &MeshTopology, vdofs: &DofMap, pdofs: &DofMap) -> Result<SparseOperator> {
    require(vdofs, SpaceKind::VelocityP2Vector)?;
    if pdofs.space().order() != 1 {
        return Err(Error::SpaceMismatch {
            expected: "P1 scalar".into(),
            found: pdofs.space().name().into(),
        });
    }
    let tv = Tabulation::for_degree(2, 2)?;
    let tp = Tabulation::new(1, tv.rule.clone());
    let pat = divergence_pattern(mesh, vdofs, pdofs);
    let mut op = pat.zeros();
    let mut grads = Vec::new();
    let mut local = [0.0; 36];
    for t in 0..mesh.n_triangles() {
        physical_grads(mesh, t, &tv, &mut grads);
        let jw = mesh.affine(t).det.abs();
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..tv.rule.len() {
            let w = tv.rule.weights[q] * jw;
            let psi = tp.phi(q);
            let g = &grads[q * 6..(q + 1) * 6];
            for a in 0..3 {
                for c in 0..2 {
                    for j in 0..6 {
                        local[a * 12 + c * 6 + j] += w * psi[a] * g[j][c];
                    }
                }
            }
        }
        pat.scatter(&mut op, t, &local);
    }
    Ok(op)
}

/// Values and gradients of a P2 vector field at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointVelocity {
    pub value: [f64; 2],
    /// `grad[c][d] = ∂_d u_c`
    pub grad: [[f64; 2]; 2],
}

impl PointVelocity {
    #[inline]
    fn eval(local: &[[f64; 6]; 2], phi: &[f64], g: &[[f64; 2]]) -> Self {
        let mut out = PointVelocity::default();
        for c in 0..2 {
            for i in 0..6 {
                out.value[c] += local[c][i] * phi[i];
                out.grad[c][0] += local[c][i] * g[i][0];
                out.grad[c][1] += local[c][i] * g[i][1];
            }
        }
        out
    }

    #[inline]
    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

/// Reusable assembler for the nonlinear velocity terms (degree-6 quadrature,
/// fixed 12x12 element pattern).
#[derive(Debug, Clone)]
pub struct ConvectionAssembler {
    tab: Tabulation,
    pattern: ElementPattern,
}

impl ConvectionAssembler {
    pub fn new(mesh: &MeshTopology, vdofs: &DofMap) -> Result<Self> {
        require(vdofs, SpaceKind::VelocityP2Vector)?;
        Ok(ConvectionAssembler {
            tab: Tabulation::for_degree(2, NONLINEAR_QUAD_DEGREE)?,
            pattern: square_pattern(mesh, vdofs),
        })
    }

    pub fn pattern(&self) -> &ElementPattern {
        &self.pattern
    }

    pub fn tabulation(&self) -> &Tabulation {
        &self.tab
    }

    fn load_local(field: &FieldCoefficients, dofs: &DofMap, t: usize) -> [[f64; 6]; 2] {
        let mut l = [[0.0; 6]; 2];
        field.local(dofs, t, 0, &mut l[0]);
        field.local(dofs, t, 1, &mut l[1]);
        l
    }

    /// `N(w, u)_i = b(w, u, φ_i)`.
    pub fn apply(&self, mesh: &MeshTopology, dofs: &DofMap, w: &FieldCoefficients, u: &FieldCoefficients) -> Vec<f64> {
        let mut out = vec![0.0; dofs.n_global()];
        let mut grads = Vec::new();
        let mut idx = [0usize; 12];
        for t in 0..mesh.n_triangles() {
            physical_grads(mesh, t, &self.tab, &mut grads);
            let jw = mesh.affine(t).det.abs();
            let wl = Self::load_local(w, dofs, t);
            let ul = Self::load_local(u, dofs, t);
            let mut local = [0.0; 12];
            for q in 0..self.tab.rule.len() {
                let wq = self.tab.rule.weights[q] * jw;
                let phi = self.tab.phi(q);
                let g = &grads[q * 6..(q + 1) * 6];
                let wp = PointVelocity::eval(&wl, phi, g);
                let up = PointVelocity::eval(&ul, phi, g);
                let half_div = 0.5 * wp.div();
                for c in 0..2 {
                    let conv = wp.value[0] * up.grad[c][0] + wp.value[1] * up.grad[c][1] + half_div * up.value[c];
                    for i in 0..6 {
                        local[c * 6 + i] += wq * conv * phi[i];
                    }
                }
            }
            local_dofs(dofs, t, &mut idx);
            for (k, v) in idx.iter().zip(&local) {
                out[*k] += v;
            }
        }
        out
    }

    /// `N1 u = b(w, u, ·)` and `N2 u = b(u, w, ·)`.
    pub fn jacobian(&self, mesh: &MeshTopology, dofs: &DofMap, w: &FieldCoefficients, with_n2: bool) -> (SparseOperator, SparseOperator) {
        let mut n1 = self.pattern.zeros();
        let mut n2 = self.pattern.zeros();
        let mut grads = Vec::new();
        let mut l1 = [0.0; 144];
        let mut l2 = [0.0; 144];
        for t in 0..mesh.n_triangles() {
            physical_grads(mesh, t, &self.tab, &mut grads);
            let jw = mesh.affine(t).det.abs();
            let wl = Self::load_local(w, dofs, t);
            l1.iter_mut().for_each(|v| *v = 0.0);
            l2.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..self.tab.rule.len() {
                let wq = self.tab.rule.weights[q] * jw;
                let phi = self.tab.phi(q);
                let g = &grads[q * 6..(q + 1) * 6];
                let wp = PointVelocity::eval(&wl, phi, g);
                let half_div = 0.5 * wp.div();
                for j in 0..6 {
                    let tj = wp.value[0] * g[j][0] + wp.value[1] * g[j][1] + half_div * phi[j];
                    for i in 0..6 {
                        let v = wq * tj * phi[i];
                        l1[i * 12 + j] += v;
                        l1[(6 + i) * 12 + 6 + j] += v;
                    }
                }
                if with_n2 {
                    for c in 0..2 {
                        for d in 0..2 {
                            for j in 0..6 {
                                let tj = phi[j] * wp.grad[c][d] + 0.5 * g[j][d] * wp.value[c];
                                for i in 0..6 {
                                    l2[(c * 6 + i) * 12 + d * 6 + j] += wq * tj * phi[i];
                                }
                            }
                        }
                    }
                }
            }
            self.pattern.scatter(&mut n1, t, &l1);
            if with_n2 {
                self.pattern.scatter(&mut n2, t, &l2);
            }
        }
        (n1, n2)
    }
}

/// `b(w, u, φ_i)` for every velocity basis function.
pub fn apply_trilinear(
    mesh: &MeshTopology,
    dofs: &DofMap,
    w: &FieldCoefficients,
    u: &FieldCoefficients,
) -> Result<Vec<f64>> {
    w.check_space(dofs)?;
    u.check_space(dofs)?;
    Ok(ConvectionAssembler::new(mesh, dofs)?.apply(mesh, dofs, w, u))
}

/// Linearizations `(N1, N2)` of the convection form at `w`.
pub fn trilinear_jacobian(
    mesh: &MeshTopology,
    dofs: &DofMap,
    w: &FieldCoefficients,
) -> Result<(SparseOperator, SparseOperator)> {
    w.check_space(dofs)?;
    Ok(ConvectionAssembler::new(mesh, dofs)?.jacobian(mesh, dofs, w, true))
}

/// Right-hand side `(f, φ_i)` with the degree-6 rule.
pub fn load_vector(mesh: &MeshTopology, dofs: &DofMap, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let tab = Tabulation::for_degree(dofs.space().order(), NONLINEAR_QUAD_DEGREE).expect("degree");
    let nb = tab.n_basis;
    let nc = dofs.components();
    let mut out = vec![0.0; dofs.n_global()];
    let mut idx = vec![0usize; nb * nc];
    for t in 0..mesh.n_triangles() {
        let aff = mesh.affine(t);
        let jw = aff.det.abs();
        local_dofs(dofs, t, &mut idx);
        for q in 0..tab.rule.len() {
            let x = aff.map(tab.rule.points[q]);
            let fv = f(x);
            let w = tab.rule.weights[q] * jw;
            for c in 0..nc {
                for (i, p) in tab.phi(q).iter().enumerate() {
                    out[idx[c * nb + i]] += w * fv[c] * p;
                }
            }
        }
    }
    out
}

/// L2 projection onto the space of `dofs` (`f` returns one value per component;
/// scalar spaces read the first entry).
pub fn l2_project(mesh: &MeshTopology, dofs: &DofMap, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<FieldCoefficients> {
    let mass = assemble_mass(mesh, dofs);
    let rhs = load_vector(mesh, dofs, f);
    let values = solve_spd(&mass, &rhs, PROJECTION_TOL)?;
    Ok(FieldCoefficients {
        space: dofs.space(),
        values,
    })
}

/// Ritz projection onto a P1 scalar space with zero mean:
/// `(∇(f - σ f), ∇χ) = 0` for all `χ`. `grad_f` supplies `∇f`.
pub fn ritz_project(mesh: &MeshTopology, dofs: &DofMap, grad_f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<FieldCoefficients> {
    if dofs.components() != 1 {
        return Err(Error::SpaceMismatch {
            expected: "scalar space".into(),
            found: dofs.space().name().into(),
        });
    }
    let stiff = assemble_stiffness(mesh, dofs);
    let rhs = gradient_load(mesh, dofs, grad_f);
    let solver = PinnedSolver::new(&stiff, &[mean_vector(mesh, dofs)])?;
    Ok(FieldCoefficients {
        space: dofs.space(),
        values: solver.solve(&rhs),
    })
}

/// `(g, ∇χ_i)` for a vector function `g`, degree-6 rule.
pub fn gradient_load(mesh: &MeshTopology, dofs: &DofMap, g: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let tab = Tabulation::for_degree(dofs.space().order(), NONLINEAR_QUAD_DEGREE).expect("degree");
    let nb = tab.n_basis;
    let mut out = vec![0.0; dofs.n_scalar()];
    let mut grads = Vec::new();
    for t in 0..mesh.n_triangles() {
        let aff = mesh.affine(t);
        physical_grads(mesh, t, &tab, &mut grads);
        let jw = aff.det.abs();
        let cell = dofs.cell(t);
        for q in 0..tab.rule.len() {
            let gv = g(aff.map(tab.rule.points[q]));
            let w = tab.rule.weights[q] * jw;
            for i in 0..nb {
                let gi = grads[q * nb + i];
                out[cell[i]] += w * (gv[0] * gi[0] + gv[1] * gi[1]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_periodic_uniform_mesh;
    use crate::spaces::{build_dof_map, compute_norm, interpolate, Norm};
    use std::f64::consts::PI;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    fn random_field(dofs: &DofMap, seed: &mut u64) -> FieldCoefficients {
        FieldCoefficients {
            space: dofs.space(),
            values: (0..dofs.n_global()).map(|_| lcg(seed)).collect(),
        }
    }

    #[test]
    fn p1_reference_local_matrices() {
        // the lower triangle of the 1x1 cell on a 2x2 mesh of period 2 is the reference triangle
        let m = build_periodic_uniform_mesh(2, 2.0).unwrap();
        assert!((m.area(0) - 0.5).abs() < 1e-15);
        // assemble only element 0 via the kernel path: compare against the full operator
        // restricted to an isolated element by building a one-element contribution
        let d = build_dof_map(&m, SpaceKind::PotentialP1Scalar);
        let tab = Tabulation::for_degree(1, 2).unwrap();
        let aff = m.affine(0);
        let mut mass = [[0.0; 3]; 3];
        let mut stiff = [[0.0; 3]; 3];
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * aff.det;
            let phi = tab.phi(q);
            let g: Vec<_> = tab.dphi(q).iter().map(|g| aff.push_grad(*g)).collect();
            for i in 0..3 {
                for j in 0..3 {
                    mass[i][j] += w * phi[i] * phi[j];
                    stiff[i][j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        let em = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        // the lower triangle maps (0,0),(1,0),(1,1): the right angle sits at vertex 1
        let es = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((mass[i][j] - em[i][j] / 24.0).abs() < 1e-15);
                assert!((stiff[i][j] - 0.5 * es[i][j]).abs() < 1e-15);
            }
        }
        let _ = d;
    }

    #[test]
    fn mass_properties() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let d = build_dof_map(&m, SpaceKind::PressureP1ZeroMean);
        let mass = assemble_mass(&m, &d);
        assert!(mass.asymmetry() <= 1e-12 * mass.max_abs());
        let total: f64 = mass.values().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        // row sums = patch area / 3 = 6 triangles * (1/32) / 3
        for r in 0..16 {
            let s: f64 = mass.row(r).map(|(_, v)| v).sum();
            assert!((s - 6.0 / 32.0 / 3.0).abs() < 1e-15);
        }
        let dense = nalgebra::DMatrix::from_fn(16, 16, |i, j| mass.get(i, j));
        let eig = dense.symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        for kind in [SpaceKind::PotentialP1Scalar, SpaceKind::VelocityP2Vector] {
            let d = build_dof_map(&m, kind);
            let k = assemble_stiffness(&m, &d);
            assert!(k.asymmetry() <= 1e-12 * k.max_abs());
            let ones = vec![1.0; d.n_global()];
            assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn divergence_of_constant_and_transpose_identity() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let v = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let p = build_dof_map(&m, SpaceKind::PressureP1ZeroMean);
        let b = assemble_divergence(&m, &v, &p).unwrap();
        assert_eq!((b.n_rows(), b.n_cols()), (16, 128));
        let c = FieldCoefficients::constant(&v, &[0.3, -1.2]);
        assert!(b.mul_vec(&c.values).iter().all(|x| x.abs() < 1e-13));
        let mut seed = 11;
        let u: Vec<f64> = (0..128).map(|_| lcg(&mut seed)).collect();
        let q: Vec<f64> = (0..16).map(|_| lcg(&mut seed)).collect();
        let lhs: f64 = b.mul_vec(&u).iter().zip(&q).map(|(a, b)| a * b).sum();
        let rhs: f64 = b.transpose_mul_vec(&q).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn divergence_matches_elementwise_oracle() {
        // oracle: ∫ ψ_q ∂_x(I_h sin 2πx) by independent high-order quadrature
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let v = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let p = build_dof_map(&m, SpaceKind::PressureP1ZeroMean);
        let b = assemble_divergence(&m, &v, &p).unwrap();
        let u = interpolate(&m, &v, |x| [(2.0 * PI * x[0]).sin(), 0.0]);
        let bu = b.mul_vec(&u.values);
        let rule = crate::spaces::quadrature_rule(10).unwrap();
        let mut oracle = vec![0.0; 16];
        for t in 0..m.n_triangles() {
            let aff = m.affine(t);
            let mut loc = [0.0; 6];
            u.local(&v, t, 0, &mut loc);
            for (pt, w) in rule.points.iter().zip(&rule.weights) {
                let (_, g) = crate::spaces::evaluate_basis(2, *pt);
                let (psi, _) = crate::spaces::evaluate_basis(1, *pt);
                let mut dx = 0.0;
                for i in 0..6 {
                    dx += loc[i] * aff.push_grad(g[i])[0];
                }
                for a in 0..3 {
                    oracle[p.cell(t)[a]] += w * aff.det * psi[a] * dx;
                }
            }
        }
        for (x, y) in bu.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn trilinear_zero_and_constant_cases() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let d = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let mut seed = 5;
        let u = random_field(&d, &mut seed);
        let w = random_field(&d, &mut seed);
        let z = FieldCoefficients::zeros(&d);
        assert!(apply_trilinear(&m, &d, &z, &u).unwrap().iter().all(|v| *v == 0.0));
        // constant u: only ½((∇·w) u, v) survives
        let c = FieldCoefficients::constant(&d, &[1.0, 2.0]);
        let n = apply_trilinear(&m, &d, &w, &c).unwrap();
        let pdofs = build_dof_map(&m, SpaceKind::PressureP1ZeroMean);
        let _ = pdofs;
        let tab = Tabulation::for_degree(2, 6).unwrap();
        let mut oracle = vec![0.0; d.n_global()];
        for t in 0..m.n_triangles() {
            let aff = m.affine(t);
            let mut wl = [[0.0; 6]; 2];
            w.local(&d, t, 0, &mut wl[0]);
            w.local(&d, t, 1, &mut wl[1]);
            for q in 0..tab.rule.len() {
                let phi = tab.phi(q);
                let mut div = 0.0;
                for i in 0..6 {
                    let g = aff.push_grad(tab.dphi(q)[i]);
                    div += wl[0][i] * g[0] + wl[1][i] * g[1];
                }
                for c in 0..2 {
                    for i in 0..6 {
                        oracle[c * d.n_scalar() + d.cell(t)[i]] +=
                            tab.rule.weights[q] * aff.det * 0.5 * div * [1.0, 2.0][c] * phi[i];
                    }
                }
            }
        }
        for (a, b) in n.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn trilinear_is_skew() {
        for n_side in [4usize, 8] {
            let m = build_periodic_uniform_mesh(n_side, 1.0).unwrap();
            let d = build_dof_map(&m, SpaceKind::VelocityP2Vector);
            let asm = ConvectionAssembler::new(&m, &d).unwrap();
            let mut seed = 99 + n_side as u64;
            for _ in 0..20 {
                let w = random_field(&d, &mut seed);
                let v = random_field(&d, &mut seed);
                let b: f64 = asm.apply(&m, &d, &w, &v).iter().zip(&v.values).map(|(a, b)| a * b).sum();
                let gw = compute_norm(&m, &d, &w, Norm::H1Seminorm);
                let vh1 = compute_norm(&m, &d, &v, Norm::L2).powi(2) + compute_norm(&m, &d, &v, Norm::H1Seminorm).powi(2);
                assert!(b.abs() <= 1e-12 * (1.0 + gw) * vh1, "{b}");
            }
        }
    }

    #[test]
    fn jacobian_is_consistent() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let d = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let asm = ConvectionAssembler::new(&m, &d).unwrap();
        let mut seed = 21;
        let w = random_field(&d, &mut seed);
        let (n1, n2) = asm.jacobian(&m, &d, &w, true);
        for _ in 0..20 {
            let u = random_field(&d, &mut seed);
            let direct = asm.apply(&m, &d, &w, &u);
            let via = n1.mul_vec(&u.values);
            let scale = direct.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in direct.iter().zip(&via) {
                assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
            }
            let direct2 = asm.apply(&m, &d, &u, &w);
            let via2 = n2.mul_vec(&u.values);
            for (a, b) in direct2.iter().zip(&via2) {
                assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
            }
        }
        let z = FieldCoefficients::zeros(&d);
        let (z1, z2) = asm.jacobian(&m, &d, &z, true);
        assert_eq!(z1.max_abs(), 0.0);
        assert_eq!(z2.max_abs(), 0.0);
    }

    #[test]
    fn projections_of_constants() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let v = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let c = l2_project(&m, &v, &|_| [2.0, -1.0]).unwrap();
        let n = v.n_scalar();
        assert!(c.values[..n].iter().all(|x| (x - 2.0).abs() < 1e-12));
        assert!(c.values[n..].iter().all(|x| (x + 1.0).abs() < 1e-12));
        let s = build_dof_map(&m, SpaceKind::PotentialP1Scalar);
        let r = ritz_project(&m, &s, &|_| [0.0, 0.0]).unwrap();
        assert!(r.values.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn projection_is_idempotent() {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let v = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let mut seed = 2;
        let f = random_field(&v, &mut seed);
        let proj = l2_project(&m, &v, &|x| {
            let e = crate::spaces::evaluate_field(&m, &v, &f, x);
            [e[0], e[1]]
        })
        .unwrap();
        for (a, b) in proj.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
