//! Linear solvers: Jacobi-preconditioned CG for SPD operators, sparse LU and
//! Cholesky (faer) for the mean-constrained Poisson and Stokes-type saddle
//! systems, and a pressure Schur-complement solver for block-diagonal SPD
//! velocity operators.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Default relative tolerance for every linear solve.
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients; `‖A x - b‖ <= tol ‖b‖` on success.
pub fn solve_spd(op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = op.n_rows();
    if op.n_cols() != n || rhs.len() != n {
        return Err(Error::Dimension(format!(
            "solve_spd: operator {}x{}, rhs {}",
            op.n_rows(),
            op.n_cols(),
            rhs.len()
        )));
    }
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = 10 * n + 100;
    let mut res = 1.0;
    for _ in 0..cap {
        op.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular {
                block: "spd".into(),
                detail: format!("non-positive curvature p^T A p = {pap:.3e}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            // guard against drift of the recursive residual
            let true_res = norm2(&sub(&op.mul_vec(&x), rhs)) / bnorm;
            if true_res <= tol {
                return Ok(x);
            }
            res = true_res;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: cap,
        residual: res,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Reusable symbolic analysis for matrices sharing one sparsity pattern.
#[derive(Clone)]
pub struct LuSymbolic {
    symbolic: SymbolicLu<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    n: usize,
}

impl LuSymbolic {
    pub fn analyze(op: &SparseOperator) -> Result<Self> {
        let n = op.n_rows();
        if op.n_cols() != n {
            return Err(Error::Dimension("LU needs a square matrix".into()));
        }
        let (col_ptr, row_idx, _) = op.to_csc();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| Error::Singular {
            block: "symbolic".into(),
            detail: format!("{e:?}"),
        })?;
        Ok(LuSymbolic {
            symbolic,
            col_ptr,
            row_idx,
            n,
        })
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct LuFactorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl LuFactorization {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        let sym = LuSymbolic::analyze(op)?;
        Self::with_symbolic(&sym, op)
    }

    /// Numeric factorization reusing an existing analysis of the same pattern.
    pub fn with_symbolic(sym: &LuSymbolic, op: &SparseOperator) -> Result<Self> {
        let (col_ptr, row_idx, vals) = op.to_csc();
        if col_ptr != sym.col_ptr || row_idx != sym.row_idx {
            return Err(Error::Dimension("matrix pattern differs from symbolic analysis".into()));
        }
        let s = SymbolicSparseColMatRef::new_checked(sym.n, sym.n, &sym.col_ptr, None, &sym.row_idx);
        let mat = SparseColMatRef::new(s, &vals);
        let lu = Lu::try_new_with_symbolic(sym.symbolic.clone(), mat).map_err(|e| Error::Singular {
            block: "lu".into(),
            detail: format!("{e:?}"),
        })?;
        let f = LuFactorization { lu, n: sym.n };
        // zero pivots surface as non-finite or inaccurate solves
        let probe: Vec<f64> = (0..f.n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let x = f.solve(&probe);
        let res = norm2(&sub(&op.mul_vec(&x), &probe));
        if !x.iter().all(|v| v.is_finite()) || !(res <= 1e-6 * norm2(&probe)) {
            return Err(Error::Singular {
                block: "lu".into(),
                detail: format!("probe residual {res:e}"),
            });
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.lu.solve_in_place(m);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Sparse Cholesky factorization of an SPD operator (upper triangle read).
pub struct CholeskyFactorization {
    llt: Llt<usize, f64>,
    n: usize,
}

impl CholeskyFactorization {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        let n = op.n_rows();
        if op.n_cols() != n {
            return Err(Error::Dimension("Cholesky needs a square matrix".into()));
        }
        let (col_ptr, row_idx, vals) = op.to_csc();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let err = |detail: String| Error::Singular {
            block: "cholesky".into(),
            detail,
        };
        let symbolic = SymbolicLlt::try_new(sym, Side::Upper).map_err(|e| err(format!("{e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic, SparseColMatRef::new(sym, &vals), Side::Upper)
            .map_err(|e| err(format!("{e:?}")))?;
        Ok(CholeskyFactorization { llt, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(x, self.n, 1);
        self.llt.solve_in_place(m);
    }
}

/// Saddle solver for `A = diag(A_s, ..., A_s)` with `A_s` SPD, using a
/// factorized dense pressure Schur complement `B A^{-1} B^T + m m^T`.
///
/// Solves the same system as [`SaddleSolver`]:
/// `A u - B^T p = f`, `-B u + m l = g`, `m · p = 0`. Requires `1^T B = 0`.
pub struct SchurSaddleSolver {
    block: CholeskyFactorization,
    components: usize,
    b: SparseOperator,
    mean: Vec<f64>,
    schur: Cholesky<f64, Dyn>,
}

impl SchurSaddleSolver {
    pub fn new(block: &SparseOperator, components: usize, b: &SparseOperator, mean: &[f64]) -> Result<Self> {
        let ns = block.n_rows();
        let np = b.n_rows();
        if b.n_cols() != ns * components || mean.len() != np {
            return Err(Error::Dimension(format!(
                "schur blocks: A_s {ns}, {components} components, B {}x{}, mean {}",
                b.n_rows(),
                b.n_cols(),
                mean.len()
            )));
        }
        let chol = CholeskyFactorization::new(block).map_err(|e| match e {
            Error::Singular { detail, .. } => Error::Singular {
                block: "velocity".into(),
                detail,
            },
            other => other,
        })?;
        let mut s = DMatrix::<f64>::zeros(np, np);
        let mut col = vec![0.0; ns * components];
        for q in 0..np {
            col.iter_mut().for_each(|v| *v = 0.0);
            for (c, v) in b.row(q) {
                col[c] = v;
            }
            for chunk in col.chunks_mut(ns) {
                chol.solve_in_place(chunk);
            }
            let sq = b.mul_vec(&col);
            for (r, v) in sq.iter().enumerate() {
                s[(r, q)] = *v + mean[r] * mean[q];
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let schur = Cholesky::new(s).ok_or_else(|| Error::Singular {
            block: "pressure".into(),
            detail: "Schur complement is not positive definite".into(),
        })?;
        Ok(SchurSaddleSolver {
            block: chol,
            components,
            b: b.clone(),
            mean: mean.to_vec(),
            schur,
        })
    }

    fn solve_a(&self, x: &mut [f64]) {
        let ns = self.block.dim();
        for c in 0..self.components {
            self.block.solve_in_place(&mut x[c * ns..(c + 1) * ns]);
        }
    }

    /// Returns `(u, p)`.
    pub fn solve(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut y = f.to_vec();
        self.solve_a(&mut y);
        let by = self.b.mul_vec(&y);
        // compatibility: 1^T B = 0 fixes the multiplier
        let lambda = g.iter().sum::<f64>() / self.mean.iter().sum::<f64>();
        let rhs = DVector::from_iterator(
            g.len(),
            (0..g.len()).map(|i| -g[i] - by[i] + self.mean[i] * lambda),
        );
        let p = self.schur.solve(&rhs);
        let mut u = f.to_vec();
        let btp = self.b.transpose_mul_vec(p.as_slice());
        for (a, b) in u.iter_mut().zip(&btp) {
            *a += b;
        }
        self.solve_a(&mut u);
        (u, p.as_slice().to_vec())
    }
}

/// Symmetric bordering `[[A, c], [c^T, 0]]` of a square operator with
/// one column per constraint vector.
pub fn border_with_constraints(a: &SparseOperator, constraints: &[Vec<f64>]) -> SparseOperator {
    let n = a.n_rows();
    let m = constraints.len();
    let mut t = a.triplets();
    for (k, c) in constraints.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            if *v != 0.0 {
                t.push((i, n + k, *v));
                t.push((n + k, i, *v));
            }
        }
    }
    SparseOperator::from_triplets(n + m, n + m, &t)
}

/// Solver for `A x = b` subject to `c_k · x = 0`, where `A` is singular
/// exactly on the span of the constraint directions (pure-periodic Poisson).
pub struct PinnedSolver {
    lu: LuFactorization,
    n: usize,
    n_constraints: usize,
}

impl std::fmt::Debug for PinnedSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PinnedSolver").field("n", &self.n).finish()
    }
}

impl PinnedSolver {
    pub fn new(a: &SparseOperator, constraints: &[Vec<f64>]) -> Result<Self> {
        let bordered = border_with_constraints(a, constraints);
        let lu = LuFactorization::new(&bordered).map_err(|e| match e {
            Error::Singular { detail, .. } => Error::Singular {
                block: "pinned poisson".into(),
                detail,
            },
            other => other,
        })?;
        Ok(PinnedSolver {
            lu,
            n: a.n_rows(),
            n_constraints: constraints.len(),
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        x.resize(self.n + self.n_constraints, 0.0);
        self.lu.solve_in_place(&mut x);
        x.truncate(self.n);
        x
    }
}

/// Block system
///
/// ```text
/// [ A   -B^T  0 ] [u]   [f]
/// [ -B   0    m ] [p] = [g]
/// [ 0    m^T  0 ] [l]   [0]
/// ```
///
/// i.e. `A u - B^T p = f`, `B u = -g + m l`, `m · p = 0`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a_block: SparseOperator,
    pub b_block: SparseOperator,
    pub mean_row: Vec<f64>,
    pub rhs_velocity: Vec<f64>,
    pub rhs_pressure: Vec<f64>,
}

/// Assembled and factorized saddle-point operator.
pub struct SaddleSolver {
    full: SparseOperator,
    /// Position in `full` of every value of the A block, in A's CSR order.
    a_positions: Vec<usize>,
    symbolic: LuSymbolic,
    lu: LuFactorization,
    nv: usize,
    np: usize,
}

impl SaddleSolver {
    pub fn new(a: &SparseOperator, b: &SparseOperator, mean: &[f64]) -> Result<Self> {
        let nv = a.n_rows();
        let np = b.n_rows();
        if a.n_cols() != nv || b.n_cols() != nv || mean.len() != np {
            return Err(Error::Dimension(format!(
                "saddle blocks: A {}x{}, B {}x{}, mean {}",
                a.n_rows(),
                a.n_cols(),
                b.n_rows(),
                b.n_cols(),
                mean.len()
            )));
        }
        let mut t = a.triplets();
        for r in 0..np {
            for (c, v) in b.row(r) {
                t.push((nv + r, c, -v));
                t.push((c, nv + r, -v));
            }
        }
        for (i, v) in mean.iter().enumerate() {
            t.push((nv + i, nv + np, *v));
            t.push((nv + np, nv + i, *v));
        }
        let n = nv + np + 1;
        let full = SparseOperator::from_triplets(n, n, &t);
        let mut a_positions = Vec::with_capacity(a.nnz());
        for r in 0..nv {
            for (c, _) in a.row(r) {
                a_positions.push(full.position(r, c).expect("A entry present"));
            }
        }
        let symbolic = LuSymbolic::analyze(&full)?;
        let lu = LuFactorization::with_symbolic(&symbolic, &full).map_err(|e| Self::diagnose(e, a, b))?;
        Ok(SaddleSolver {
            full,
            a_positions,
            symbolic,
            lu,
            nv,
            np,
        })
    }

    fn diagnose(e: Error, a: &SparseOperator, b: &SparseOperator) -> Error {
        let detail = match e {
            Error::Singular { detail, .. } => detail,
            other => return other,
        };
        let zero_a_row = (0..a.n_rows()).find(|&r| a.row(r).all(|(_, v)| v == 0.0));
        let zero_b_row = (0..b.n_rows()).find(|&r| b.row(r).all(|(_, v)| v == 0.0));
        let block = match (zero_a_row, zero_b_row) {
            (Some(r), _) => format!("velocity block (row {r} vanishes)"),
            (None, Some(r)) => format!("pressure block (row {r} of B vanishes)"),
            _ => "coupled saddle system".to_string(),
        };
        Error::Singular { block, detail }
    }

    /// Refactorizes after replacing the A block (same pattern as at construction).
    pub fn refactor(&mut self, a: &SparseOperator) -> Result<()> {
        if a.nnz() != self.a_positions.len() {
            return Err(Error::Dimension("A block pattern changed".into()));
        }
        for (p, v) in self.a_positions.iter().zip(a.values()) {
            self.full.values_mut()[*p] = *v;
        }
        self.lu = LuFactorization::with_symbolic(&self.symbolic, &self.full)?;
        Ok(())
    }

    pub fn n_velocity(&self) -> usize {
        self.nv
    }

    pub fn n_pressure(&self) -> usize {
        self.np
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.full
    }

    /// Returns `(u, p)`.
    pub fn solve(&self, rhs_velocity: &[f64], rhs_pressure: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = self.solve_full(rhs_velocity, rhs_pressure);
        let p = x[self.nv..self.nv + self.np].to_vec();
        let mut u = x;
        u.truncate(self.nv);
        (u, p)
    }

    /// Full solution vector `[u; p; multiplier]`.
    pub fn solve_full(&self, rhs_velocity: &[f64], rhs_pressure: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.nv + self.np + 1);
        x.extend_from_slice(rhs_velocity);
        x.extend_from_slice(rhs_pressure);
        x.push(0.0);
        self.lu.solve_in_place(&mut x);
        x
    }
}

/// One-shot direct solve of a saddle system; the stacked residual is checked
/// against `tol * ‖rhs‖`.
pub fn solve_saddle(sys: &SaddleSystem, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = SaddleSolver::new(&sys.a_block, &sys.b_block, &sys.mean_row)?;
    let x = solver.solve_full(&sys.rhs_velocity, &sys.rhs_pressure);
    let mut rhs = sys.rhs_velocity.clone();
    rhs.extend_from_slice(&sys.rhs_pressure);
    rhs.push(0.0);
    let res = norm2(&sub(&solver.operator().mul_vec(&x), &rhs));
    let scale = norm2(&rhs);
    if res > tol * scale {
        return Err(Error::NoConvergence {
            iterations: 1,
            residual: res / scale,
        });
    }
    let (nv, np) = (solver.n_velocity(), solver.n_pressure());
    Ok((x[..nv].to_vec(), x[nv..nv + np].to_vec()))
}
