//! Direct solver for operators that commute with the cell translations of a
//! uniform periodic mesh.
//!
//! Every unknown belongs to a field (a node type or a component) and a cell
//! `c = j n + i`. A translation-invariant operator is block-circulant and is
//! diagonalized by the 2D discrete Fourier transform over cells into one
//! small `F x F` system per wavenumber.

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Block-circulant direct solver.
pub struct BlockCirculantSolver {
    n: usize,
    n_fields: usize,
    layout: Vec<(usize, usize)>,
    /// Row-major `F x F` inverse symbol per wavenumber `b n + a`.
    inverses: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for BlockCirculantSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockCirculantSolver")
            .field("n", &self.n)
            .field("n_fields", &self.n_fields)
            .finish()
    }
}

impl BlockCirculantSolver {
    /// `layout[i] = (field, cell)` of unknown `i`. Fields in `pinned` have
    /// their zero-wavenumber component fixed to zero, and the matching
    /// equations are dropped there (mean constraints with a multiplier).
    pub fn new(op: &SparseOperator, n: usize, layout: &[(usize, usize)], n_fields: usize, pinned: &[usize]) -> Result<Self> {
        let cells = n * n;
        let dim = n_fields * cells;
        if op.n_rows() != dim || op.n_cols() != dim || layout.len() != dim {
            return Err(Error::Dimension(format!(
                "circulant operator {}x{} with {} layout entries, expected {dim}",
                op.n_rows(),
                op.n_cols(),
                layout.len()
            )));
        }
        let mut seen = vec![false; dim];
        for &(f, c) in layout {
            if f >= n_fields || c >= cells || std::mem::replace(&mut seen[f * cells + c], true) {
                return Err(Error::Dimension("layout is not a bijection onto (field, cell)".into()));
            }
        }
        let offset = |from: usize, to: usize| {
            let (fi, fj) = (from % n, from / n);
            let (ti, tj) = (to % n, to / n);
            ((ti + n - fi) % n, (tj + n - fj) % n)
        };
        // stencil[(α, β)] = entries (di, dj, value) of the row of field α in cell 0
        let mut stencil: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_fields * n_fields];
        for (row, &(alpha, c0)) in layout.iter().enumerate() {
            if c0 != 0 {
                continue;
            }
            for (col, v) in op.row(row) {
                let (beta, cj) = layout[col];
                let (di, dj) = offset(c0, cj);
                stencil[alpha * n_fields + beta].push((di, dj, v));
            }
        }
        // translation invariance: every row must reproduce the cell-0 stencil
        let mut index = vec![usize::MAX; dim];
        for (i, &(f, c)) in layout.iter().enumerate() {
            index[f * cells + c] = i;
        }
        for (row, &(alpha, c0)) in layout.iter().enumerate() {
            let mut expect: f64 = 0.0;
            let mut got: f64 = 0.0;
            for beta in 0..n_fields {
                for &(di, dj, v) in &stencil[alpha * n_fields + beta] {
                    let cell = ((c0 / n + dj) % n) * n + (c0 % n + di) % n;
                    let col = index[beta * cells + cell];
                    expect = expect.max(v.abs());
                    got = got.max((op.get(row, col) - v).abs());
                }
            }
            let count: usize = (0..n_fields).map(|b| stencil[alpha * n_fields + b].len()).sum();
            if got > 1e-10 * expect.max(1e-300) || op.row(row).count() > count {
                return Err(Error::Dimension(format!(
                    "operator is not translation invariant at row {row}"
                )));
            }
        }
        let mut inverses = vec![Complex64::new(0.0, 0.0); cells * n_fields * n_fields];
        for b in 0..n {
            for a in 0..n {
                let m = b * n + a;
                let th = [2.0 * PI * a as f64 / n as f64, 2.0 * PI * b as f64 / n as f64];
                let active: Vec<usize> = (0..n_fields).filter(|f| m != 0 || !pinned.contains(f)).collect();
                let k = active.len();
                let sym = DMatrix::<Complex64>::from_fn(k, k, |r, c| {
                    stencil[active[r] * n_fields + active[c]]
                        .iter()
                        .map(|&(di, dj, v)| Complex64::from_polar(v, th[0] * di as f64 + th[1] * dj as f64))
                        .sum()
                });
                let inv = sym.try_inverse().ok_or_else(|| Error::Singular {
                    block: "circulant symbol".into(),
                    detail: format!("wavenumber ({a}, {b})"),
                })?;
                let out = &mut inverses[m * n_fields * n_fields..(m + 1) * n_fields * n_fields];
                for (r, &fr) in active.iter().enumerate() {
                    for (c, &fc) in active.iter().enumerate() {
                        out[fr * n_fields + fc] = inv[(r, c)];
                    }
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(BlockCirculantSolver {
            n,
            n_fields,
            layout: layout.to_vec(),
            inverses,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    fn fft2(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, column: &mut [Complex64]) {
        let n = self.n;
        // rows are contiguous in i
        fft.process(data);
        for i in 0..n {
            for j in 0..n {
                column[j] = data[j * n + i];
            }
            fft.process(column);
            for j in 0..n {
                data[j * n + i] = column[j];
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let cells = self.n * self.n;
        let nf = self.n_fields;
        let mut buf = vec![Complex64::new(0.0, 0.0); nf * cells];
        for (&(f, c), v) in self.layout.iter().zip(rhs) {
            buf[f * cells + c] = Complex64::new(*v, 0.0);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.n];
        for f in 0..nf {
            self.fft2(&mut buf[f * cells..(f + 1) * cells], &self.forward, &mut column);
        }
        let mut x = vec![Complex64::new(0.0, 0.0); nf];
        for m in 0..cells {
            let inv = &self.inverses[m * nf * nf..(m + 1) * nf * nf];
            for (r, xr) in x.iter_mut().enumerate() {
                *xr = (0..nf).map(|c| inv[r * nf + c] * buf[c * cells + m]).sum();
            }
            for (f, xf) in x.iter().enumerate() {
                buf[f * cells + m] = *xf;
            }
        }
        for f in 0..nf {
            self.fft2(&mut buf[f * cells..(f + 1) * cells], &self.inverse, &mut column);
        }
        let scale = 1.0 / cells as f64;
        self.layout.iter().map(|&(f, c)| buf[f * cells + c].re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_laplacian_plus_identity() {
        // fields: one; cells n x n; operator 4I - shifts (periodic 2D 5-point + shift)
        let n = 6;
        let cells = n * n;
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let c = j * n + i;
                t.push((c, c, 5.0));
                t.push((c, j * n + (i + 1) % n, -1.0));
                t.push((c, j * n + (i + n - 1) % n, -1.0));
                t.push((c, ((j + 1) % n) * n + i, -1.0));
                t.push((c, ((j + n - 1) % n) * n + i, -0.5));
            }
        }
        let op = SparseOperator::from_triplets(cells, cells, &t);
        let layout: Vec<_> = (0..cells).map(|c| (0, c)).collect();
        let s = BlockCirculantSolver::new(&op, n, &layout, 1, &[]).unwrap();
        let b: Vec<f64> = (0..cells).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let x = s.solve(&b);
        let r = op.mul_vec(&x);
        for (a, c) in r.iter().zip(&b) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_invariant_operator() {
        let n = 3;
        let mut t: Vec<_> = (0..9).map(|c| (c, c, 2.0)).collect();
        t[4].2 = 3.0;
        let op = SparseOperator::from_triplets(9, 9, &t);
        let layout: Vec<_> = (0..9).map(|c| (0, c)).collect();
        assert!(BlockCirculantSolver::new(&op, n, &layout, 1, &[]).is_err());
    }
}
