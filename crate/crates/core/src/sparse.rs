//! Compressed-row sparse matrices and fixed element sparsity patterns.

use crate::error::{Error, Result};

/// Square or rectangular matrix in compressed row storage.
///
/// Column indices are sorted within each row and never duplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from coordinate triplets; duplicates are summed in input order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: equal (row, col) keep their input order so summation is deterministic
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for i in order {
            let (r, c, v) = triplets[i];
            assert!(r < n_rows && c < n_cols, "triplet ({r},{c}) outside {n_rows}x{n_cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        self.col_idx[s..e].iter().copied().zip(self.values[s..e].iter().copied())
    }

    /// Position of `(r, c)` in the value array, if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let s = self.row_ptr[r];
        let e = self.row_ptr[r + 1];
        self.col_idx[s..e].binary_search(&c).ok().map(|k| s + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |p| self.values[p])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// `y = A^T x`.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for (r, xr) in x.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, &t)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                t.push((r, c, v));
            }
        }
        t
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`, zero for symmetric matrices.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `sum_i c_i A_i` for operators sharing one sparsity pattern.
    pub fn combine_same_pattern(terms: &[(f64, &SparseOperator)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or_else(|| Error::Dimension("empty combination".into()))?;
        let mut out = (*first).clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for (c, op) in terms {
            if op.row_ptr != out.row_ptr || op.col_idx != out.col_idx {
                return Err(Error::Dimension("operators do not share a sparsity pattern".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&op.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Column-compressed arrays `(col_ptr, row_idx, values)` of the same matrix.
    pub fn to_csc(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut col_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                row_idx[next[c]] = r;
                vals[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        (col_ptr, row_idx, vals)
    }
}

/// Sparsity pattern of an element-assembled operator together with the
/// value-array position of every local `(row, col)` pair of every element.
#[derive(Debug, Clone)]
pub struct ElementPattern {
    template: SparseOperator,
    local_rows: usize,
    local_cols: usize,
    positions: Vec<usize>,
}

impl ElementPattern {
    /// `rows_of(e)` / `cols_of(e)` return the global indices touched by element `e`.
    pub fn new<R, C>(
        n_rows: usize,
        n_cols: usize,
        n_elements: usize,
        local_rows: usize,
        local_cols: usize,
        rows_of: R,
        cols_of: C,
    ) -> Self
    where
        R: Fn(usize, &mut [usize]),
        C: Fn(usize, &mut [usize]),
    {
        let mut rbuf = vec![0; local_rows];
        let mut cbuf = vec![0; local_cols];
        let mut trip = Vec::with_capacity(n_elements * local_rows * local_cols);
        for e in 0..n_elements {
            rows_of(e, &mut rbuf);
            cols_of(e, &mut cbuf);
            for &r in &rbuf {
                for &c in &cbuf {
                    trip.push((r, c, 0.0));
                }
            }
        }
        let template = SparseOperator::from_triplets(n_rows, n_cols, &trip);
        let mut positions = Vec::with_capacity(trip.len());
        for e in 0..n_elements {
            rows_of(e, &mut rbuf);
            cols_of(e, &mut cbuf);
            for &r in &rbuf {
                for &c in &cbuf {
                    positions.push(template.position(r, c).expect("pattern entry"));
                }
            }
        }
        ElementPattern {
            template,
            local_rows,
            local_cols,
            positions,
        }
    }

    pub fn zeros(&self) -> SparseOperator {
        self.template.clone()
    }

    /// Value positions of element `e`, row-major over local `(row, col)`.
    #[inline]
    pub fn element_positions(&self, e: usize) -> &[usize] {
        let n = self.local_rows * self.local_cols;
        &self.positions[e * n..(e + 1) * n]
    }

    pub fn local_shape(&self) -> (usize, usize) {
        (self.local_rows, self.local_cols)
    }

    /// Adds a row-major local matrix of element `e` into `op`.
    #[inline]
    pub fn scatter(&self, op: &mut SparseOperator, e: usize, local: &[f64]) {
        let pos = self.element_positions(e);
        for (p, v) in pos.iter().zip(local) {
            op.values[*p] += v;
        }
    }
}
