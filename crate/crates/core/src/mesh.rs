//! Uniform periodic triangulation of the square torus `(0, L)^2`.
//!
//! Each of the `n_side^2` lattice cells is split along its south-west to
//! north-east diagonal into a *lower* and an *upper* triangle. Vertices are
//! stored only for the owned fundamental domain; triangles on the seam refer
//! to owned vertex indices, while their corner coordinates are kept unwrapped
//! so the element geometry is single-valued.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Affine map of one triangle: `x = origin + jac * xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub origin: [f64; 2],
    /// Column-major: `jac[c]` is the image of reference axis `c`.
    pub jac: [[f64; 2]; 2],
    /// Inverse transpose, used to push reference gradients forward.
    pub inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl Affine {
    fn from_corners(c: &[[f64; 2]; 3]) -> Self {
        let e1 = [c[1][0] - c[0][0], c[1][1] - c[0][1]];
        let e2 = [c[2][0] - c[0][0], c[2][1] - c[0][1]];
        let det = e1[0] * e2[1] - e2[0] * e1[1];
        // J = [e1 e2]; J^{-T} = 1/det [[e2y, -e1y], [-e2x, e1x]] stored so that
        // grad_phys = inv_t * grad_ref.
        let inv_t = [
            [e2[1] / det, -e1[1] / det],
            [-e2[0] / det, e1[0] / det],
        ];
        Affine {
            origin: c[0],
            jac: [e1, e2],
            inv_t,
            det,
        }
    }

    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[1][0] * xi[1],
            self.origin[1] + self.jac[0][1] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    /// Maps a reference gradient to the physical gradient.
    #[inline]
    pub fn push_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Periodic uniform right-triangle mesh.
#[derive(Debug, Clone)]
pub struct MeshTopology {
    n_side: usize,
    period: f64,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Global edge index of local edges (v0,v1), (v1,v2), (v2,v0).
    triangle_edges: Vec<[usize; 3]>,
    corners: Vec<[[f64; 2]; 3]>,
    affine: Vec<Affine>,
    h: f64,
}

impl MeshTopology {
    /// Builds the `n_side x n_side` periodic mesh of `(0, period)^2`.
    pub fn build_periodic_uniform(n_side: usize, period: f64) -> Result<Self> {
        if n_side < 2 {
            return Err(Error::InvalidMesh(format!(
                "n_side must be at least 2, got {n_side}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "period must be positive, got {period}"
            )));
        }
        let n = n_side;
        let dx = period / n as f64;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 * dx, j as f64 * dx]);
            }
        }
        let vid = |i: usize, j: usize| (j % n) * n + (i % n);
        let eid = |i: usize, j: usize, kind: usize| 3 * ((j % n) * n + (i % n)) + kind;
        let pt = |i: usize, j: usize| [i as f64 * dx, j as f64 * dx];

        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut triangle_edges = Vec::with_capacity(2 * n * n);
        let mut corners = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                // lower: (i,j) (i+1,j) (i+1,j+1)
                triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                triangle_edges.push([eid(i, j, 0), eid(i + 1, j, 1), eid(i, j, 2)]);
                corners.push([pt(i, j), pt(i + 1, j), pt(i + 1, j + 1)]);
                // upper: (i,j) (i+1,j+1) (i,j+1)
                triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                triangle_edges.push([eid(i, j, 2), eid(i, j + 1, 0), eid(i, j, 1)]);
                corners.push([pt(i, j), pt(i + 1, j + 1), pt(i, j + 1)]);
            }
        }
        let affine = corners.iter().map(Affine::from_corners).collect();
        Ok(MeshTopology {
            n_side,
            period,
            vertices,
            triangles,
            triangle_edges,
            corners,
            affine,
            h: std::f64::consts::SQRT_2 * period / n as f64,
        })
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Longest edge length, identical for every element.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Lattice spacing `L / n_side`.
    pub fn spacing(&self) -> f64 {
        self.period / self.n_side as f64
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        3 * self.n_side * self.n_side
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Unwrapped corner coordinates of a triangle (may touch `x = L` or `y = L`).
    pub fn corners(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.corners[t]
    }

    #[inline]
    pub fn affine(&self, t: usize) -> &Affine {
        &self.affine[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.affine[t].det
    }

    /// Owned vertex index of an arbitrary lattice position.
    pub fn periodic_vertex(&self, i: i64, j: i64) -> usize {
        let n = self.n_side as i64;
        (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize
    }

    /// Affine image of a reference point, the Jacobian, and `|det J|`.
    pub fn reference_map(&self, t: usize, xi: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2], f64)> {
        let a = self.affine.get(t).ok_or(Error::TriangleOutOfRange {
            index: t,
            count: self.triangles.len(),
        })?;
        Ok((a.map(xi), a.jac, a.det.abs()))
    }

    /// Wraps a point into the fundamental cell and returns the containing
    /// triangle together with the reference coordinates of the point.
    ///
    /// Points within `1e-12` (relative) of a cell boundary go to the lower-index cell.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 2]) {
        let n = self.n_side;
        let snap = |v: f64| -> (usize, f64) {
            let s = v.rem_euclid(self.period) / self.spacing();
            let r = s.round();
            if (s - r).abs() < 1e-12 * n as f64 {
                let r = r as usize;
                if r == 0 || r >= n {
                    (0, 0.0)
                } else {
                    (r - 1, 1.0)
                }
            } else {
                let i = (s.floor() as usize).min(n - 1);
                (i, s - i as f64)
            }
        };
        let (i, a) = snap(p[0]);
        let (j, b) = snap(p[1]);
        let cell = j * n + i;
        if b <= a {
            (2 * cell, [a - b, b])
        } else {
            (2 * cell + 1, [a, b - a])
        }
    }

    /// Plain-text dump: `v x y` rows followed by `t i j k` rows.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn build_periodic_uniform_mesh(n_side: usize, period: f64) -> Result<MeshTopology> {
    MeshTopology::build_periodic_uniform(n_side, period)
}
