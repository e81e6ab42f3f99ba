//! Truncated sine-mode Q-Wiener process, the diffusion coefficient `G`, and the
//! noise load vector.
//!
//! Gaussian draws come from a counter-based generator keyed by
//! `(master_seed, path)` with counter `(step, mode pair, component)`, so every
//! increment is reproducible regardless of evaluation order, and coarse
//! increments are formed as exact sums of fine ones.

use crate::assembly::local_dofs;
use crate::error::{Error, Result};
use crate::mesh::MeshTopology;
use crate::spaces::{DofMap, FieldCoefficients, Tabulation, NONLINEAR_QUAD_DEGREE};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn unit_open(hi: u32, lo: u32) -> f64 {
    // 53-bit uniform in (0, 1]
    let bits = ((hi as u64) << 21) ^ (lo as u64 >> 11);
    ((bits & ((1u64 << 53) - 1)) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Two independent standard normals from one Philox block (Box-Muller).
pub fn gaussian_pair(ctr: [u32; 4], key: [u32; 2]) -> [f64; 2] {
    let r = philox4x32_10(ctr, key);
    let u1 = unit_open(r[0], r[1]);
    let u2 = unit_open(r[2], r[3]);
    let rad = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * PI * u2;
    [rad * th.cos(), rad * th.sin()]
}

/// Truncated spectrum `λ_{j,k} = 1/(j²+k²)`, `1 ≤ j,k ≤ modes`, with basis
/// `amplitude · sin(jπx/L) sin(kπy/L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub modes: usize,
    pub amplitude: f64,
    pub period: f64,
    /// Independent coefficient sets per velocity component instead of one scalar field.
    pub vector: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            modes: 10,
            amplitude: 5.0,
            period: 1.0,
            vector: false,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::Noise("at least one mode is required".into()));
        }
        if !(self.period > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Noise("period must be positive and amplitude finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn lambda(&self, j: usize, k: usize) -> f64 {
        1.0 / ((j * j + k * k) as f64)
    }

    /// Number of independent coefficient sets.
    pub fn components(&self) -> usize {
        if self.vector {
            2
        } else {
            1
        }
    }

    /// Coefficients per component.
    pub fn n_modes(&self) -> usize {
        self.modes * self.modes
    }

    /// `g_{j,k}(x)` for 1-based `j, k`.
    pub fn basis(&self, j: usize, k: usize, x: [f64; 2]) -> f64 {
        let s = PI / self.period;
        self.amplitude * (j as f64 * s * x[0]).sin() * (k as f64 * s * x[1]).sin()
    }
}

/// One Brownian path, identified by `(master_seed, path_index)`, sampled on the
/// finest step `dt_fine`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerPath {
    pub master_seed: u64,
    pub path_index: u64,
    pub n_steps: usize,
    pub dt_fine: f64,
}

impl WienerPath {
    pub fn new(master_seed: u64, path_index: u64, n_steps: usize, dt_fine: f64) -> Self {
        WienerPath {
            master_seed,
            path_index,
            n_steps,
            dt_fine,
        }
    }

    fn key(&self) -> [u32; 2] {
        let k = splitmix64(self.master_seed ^ splitmix64(self.path_index.wrapping_add(0x5EED)));
        [k as u32, (k >> 32) as u32]
    }

    /// Standard normals `ξ^n` for fine step `step`, laid out `[component][j-1][k-1]`.
    pub fn gaussians(&self, spec: &NoiseSpec, step: usize) -> Vec<f64> {
        let key = self.key();
        let nm = spec.n_modes();
        let mut out = Vec::with_capacity(nm * spec.components());
        for c in 0..spec.components() {
            let mut m = 0;
            while m < nm {
                let ctr = [step as u32, (step as u64 >> 32) as u32, (m / 2) as u32, c as u32];
                let g = gaussian_pair(ctr, key);
                out.push(g[0]);
                if m + 1 < nm {
                    out.push(g[1]);
                }
                m += 2;
            }
        }
        out
    }

    /// Mode coefficients of the fine increment `step`: `(dt λ_{j,k})^{1/2} ξ`.
    pub fn fine_coefficients(&self, spec: &NoiseSpec, step: usize) -> Vec<f64> {
        let mut g = self.gaussians(spec, step);
        let m = spec.modes;
        for (idx, v) in g.iter_mut().enumerate() {
            let r = idx % spec.n_modes();
            *v *= (self.dt_fine * spec.lambda(r / m + 1, r % m + 1)).sqrt();
        }
        g
    }

    /// Coefficients of the increment over coarse step `step` at coarsening
    /// `level` (sum of `level` consecutive fine increments, in order).
    pub fn coefficients(&self, spec: &NoiseSpec, step: usize, level: usize) -> Result<Vec<f64>> {
        if level == 0 || self.n_steps % level != 0 {
            return Err(Error::Noise(format!(
                "coarsening {level} does not divide {} fine steps",
                self.n_steps
            )));
        }
        if step >= self.n_steps / level {
            return Err(Error::Noise(format!(
                "step {step} out of range for {} coarse steps",
                self.n_steps / level
            )));
        }
        let mut acc = self.fine_coefficients(spec, step * level);
        for s in 1..level {
            for (a, b) in acc.iter_mut().zip(self.fine_coefficients(spec, step * level + s)) {
                *a += b;
            }
        }
        Ok(acc)
    }
}

/// Pointwise-evaluable increment `ΔW_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementField {
    pub spec: NoiseSpec,
    /// `[component][j-1][k-1]`
    pub coefficients: Vec<f64>,
}

impl IncrementField {
    pub fn zero(spec: NoiseSpec) -> Self {
        IncrementField {
            spec,
            coefficients: vec![0.0; spec.n_modes() * spec.components()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }

    /// Value per velocity component (both equal for scalar noise).
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let s = PI / self.spec.period;
        let m = self.spec.modes;
        let sx: Vec<f64> = (1..=m).map(|j| (j as f64 * s * x[0]).sin()).collect();
        let sy: Vec<f64> = (1..=m).map(|k| (k as f64 * s * x[1]).sin()).collect();
        let v = |c: usize| -> f64 {
            let coef = &self.coefficients[c * m * m..(c + 1) * m * m];
            let mut acc = 0.0;
            for j in 0..m {
                let row: f64 = (0..m).map(|k| coef[j * m + k] * sy[k]).sum();
                acc += sx[j] * row;
            }
            self.spec.amplitude * acc
        };
        let a = v(0);
        if self.spec.vector {
            [a, v(1)]
        } else {
            [a, a]
        }
    }
}

/// `ΔW` for `step` at coarsening `level`.
pub fn increment_field(path: &WienerPath, spec: &NoiseSpec, step: usize, level: usize) -> Result<IncrementField> {
    spec.validate()?;
    Ok(IncrementField {
        spec: *spec,
        coefficients: path.coefficients(spec, step, level)?,
    })
}

/// Pointwise diffusion coefficient `G(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum DiffusionOperator {
    /// `G(u) = ((u₁²+1)^{1/2}, (u₂²+1)^{1/2})`
    #[default]
    SqrtOnePlusSquare,
    Zero,
    Constant([f64; 2]),
}

impl DiffusionOperator {
    #[inline]
    pub fn apply(&self, u: [f64; 2]) -> [f64; 2] {
        match self {
            DiffusionOperator::SqrtOnePlusSquare => [(u[0] * u[0] + 1.0).sqrt(), (u[1] * u[1] + 1.0).sqrt()],
            DiffusionOperator::Zero => [0.0, 0.0],
            DiffusionOperator::Constant(c) => *c,
        }
    }

    /// Pointwise Lipschitz bound.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DiffusionOperator::SqrtOnePlusSquare => 1.0,
            _ => 0.0,
        }
    }
}

/// `G(u)` at a velocity value.
pub fn apply_g(diffusion: &DiffusionOperator, u: [f64; 2]) -> [f64; 2] {
    diffusion.apply(u)
}

/// Sine tables of the noise basis at every degree-6 quadrature point of a
/// mesh, ordered `(triangle, point)`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    spec: NoiseSpec,
    n_points: usize,
    sx: Vec<f64>,
    sy: Vec<f64>,
}

impl NoiseTable {
    pub fn new(mesh: &MeshTopology, spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let rule = crate::spaces::quadrature_rule(NONLINEAR_QUAD_DEGREE)?;
        let m = spec.modes;
        let s = PI / spec.period;
        let n_points = mesh.n_triangles() * rule.len();
        let mut sx = Vec::with_capacity(n_points * m);
        let mut sy = Vec::with_capacity(n_points * m);
        for t in 0..mesh.n_triangles() {
            let aff = mesh.affine(t);
            for p in &rule.points {
                // physical point wrapped into [0, L)
                let x = aff.map(*p).map(|v| v.rem_euclid(spec.period));
                for j in 1..=m {
                    sx.push((j as f64 * s * x[0]).sin());
                    sy.push((j as f64 * s * x[1]).sin());
                }
            }
        }
        Ok(NoiseTable { spec: *spec, n_points, sx, sy })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `ΔW` per component at every tabulated point.
    pub fn evaluate(&self, dw: &IncrementField, out: &mut Vec<[f64; 2]>) {
        let m = self.spec.modes;
        out.clear();
        out.resize(self.n_points, [0.0; 2]);
        let mut row = vec![0.0; m];
        for c in 0..dw.spec.components() {
            let coef = &dw.coefficients[c * m * m..(c + 1) * m * m];
            for (q, o) in out.iter_mut().enumerate() {
                let sx = &self.sx[q * m..(q + 1) * m];
                let sy = &self.sy[q * m..(q + 1) * m];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = coef[j * m..(j + 1) * m].iter().zip(sy).map(|(a, b)| a * b).sum();
                }
                let v = self.spec.amplitude * row.iter().zip(sx).map(|(a, b)| a * b).sum::<f64>();
                o[c] = v;
                if !dw.spec.vector {
                    o[1] = v;
                }
            }
        }
    }
}

/// Velocity values at every degree-6 quadrature point, ordered `(triangle, point)`.
pub fn velocity_at_points(mesh: &MeshTopology, dofs: &DofMap, tab: &Tabulation, u: &FieldCoefficients, out: &mut Vec<[f64; 2]>) {
    let nq = tab.rule.len();
    out.clear();
    out.resize(mesh.n_triangles() * nq, [0.0; 2]);
    let mut loc = [[0.0; 6]; 2];
    for t in 0..mesh.n_triangles() {
        u.local(dofs, t, 0, &mut loc[0]);
        u.local(dofs, t, 1, &mut loc[1]);
        for q in 0..nq {
            let phi = tab.phi(q);
            let o = &mut out[t * nq + q];
            for c in 0..2 {
                o[c] = loc[c].iter().zip(phi).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// `(values, φ_i)` for a vector function given at the degree-6 points.
pub fn point_load_vector(mesh: &MeshTopology, dofs: &DofMap, tab: &Tabulation, values: &[[f64; 2]]) -> Vec<f64> {
    let nq = tab.rule.len();
    let mut out = vec![0.0; dofs.n_global()];
    let mut idx = [0usize; 12];
    for t in 0..mesh.n_triangles() {
        let jw = mesh.affine(t).det.abs();
        local_dofs(dofs, t, &mut idx);
        for q in 0..nq {
            let w = tab.rule.weights[q] * jw;
            let v = values[t * nq + q];
            for (i, p) in tab.phi(q).iter().enumerate() {
                out[idx[i]] += w * v[0] * p;
                out[idx[6 + i]] += w * v[1] * p;
            }
        }
    }
    out
}

/// `(G(u_prev) ΔW, φ_i)` per velocity test function.
pub fn noise_load_vector(
    mesh: &MeshTopology,
    dofs: &DofMap,
    diffusion: &DiffusionOperator,
    u_prev: &FieldCoefficients,
    dw: &IncrementField,
) -> Result<Vec<f64>> {
    u_prev.check_space(dofs)?;
    let tab = Tabulation::for_degree(2, NONLINEAR_QUAD_DEGREE)?;
    let table = NoiseTable::new(mesh, &dw.spec)?;
    let mut dwv = Vec::new();
    table.evaluate(dw, &mut dwv);
    let mut uv = Vec::new();
    velocity_at_points(mesh, dofs, &tab, u_prev, &mut uv);
    let gdw: Vec<[f64; 2]> = uv
        .iter()
        .zip(&dwv)
        .map(|(u, w)| {
            let g = diffusion.apply(*u);
            [g[0] * w[0], g[1] * w[1]]
        })
        .collect();
    Ok(point_load_vector(mesh, dofs, &tab, &gdw))
}
