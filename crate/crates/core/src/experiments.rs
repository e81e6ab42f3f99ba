//! Monte Carlo strong-error studies on coupled discretizations, rate fitting,
//! the deterministic Taylor-Green verification, the discrete inf-sup
//! constant, and CSV/SVG output.

use crate::assembly::{assemble_mass, assemble_stiffness};
use crate::error::{Error, Result};
use crate::linsolve::{dot, PinnedSolver};
use crate::mesh::MeshTopology;
use crate::noise::WienerPath;
use crate::spaces::{evaluate_basis, quadrature_rule, DofMap, FieldCoefficients, SpaceKind, NONLINEAR_QUAD_DEGREE};
use crate::stepper::{indicator_diagnostics, Discretization, Forcing, IndicatorFractions, PathSummary, SchemeConfig, StepState, Stepper, StokesOperator};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Study direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Space,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Space => "space",
        }
    }
}

/// Error estimators of a coupled pair of discretizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimator {
    /// final-time velocity difference in L²
    EAu,
    /// final-time velocity difference in the H¹ seminorm
    EBu,
    /// difference of the time-integrated pressures in L²
    Ep,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::EAu, Estimator::EBu, Estimator::Ep];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::EAu => "EAu",
            Estimator::EBu => "EBu",
            Estimator::Ep => "Ep",
        }
    }
}

/// Root-mean-square estimate over paths with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `(mean e²)^{1/2}`; the standard error of the mean of `e²` is carried
    /// through the square root to first order.
    pub fn from_squares(sq: &[f64]) -> Self {
        let n = sq.len() as f64;
        if sq.is_empty() {
            return Estimate { value: f64::NAN, stderr: f64::NAN };
        }
        let mean = sq.iter().sum::<f64>() / n;
        let var = if sq.len() > 1 {
            sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let value = mean.max(0.0).sqrt();
        let se_mean = (var / n).sqrt();
        let stderr = if value > 0.0 { se_mean / (2.0 * value) } else { 0.0 };
        Estimate { value, stderr }
    }
}

/// Estimates for one level (the coarse member of a coupled pair).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelEstimate {
    pub level: f64,
    pub eau: Estimate,
    pub ebu: Estimate,
    pub ep: Estimate,
}

impl LevelEstimate {
    pub fn get(&self, e: Estimator) -> Estimate {
        match e {
            Estimator::EAu => self.eau,
            Estimator::EBu => self.ebu,
            Estimator::Ep => self.ep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub axis: Axis,
    pub rows: Vec<LevelEstimate>,
    pub n_paths: usize,
    pub failed_paths: usize,
    pub master_seed: u64,
}

impl ErrorTable {
    pub fn levels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.level).collect()
    }

    pub fn values(&self, e: Estimator) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(e).value).collect()
    }

    /// Rows `axis,level,estimator,value,stderr,n_paths,seed`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,level,estimator,value,stderr,n_paths,seed\n");
        for r in &self.rows {
            for e in Estimator::ALL {
                let est = r.get(e);
                let _ = writeln!(
                    s,
                    "{},{:e},{},{:e},{:e},{},{}",
                    self.axis.name(),
                    r.level,
                    e.name(),
                    est.value,
                    est.stderr,
                    self.n_paths - self.failed_paths,
                    self.master_seed
                );
            }
        }
        s
    }

    pub fn fits(&self) -> Vec<(Estimator, Result<RateFit>)> {
        Estimator::ALL
            .iter()
            .map(|&e| (e, fit_rate(&self.levels(), &self.values(e))))
            .collect()
    }

    /// Rows `axis,estimator,slope,intercept,residual,n_levels`.
    pub fn rates_csv(&self) -> String {
        let mut s = String::from("axis,estimator,slope,intercept,residual,n_levels\n");
        for (e, fit) in self.fits() {
            match fit {
                Ok(f) => {
                    let _ = writeln!(
                        s,
                        "{},{},{:.6},{:.6},{:e},{}",
                        self.axis.name(),
                        e.name(),
                        f.slope,
                        f.intercept,
                        f.residual,
                        f.n_levels
                    );
                }
                Err(_) => {
                    let _ = writeln!(s, "{},{},nan,nan,nan,0", self.axis.name(), e.name());
                }
            }
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let series: Vec<(String, Vec<(f64, f64)>)> = Estimator::ALL
            .iter()
            .map(|&e| {
                (
                    e.name().to_string(),
                    self.rows.iter().map(|r| (r.level, r.get(e).value)).collect(),
                )
            })
            .collect();
        let xlabel = match self.axis {
            Axis::Time => "k",
            Axis::Space => "h",
        };
        loglog_svg(&format!("{} convergence", self.axis.name()), xlabel, &series)
    }

    /// Writes `errors.csv`, `rates.csv` and `errors.svg` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("errors.csv"), self.to_csv())?;
        std::fs::write(dir.join("rates.csv"), self.rates_csv())?;
        std::fs::write(dir.join("errors.svg"), self.to_svg())?;
        Ok(())
    }
}

/// Least-squares line through `(log level, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// root-mean-square residual in log space
    pub residual: f64,
    pub n_levels: usize,
}

pub fn fit_rate(levels: &[f64], values: &[f64]) -> Result<RateFit> {
    if levels.len() != values.len() {
        return Err(Error::Dimension("levels and values differ in length".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("non-positive estimate {v} cannot be fitted")));
    }
    if levels.len() < 3 {
        return Err(Error::Config("a rate fit needs at least three levels".into()));
    }
    let x: Vec<f64> = levels.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        n_levels: levels.len(),
    })
}

/// Representation of a coarse field on a nested refinement (pointwise exact).
pub fn prolong(
    coarse_mesh: &MeshTopology,
    coarse_dofs: &DofMap,
    field: &FieldCoefficients,
    fine_mesh: &MeshTopology,
    fine_dofs: &DofMap,
) -> Result<FieldCoefficients> {
    field.check_space(coarse_dofs)?;
    if coarse_dofs.space() != fine_dofs.space() {
        return Err(Error::SpaceMismatch {
            expected: coarse_dofs.space().name().into(),
            found: fine_dofs.space().name().into(),
        });
    }
    let (nc, nf) = (coarse_mesh.n_side(), fine_mesh.n_side());
    if nf % nc != 0 || coarse_mesh.period() != fine_mesh.period() {
        return Err(Error::NotNested(format!("{nc} cells per side do not refine into {nf}")));
    }
    let order = coarse_dofs.space().order();
    let nb = coarse_dofs.nodes_per_cell();
    let ncomp = coarse_dofs.components();
    let mut out = FieldCoefficients::zeros(fine_dofs);
    let mut local = vec![0.0; nb];
    let nfs = fine_dofs.n_scalar();
    for (i, x) in fine_dofs.node_coordinates(fine_mesh).iter().enumerate() {
        let (t, xi) = coarse_mesh.locate(*x);
        let (phi, _) = evaluate_basis(order, xi);
        for c in 0..ncomp {
            field.local(coarse_dofs, t, c, &mut local);
            out.values[c * nfs + i] = local.iter().zip(&phi).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// Norm matrices of one mesh.
struct Norms {
    vmass: crate::sparse::SparseOperator,
    vstiff: crate::sparse::SparseOperator,
    pmass: crate::sparse::SparseOperator,
}

impl Norms {
    fn new(disc: &Discretization) -> Self {
        Norms {
            vmass: disc.mass.clone(),
            vstiff: disc.stiffness.clone(),
            pmass: assemble_mass(&disc.mesh, &disc.pressure),
        }
    }

    fn diff_sq(op: &crate::sparse::SparseOperator, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        dot(&d, &op.mul_vec(&d)).max(0.0)
    }
}

/// Per-path squared differences `[EAu², EBu², Ep²]` for each coupled pair.
type PairSquares = Vec<[f64; 3]>;

fn aggregate(
    axis: Axis,
    levels: &[f64],
    results: Vec<Result<PairSquares>>,
    n_paths: usize,
    master_seed: u64,
) -> Result<ErrorTable> {
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 100 > n_paths {
        return Err(Error::TooManyFailures { failed, total: n_paths });
    }
    let ok: Vec<PairSquares> = results.into_iter().filter_map(|r| r.ok()).collect();
    let rows = (0..levels.len() - 1)
        .map(|i| {
            let col = |e: usize| -> Vec<f64> { ok.iter().map(|p| p[i][e]).collect() };
            LevelEstimate {
                level: levels[i],
                eau: Estimate::from_squares(&col(0)),
                ebu: Estimate::from_squares(&col(1)),
                ep: Estimate::from_squares(&col(2)),
            }
        })
        .collect();
    Ok(ErrorTable {
        axis,
        rows,
        n_paths,
        failed_paths: failed,
        master_seed,
    })
}

/// Runs `job` for every path index, optionally on a dedicated thread pool.
/// Results come back in path order.
pub fn for_paths<T: Send>(n_paths: usize, threads: Option<usize>, job: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<T>> {
    match threads {
        Some(1) => Ok((0..n_paths as u64).map(job).collect()),
        _ => {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                b = b.num_threads(t);
            }
            let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(|| (0..n_paths as u64).into_par_iter().map(job).collect()))
        }
    }
}

/// Number of steps of a time step that must divide `t_final`.
pub fn steps_for(t_final: f64, k: f64) -> Result<usize> {
    let n = (t_final / k).round();
    if !(k > 0.0) || n < 1.0 || ((t_final / k) - n).abs() > 1e-9 * n {
        return Err(Error::Config(format!("time step {k} does not divide T = {t_final}")));
    }
    Ok(n as usize)
}

/// Cells per side for a lattice spacing `h = L / n_side`.
pub fn cells_for(period: f64, h: f64) -> Result<usize> {
    let n = (period / h).round();
    if !(h > 0.0) || n < 2.0 || ((period / h) - n).abs() > 1e-9 * n {
        return Err(Error::NotNested(format!("spacing {h} does not divide the period {period}")));
    }
    Ok(n as usize)
}

/// Study options shared by both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub n_paths: usize,
    pub master_seed: u64,
    /// `Some(1)` runs serially; `None` uses every core.
    pub threads: Option<usize>,
}

/// Time study at fixed mesh: each path runs at every `k` of `k_levels`
/// (coarsest first) on one Brownian path sampled at the finest `k`;
/// consecutive levels are differenced.
pub fn time_convergence_study(base: &SchemeConfig, k_levels: &[f64], opts: &StudyOptions) -> Result<ErrorTable> {
    base.validate()?;
    if k_levels.len() < 2 {
        return Err(Error::Config("a time study needs at least two step sizes".into()));
    }
    let steps: Vec<usize> = k_levels.iter().map(|k| steps_for(base.t_final, *k)).collect::<Result<_>>()?;
    let finest = *steps.last().expect("non-empty");
    for w in steps.windows(2) {
        if w[1] <= w[0] || finest % w[0] != 0 || w[1] % w[0] != 0 {
            return Err(Error::Config(format!(
                "time levels must refine: {} steps do not divide {}",
                w[0], w[1]
            )));
        }
    }
    let disc = Arc::new(Discretization::for_config(base)?);
    let norms = Norms::new(&disc);
    let configs: Vec<SchemeConfig> = steps
        .iter()
        .map(|&n| SchemeConfig { n_steps: n, ..base.clone() })
        .collect();
    let stokes: Vec<Arc<StokesOperator>> = configs
        .iter()
        .map(|c| StokesOperator::new(&disc, c.dt(), c.nu).map(Arc::new))
        .collect::<Result<_>>()?;
    let job = |p: u64| -> Result<PairSquares> {
        let path = WienerPath::new(opts.master_seed, p, finest, base.t_final / finest as f64);
        let mut finals: Vec<StepState> = Vec::with_capacity(configs.len());
        for (c, s) in configs.iter().zip(&stokes) {
            let mut stepper = Stepper::with_shared(Arc::clone(&disc), Arc::clone(s), c)?;
            let state = stepper.initial_state(&|_| [0.0, 0.0])?;
            finals.push(stepper.run(state, &path, finest / c.n_steps)?.final_state);
        }
        Ok(finals
            .windows(2)
            .map(|w| {
                [
                    Norms::diff_sq(&norms.vmass, &w[0].u.values, &w[1].u.values),
                    Norms::diff_sq(&norms.vstiff, &w[0].u.values, &w[1].u.values),
                    Norms::diff_sq(
                        &norms.pmass,
                        &w[0].pressure_time_integral_p.values,
                        &w[1].pressure_time_integral_p.values,
                    ),
                ]
            })
            .collect())
    };
    let results = for_paths(opts.n_paths, opts.threads, job)?;
    aggregate(Axis::Time, k_levels, results, opts.n_paths, opts.master_seed)
}

/// Space study at fixed `k`: each path runs on every mesh of `h_levels`
/// (spacing `L / n_side`, coarsest first); consecutive meshes are differenced
/// on the finer one.
pub fn space_convergence_study(base: &SchemeConfig, h_levels: &[f64], opts: &StudyOptions) -> Result<ErrorTable> {
    base.validate()?;
    if h_levels.len() < 2 {
        return Err(Error::Config("a space study needs at least two meshes".into()));
    }
    let sides: Vec<usize> = h_levels.iter().map(|h| cells_for(base.period, *h)).collect::<Result<_>>()?;
    for w in sides.windows(2) {
        if w[1] <= w[0] || w[1] % w[0] != 0 {
            return Err(Error::NotNested(format!("{} cells per side do not refine into {}", w[0], w[1])));
        }
    }
    let configs: Vec<SchemeConfig> = sides
        .iter()
        .map(|&n| SchemeConfig { n_side: n, ..base.clone() })
        .collect();
    let discs: Vec<Arc<Discretization>> = configs
        .iter()
        .map(|c| Discretization::for_config(c).map(Arc::new))
        .collect::<Result<_>>()?;
    let stokes: Vec<Arc<StokesOperator>> = discs
        .iter()
        .map(|d| StokesOperator::new(d, base.dt(), base.nu).map(Arc::new))
        .collect::<Result<_>>()?;
    let norms: Vec<Norms> = discs.iter().map(|d| Norms::new(d)).collect();
    let job = |p: u64| -> Result<PairSquares> {
        let path = WienerPath::new(opts.master_seed, p, base.n_steps, base.dt());
        let mut finals = Vec::with_capacity(configs.len());
        for ((c, d), s) in configs.iter().zip(&discs).zip(&stokes) {
            let mut stepper = Stepper::with_shared(Arc::clone(d), Arc::clone(s), c)?;
            let state = stepper.initial_state(&|_| [0.0, 0.0])?;
            finals.push(stepper.run(state, &path, 1)?.final_state);
        }
        (0..finals.len() - 1)
            .map(|i| {
                let (dc, df) = (&discs[i], &discs[i + 1]);
                let u = prolong(&dc.mesh, &dc.velocity, &finals[i].u, &df.mesh, &df.velocity)?;
                let q = prolong(
                    &dc.mesh,
                    &dc.pressure,
                    &finals[i].pressure_time_integral_p,
                    &df.mesh,
                    &df.pressure,
                )?;
                let f = &finals[i + 1];
                let n = &norms[i + 1];
                Ok([
                    Norms::diff_sq(&n.vmass, &u.values, &f.u.values),
                    Norms::diff_sq(&n.vstiff, &u.values, &f.u.values),
                    Norms::diff_sq(&n.pmass, &q.values, &f.pressure_time_integral_p.values),
                ])
            })
            .collect()
    };
    let results = for_paths(opts.n_paths, opts.threads, job)?;
    aggregate(Axis::Space, h_levels, results, opts.n_paths, opts.master_seed)
}

/// Errors of one deterministic run against the closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerificationRow {
    pub n_side: usize,
    pub h: f64,
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rows: Vec<VerificationRow>,
    pub velocity_l2_order: f64,
    pub velocity_h1_order: f64,
    pub pressure_l2_order: f64,
}

impl VerificationReport {
    /// Orders inside `3.0 ± 0.2`, `2.0 ± 0.2`, `2.0 ± 0.3`.
    pub fn passes(&self) -> bool {
        (self.velocity_l2_order - 3.0).abs() <= 0.2
            && (self.velocity_h1_order - 2.0).abs() <= 0.2
            && (self.pressure_l2_order - 2.0).abs() <= 0.3
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_side,h,velocity_l2,velocity_h1,pressure_l2\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", r.n_side, r.h, r.velocity_l2, r.velocity_h1, r.pressure_l2);
        }
        let _ = writeln!(
            s,
            "order,,{:.4},{:.4},{:.4}",
            self.velocity_l2_order, self.velocity_h1_order, self.pressure_l2_order
        );
        s
    }
}

/// Steady Taylor-Green velocity on the unit period.
pub fn taylor_green_velocity(x: [f64; 2]) -> [f64; 2] {
    let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
    [a.sin() * b.cos(), -a.cos() * b.sin()]
}

/// `[∂_x u, ∂_y u]` per component.
pub fn taylor_green_gradient(x: [f64; 2]) -> [[f64; 2]; 2] {
    let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
    let w = 2.0 * PI;
    [
        [w * a.cos() * b.cos(), -w * a.sin() * b.sin()],
        [w * a.sin() * b.sin(), -w * a.cos() * b.cos()],
    ]
}

/// Pressure balancing the Taylor-Green convection, zero mean.
pub fn taylor_green_pressure(x: [f64; 2]) -> f64 {
    0.25 * ((4.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).cos())
}

/// `(‖u_h - u‖, ‖∇(u_h - u)‖, ‖p_h - p‖)` with the degree-6 rule.
pub fn exact_errors(
    disc: &Discretization,
    u: &FieldCoefficients,
    p: &FieldCoefficients,
    exact_u: &dyn Fn([f64; 2]) -> [f64; 2],
    exact_grad: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
    exact_p: &dyn Fn([f64; 2]) -> f64,
) -> (f64, f64, f64) {
    let rule = quadrature_rule(NONLINEAR_QUAD_DEGREE).expect("rule");
    let (mut eu, mut eg, mut ep) = (0.0, 0.0, 0.0);
    let mut lu = [[0.0; 6]; 2];
    let mut lp = [0.0; 3];
    for t in 0..disc.mesh.n_triangles() {
        let aff = disc.mesh.affine(t);
        let jw = aff.det.abs();
        u.local(&disc.velocity, t, 0, &mut lu[0]);
        u.local(&disc.velocity, t, 1, &mut lu[1]);
        p.local(&disc.pressure, t, 0, &mut lp);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let x = aff.map(*xi);
            let (phi, dphi) = evaluate_basis(2, *xi);
            let (psi, _) = evaluate_basis(1, *xi);
            let ue = exact_u(x);
            let ge = exact_grad(x);
            for c in 0..2 {
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for i in 0..6 {
                    v += lu[c][i] * phi[i];
                    let d = aff.push_grad(dphi[i]);
                    g[0] += lu[c][i] * d[0];
                    g[1] += lu[c][i] * d[1];
                }
                eu += w * jw * (v - ue[c]).powi(2);
                eg += w * jw * ((g[0] - ge[c][0]).powi(2) + (g[1] - ge[c][1]).powi(2));
            }
            let pv: f64 = lp.iter().zip(&psi).map(|(a, b)| a * b).sum();
            ep += w * jw * (pv - exact_p(x)).powi(2);
        }
    }
    (eu.sqrt(), eg.sqrt(), ep.sqrt())
}

/// Noise-free run towards the steady Taylor-Green solution with forcing
/// `f = 8π²ν u`, started from its L² projection; errors at every mesh and
/// fitted orders in `h`.
pub fn deterministic_verify(base: &SchemeConfig, sides: &[usize]) -> Result<VerificationReport> {
    let mut rows = Vec::new();
    for &n in sides {
        let c = SchemeConfig {
            n_side: n,
            period: 1.0,
            diffusion: crate::noise::DiffusionOperator::Zero,
            ..base.clone()
        };
        c.validate()?;
        let mut stepper = Stepper::new(&c)?;
        let nu = c.nu;
        stepper.set_forcing(&Forcing::Field(Arc::new(move |x| {
            let u = taylor_green_velocity(x);
            [8.0 * PI * PI * nu * u[0], 8.0 * PI * PI * nu * u[1]]
        })));
        let mut state = stepper.initial_state(&taylor_green_velocity)?;
        let path = WienerPath::new(0, 0, c.n_steps, c.dt());
        for _ in 0..c.n_steps {
            state = stepper.advance_path(&state, &path, 1)?.0;
        }
        let (a, b, p) = exact_errors(
            &stepper.disc,
            &state.u,
            &state.r,
            &taylor_green_velocity,
            &taylor_green_gradient,
            &taylor_green_pressure,
        );
        rows.push(VerificationRow {
            n_side: n,
            h: stepper.disc.mesh.h(),
            velocity_l2: a,
            velocity_h1: b,
            pressure_l2: p,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let order = |f: &dyn Fn(&VerificationRow) -> f64| -> Result<f64> {
        Ok(fit_rate(&hs, &rows.iter().map(f).collect::<Vec<_>>())?.slope)
    };
    Ok(VerificationReport {
        velocity_l2_order: order(&|r| r.velocity_l2)?,
        velocity_h1_order: order(&|r| r.velocity_h1)?,
        pressure_l2_order: order(&|r| r.pressure_l2)?,
        rows,
    })
}

/// Discrete inf-sup constant `β_h = min_q sup_v (∇·v, q) / (|v|_1 ‖q‖)`,
/// from the smallest nonzero eigenvalue of `B K⁺ Bᵀ q = λ M_p q`.
pub fn inf_sup_constant(n_side: usize, period: f64) -> Result<f64> {
    let mesh = MeshTopology::build_periodic_uniform(n_side, period)?;
    let v = DofMap::build(&mesh, SpaceKind::VelocityP2Vector);
    let p = DofMap::build(&mesh, SpaceKind::PressureP1ZeroMean);
    let b = crate::assembly::assemble_divergence(&mesh, &v, &p)?;
    let k = assemble_stiffness(&mesh, &v);
    let ms = crate::assembly::mean_vector(&mesh, &v);
    let ns = v.n_scalar();
    let constraints: Vec<Vec<f64>> = (0..2)
        .map(|c| {
            let mut m = vec![0.0; 2 * ns];
            m[c * ns..(c + 1) * ns].copy_from_slice(&ms);
            m
        })
        .collect();
    let solver = PinnedSolver::new(&k, &constraints)?;
    let np = p.n_global();
    let mut s = DMatrix::<f64>::zeros(np, np);
    let mut e = vec![0.0; np];
    for q in 0..np {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[q] = 1.0;
        let z = solver.solve(&b.transpose_mul_vec(&e));
        for (r, val) in b.mul_vec(&z).iter().enumerate() {
            s[(r, q)] = *val;
        }
    }
    let mp = assemble_mass(&mesh, &p);
    let mp = DMatrix::<f64>::from_fn(np, np, |i, j| mp.get(i, j));
    let chol = mp.cholesky().ok_or_else(|| Error::Singular {
        block: "pressure mass".into(),
        detail: "not positive definite".into(),
    })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Singular {
        block: "pressure mass".into(),
        detail: "Cholesky factor not invertible".into(),
    })?;
    let sym = &linv * ((&s + s.transpose()) * 0.5) * linv.transpose();
    let eig = SymmetricEigen::new(sym);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let top = vals.last().copied().unwrap_or(0.0);
    // the constant pressure is the only kernel direction
    let lambda = vals
        .iter()
        .copied()
        .find(|v| *v > 1e-10 * top)
        .ok_or_else(|| Error::Singular {
            block: "pressure".into(),
            detail: "no nonzero Schur eigenvalue".into(),
        })?;
    Ok(lambda.sqrt())
}

/// Trajectory statistics of `n_paths` paths at one `(h, k)`, optionally with
/// the per-step gap to a coupled run on the refined mesh `2 n_side`.
pub fn path_ensemble(base: &SchemeConfig, opts: &StudyOptions, with_reference: bool) -> Result<Vec<PathSummary>> {
    path_ensemble_on(base, opts, with_reference, base.n_steps)
}

/// As [`path_ensemble`], driven by Brownian paths sampled with `path_steps`
/// fine steps (a multiple of `base.n_steps`), so runs with different `k`
/// share their noise.
pub fn path_ensemble_on(
    base: &SchemeConfig,
    opts: &StudyOptions,
    with_reference: bool,
    path_steps: usize,
) -> Result<Vec<PathSummary>> {
    base.validate()?;
    if path_steps % base.n_steps != 0 {
        return Err(Error::Config(format!(
            "{} steps do not divide the {path_steps} path steps",
            base.n_steps
        )));
    }
    let level = path_steps / base.n_steps;
    let disc = Arc::new(Discretization::for_config(base)?);
    let stokes = Arc::new(StokesOperator::new(&disc, base.dt(), base.nu)?);
    let fine_cfg = SchemeConfig {
        n_side: 2 * base.n_side,
        ..base.clone()
    };
    let fine = if with_reference {
        let d = Arc::new(Discretization::for_config(&fine_cfg)?);
        let s = Arc::new(StokesOperator::new(&d, base.dt(), base.nu)?);
        Some((d, s))
    } else {
        None
    };
    let job = |p: u64| -> Result<PathSummary> {
        let path = WienerPath::new(opts.master_seed, p, path_steps, base.t_final / path_steps as f64);
        let mut stepper = Stepper::with_shared(Arc::clone(&disc), Arc::clone(&stokes), base)?;
        let mut state = stepper.initial_state(&|_| [0.0, 0.0])?;
        let mut summary = PathSummary::new(p, state.clone());
        let mut reference = match &fine {
            Some((d, s)) => {
                let st = Stepper::with_shared(Arc::clone(d), Arc::clone(s), &fine_cfg)?;
                let init = st.initial_state(&|_| [0.0, 0.0])?;
                Some((st, init))
            }
            None => None,
        };
        let (mut gl2, mut gh1) = (0.0f64, 0.0f64);
        for _ in 0..base.n_steps {
            let (next, report) = stepper.advance_path(&state, &path, level)?;
            summary.record(&disc, &next, &report);
            state = next;
            if let Some((st, rs)) = reference.as_mut() {
                let (rn, _) = st.advance_path(rs, &path, level)?;
                *rs = rn;
                let pu = prolong(&disc.mesh, &disc.velocity, &state.u, &st.disc.mesh, &st.disc.velocity)?;
                gl2 = gl2.max(Norms::diff_sq(&st.disc.mass, &pu.values, &rs.u.values));
                gh1 = gh1.max(Norms::diff_sq(&st.disc.stiffness, &pu.values, &rs.u.values));
            }
        }
        if reference.is_some() {
            summary.gap_l2_sq = Some(gl2);
            summary.gap_h1_sq = Some(gh1);
        }
        Ok(summary)
    };
    let results = for_paths(opts.n_paths, opts.threads, job)?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 100 > opts.n_paths {
        return Err(Error::TooManyFailures {
            failed,
            total: opts.n_paths,
        });
    }
    Ok(results.into_iter().filter_map(|r| r.ok()).collect())
}

/// Monte Carlo estimate of `E[max_n ‖u^n‖²]`.
pub fn max_energy_moment(summaries: &[PathSummary]) -> f64 {
    summaries.iter().map(|s| s.max_l2_sq()).sum::<f64>() / summaries.len().max(1) as f64
}

/// Moments at a base `(h, k)` and after one refinement of each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentStability {
    pub base: f64,
    pub refined_h: f64,
    pub refined_k: f64,
}

impl MomentStability {
    pub fn max_relative_change(&self) -> f64 {
        ((self.refined_h - self.base) / self.base)
            .abs()
            .max(((self.refined_k - self.base) / self.base).abs())
    }
}

/// All three runs share each Brownian path, sampled at the refined step.
pub fn moment_stability(base: &SchemeConfig, opts: &StudyOptions) -> Result<MomentStability> {
    let fine = 2 * base.n_steps;
    let run = |c: &SchemeConfig| path_ensemble_on(c, opts, false, fine).map(|s| max_energy_moment(&s));
    Ok(MomentStability {
        base: run(base)?,
        refined_h: run(&SchemeConfig {
            n_side: 2 * base.n_side,
            ..base.clone()
        })?,
        refined_k: run(&SchemeConfig {
            n_steps: 2 * base.n_steps,
            ..base.clone()
        })?,
    })
}

/// Sample-set fractions for every `ε` (mesh size label `L / n_side`).
pub fn indicator_table(
    summaries: &[PathSummary],
    base: &SchemeConfig,
    epsilons: &[f64],
    kappa0: f64,
    kappa: f64,
) -> Vec<(f64, IndicatorFractions)> {
    let h = base.period / base.n_side as f64;
    epsilons
        .iter()
        .map(|&e| (e, indicator_diagnostics(summaries, e, kappa0, kappa, h, base.dt())))
        .collect()
}

pub fn indicator_csv(rows: &[(f64, IndicatorFractions)]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut s = String::from("epsilon,omega_k,omega_h,omega_hh,omega_kh,omega_kappa0,omega_kappa\n");
    for (e, f) in rows {
        let _ = writeln!(
            s,
            "{e},{},{},{},{},{},{}",
            f.omega_k,
            f.omega_h,
            f.omega_hh,
            f.omega_kh,
            opt(f.omega_kappa0),
            opt(f.omega_kappa)
        );
    }
    s
}

/// Log-log SVG with one polyline per series and dashed reference slopes
/// 0.5, 1 and 2 through the first point of the first series.
pub fn loglog_svg(title: &str, xlabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
        w / 2.0
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    let (x0, x1) = (lx.iter().cloned().fold(f64::INFINITY, f64::min) - 0.1, lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.1);
    let (y0, y1) = (ly.iter().cloned().fold(f64::INFINITY, f64::min) - 0.3, ly.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.3);
    let sx = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |v: f64| h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);
    let _ = writeln!(
        svg,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * m,
        h - 2.0 * m
    );
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">1e{d}</text>", sx(d as f64), h - m + 16.0);
    }
    for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">1e{d}</text>", m - 4.0, sy(d as f64) + 4.0);
    }
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{xlabel}</text>", w / 2.0, h - 12.0);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    if let Some((_, first)) = series.first() {
        if let Some(&(ax, ay)) = first.iter().find(|(x, y)| *x > 0.0 && *y > 0.0) {
            for (i, slope) in [0.5, 1.0, 2.0].iter().enumerate() {
                let (lx0, ly0) = (ax.log10(), ay.log10());
                let (xa, xb) = (x0, x1);
                let (ya, yb) = (ly0 + slope * (xa - lx0), ly0 + slope * (xb - lx0));
                let _ = writeln!(
                    svg,
                    "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"4 4\" clip-path=\"none\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"gray\">slope {slope}</text>",
                    sx(xa),
                    sy(ya).clamp(m, h - m),
                    sx(xb),
                    sy(yb).clamp(m, h - m),
                    w - m - 50.0,
                    m + 14.0 + 12.0 * i as f64
                );
            }
        }
    }
    for (i, (name, p)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let coords: Vec<String> = p
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
            .map(|(x, y)| format!("{:.1},{:.1}", sx(x.log10()), sy(y.log10())))
            .collect();
        let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>", coords.join(" "));
        for pt in &coords {
            let (a, b) = pt.split_once(',').expect("pair");
            let _ = writeln!(svg, "<circle cx=\"{a}\" cy=\"{b}\" r=\"3\" fill=\"{c}\"/>");
        }
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{:.1}\" font-size=\"12\" fill=\"{c}\">{name}</text>", m + 8.0, m + 16.0 + 14.0 * i as f64);
    }
    svg.push_str("</svg>\n");
    svg
}
