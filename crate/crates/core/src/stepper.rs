//! The time loop: per step, split the noise (potential `ξ` plus remainder
//! `η`), solve the implicit convective saddle-point problem for `(u, r)`, and
//! reconstruct `p = r + ξ / k`.
//!
//! The pressure unknown of the linear systems is `k r`, which keeps the
//! saddle matrix well scaled for small `k`.

use crate::assembly::{assemble_divergence, assemble_mass, assemble_stiffness, load_vector, mean_vector, ConvectionAssembler};
use crate::error::{Error, Result};
use crate::helmholtz::HelmholtzSolver;
use crate::circulant::BlockCirculantSolver;
use crate::linsolve::{dot, norm2, solve_spd, SaddleSolver, DEFAULT_LINEAR_TOL};
use crate::mesh::MeshTopology;
use crate::noise::{increment_field, point_load_vector, velocity_at_points, DiffusionOperator, IncrementField, NoiseSpec, NoiseTable, WienerPath};
use crate::sparse::SparseOperator;
use crate::spaces::{broken_hessian_norm, DofMap, FieldCoefficients, SpaceKind, Tabulation, NONLINEAR_QUAD_DEGREE};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Strategy for the implicit convection term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearSolver {
    /// Freeze the convecting field and refactorize every iteration.
    Picard,
    /// Picard operator plus the second linearization term.
    Newton,
    /// Convection moved to the right-hand side; one Stokes factorization per
    /// `(mesh, k)`. Falls back to `Picard` when it stops contracting.
    #[default]
    LaggedConvection,
}

/// Physical and numerical parameters of one discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub nu: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub n_side: usize,
    pub period: f64,
    #[serde(skip)]
    pub noise: NoiseSpec,
    #[serde(skip)]
    pub diffusion: DiffusionOperator,
    pub body_force: [f64; 2],
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_tol: f64,
    pub nonlinear: NonlinearSolver,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            nu: 1.0,
            t_final: 1.0,
            n_steps: 32,
            n_side: 32,
            period: 1.0,
            noise: NoiseSpec::default(),
            diffusion: DiffusionOperator::default(),
            body_force: [0.0, 0.0],
            picard_tol: 1e-10,
            picard_max: 50,
            linear_tol: DEFAULT_LINEAR_TOL,
            nonlinear: NonlinearSolver::default(),
        }
    }
}

impl SchemeConfig {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.nu > 0.0) {
            return bad("nu must be positive");
        }
        if !(self.t_final > 0.0) {
            return bad("t_final must be positive");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if self.n_side < 2 {
            return bad("n_side must be at least 2");
        }
        if !(self.picard_tol > 0.0 && self.picard_tol < 1.0) || !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return bad("tolerances must lie in (0, 1)");
        }
        if self.picard_max == 0 {
            return bad("picard_max must be at least 1");
        }
        self.noise.validate()
    }
}

/// Deterministic body force.
#[derive(Clone)]
pub enum Forcing {
    Constant([f64; 2]),
    Field(Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Constant(c) => write!(f, "Constant({c:?})"),
            Forcing::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Mesh-level data shared by every path and time step.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: MeshTopology,
    pub velocity: DofMap,
    pub pressure: DofMap,
    pub potential: DofMap,
    pub mass: SparseOperator,
    pub stiffness: SparseOperator,
    pub divergence: SparseOperator,
    pub pressure_mean: Vec<f64>,
    pub convection: ConvectionAssembler,
    pub tab: Tabulation,
    pub helmholtz: HelmholtzSolver,
    pub noise_table: NoiseTable,
}

impl Discretization {
    pub fn new(n_side: usize, period: f64, noise: &NoiseSpec) -> Result<Self> {
        let mesh = MeshTopology::build_periodic_uniform(n_side, period)?;
        let velocity = DofMap::build(&mesh, SpaceKind::VelocityP2Vector);
        let pressure = DofMap::build(&mesh, SpaceKind::PressureP1ZeroMean);
        let potential = DofMap::build(&mesh, SpaceKind::PotentialP1Scalar);
        Ok(Discretization {
            mass: assemble_mass(&mesh, &velocity),
            stiffness: assemble_stiffness(&mesh, &velocity),
            divergence: assemble_divergence(&mesh, &velocity, &pressure)?,
            pressure_mean: mean_vector(&mesh, &pressure),
            convection: ConvectionAssembler::new(&mesh, &velocity)?,
            tab: Tabulation::for_degree(2, NONLINEAR_QUAD_DEGREE)?,
            helmholtz: HelmholtzSolver::new(&mesh, &potential)?,
            noise_table: NoiseTable::new(&mesh, noise)?,
            mesh,
            velocity,
            pressure,
            potential,
        })
    }

    pub fn for_config(config: &SchemeConfig) -> Result<Self> {
        Self::new(config.n_side, config.period, &config.noise)
    }

    /// `N(w, u)`.
    pub fn convection(&self, w: &FieldCoefficients, u: &FieldCoefficients) -> Vec<f64> {
        self.convection.apply(&self.mesh, &self.velocity, w, u)
    }

    pub fn l2_norm_sq(&self, u: &[f64]) -> f64 {
        dot(u, &self.mass.mul_vec(u))
    }

    pub fn h1_seminorm_sq(&self, u: &[f64]) -> f64 {
        dot(u, &self.stiffness.mul_vec(u))
    }
}

/// Stokes operator `M + k ν K` with its saddle factorization, shared by all
/// paths with the same `(mesh, k, ν)`. The saddle matrix commutes with cell
/// translations, so it is solved in Fourier space.
pub struct StokesOperator {
    pub k: f64,
    pub nu: f64,
    pub a0: SparseOperator,
    solver: BlockCirculantSolver,
    nv: usize,
}

impl fmt::Debug for StokesOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StokesOperator").field("k", &self.k).field("nu", &self.nu).finish()
    }
}

impl StokesOperator {
    pub fn new(disc: &Discretization, k: f64, nu: f64) -> Result<Self> {
        let a0 = SparseOperator::combine_same_pattern(&[(1.0, &disc.mass), (k * nu, &disc.stiffness)])?;
        let nv = disc.velocity.n_global();
        let np = disc.pressure.n_global();
        let mut t = a0.triplets();
        for (q, c, v) in disc.divergence.triplets() {
            t.push((nv + q, c, -v));
            t.push((c, nv + q, -v));
        }
        let full = SparseOperator::from_triplets(nv + np, nv + np, &t);
        let scalar = disc.velocity.lattice_layout(&disc.mesh);
        let mut layout: Vec<(usize, usize)> = (0..2)
            .flat_map(|c| scalar.iter().map(move |&(f, cell)| (4 * c + f, cell)))
            .collect();
        layout.extend(disc.pressure.lattice_layout(&disc.mesh).iter().map(|&(_, cell)| (8, cell)));
        let solver = BlockCirculantSolver::new(&full, disc.mesh.n_side(), &layout, 9, &[8])?;
        Ok(StokesOperator { k, nu, a0, solver, nv })
    }

    /// Solves `A0 u - B^T p = f`, `B u = 0`, `(p, 1) = 0`.
    pub fn solve(&self, f: &[f64], np: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = f.to_vec();
        rhs.resize(self.nv + np, 0.0);
        let mut x = self.solver.solve(&rhs);
        let p = x.split_off(self.nv);
        (x, p)
    }
}

/// Discrete state after step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub n: usize,
    pub time: f64,
    pub u: FieldCoefficients,
    pub r: FieldCoefficients,
    pub p: FieldCoefficients,
    /// `k Σ r^m`
    pub pressure_time_integral_r: FieldCoefficients,
    /// `k Σ p^m`
    pub pressure_time_integral_p: FieldCoefficients,
}

/// Per-step solver and invariant diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub iterations: usize,
    pub fallback: bool,
    /// `‖R‖ / ‖rhs‖` of the momentum equation
    pub nonlinear_residual: f64,
    /// relative defect of the discrete energy identity
    pub energy_residual: f64,
    /// `max_q |d(u, q)|`
    pub divergence_residual: f64,
    /// `max(|(r, 1)|, |(p, 1)|)`
    pub pressure_mean: f64,
    pub orthogonality_residual: f64,
}

/// Initial state with `u` the L² projection of `u0`.
pub fn initial_state(disc: &Discretization, u0: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<StepState> {
    let zeros_p = FieldCoefficients::zeros(&disc.pressure);
    let probe = [u0([0.1, 0.2]), u0([0.7, 0.4]), u0([0.35, 0.9])];
    let u = if probe.iter().all(|v| *v == [0.0, 0.0]) && is_zero_everywhere(disc, u0) {
        FieldCoefficients::zeros(&disc.velocity)
    } else {
        let rhs = load_vector(&disc.mesh, &disc.velocity, u0);
        FieldCoefficients {
            space: disc.velocity.space(),
            values: solve_spd(&disc.mass, &rhs, crate::assembly::PROJECTION_TOL)?,
        }
    };
    Ok(StepState {
        n: 0,
        time: 0.0,
        u,
        r: zeros_p.clone(),
        p: zeros_p.clone(),
        pressure_time_integral_r: zeros_p.clone(),
        pressure_time_integral_p: zeros_p,
    })
}

fn is_zero_everywhere(disc: &Discretization, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> bool {
    disc.velocity
        .node_coordinates(&disc.mesh)
        .iter()
        .all(|x| f(*x) == [0.0, 0.0])
}

/// Advances one discretization `(mesh, k)` along a path.
pub struct Stepper {
    pub disc: Arc<Discretization>,
    pub stokes: Arc<StokesOperator>,
    pub config: SchemeConfig,
    force_load: Vec<f64>,
    picard: Option<SaddleSolver>,
    uv: Vec<[f64; 2]>,
    dwv: Vec<[f64; 2]>,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper").field("config", &self.config).finish()
    }
}

impl Stepper {
    pub fn new(config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let disc = Arc::new(Discretization::for_config(config)?);
        let stokes = Arc::new(StokesOperator::new(&disc, config.dt(), config.nu)?);
        Self::with_shared(disc, stokes, config)
    }

    pub fn with_shared(disc: Arc<Discretization>, stokes: Arc<StokesOperator>, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let k = config.dt();
        if (stokes.k - k).abs() > 1e-15 * k || stokes.nu != config.nu {
            return Err(Error::Config("shared Stokes operator built for another (k, nu)".into()));
        }
        if disc.mesh.n_side() != config.n_side {
            return Err(Error::Config("shared discretization built for another mesh".into()));
        }
        let mut s = Stepper {
            disc,
            stokes,
            config: config.clone(),
            force_load: Vec::new(),
            picard: None,
            uv: Vec::new(),
            dwv: Vec::new(),
        };
        s.set_forcing(&Forcing::Constant(config.body_force));
        Ok(s)
    }

    pub fn k(&self) -> f64 {
        self.stokes.k
    }

    /// Replaces the body force; stores `k (f, φ_i)`.
    pub fn set_forcing(&mut self, forcing: &Forcing) {
        let k = self.k();
        let d = &self.disc;
        self.force_load = match forcing {
            Forcing::Constant(c) if *c == [0.0, 0.0] => vec![0.0; d.velocity.n_global()],
            Forcing::Constant(c) => {
                let c = *c;
                load_vector(&d.mesh, &d.velocity, &move |_| c)
            }
            Forcing::Field(f) => load_vector(&d.mesh, &d.velocity, &|x| f(x)),
        };
        self.force_load.iter_mut().for_each(|v| *v *= k);
    }

    pub fn initial_state(&self, u0: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<StepState> {
        initial_state(&self.disc, u0)
    }

    /// One step driven by the increment of `path` at coarsening `level`.
    pub fn advance_path(&mut self, state: &StepState, path: &WienerPath, level: usize) -> Result<(StepState, StepReport)> {
        let dw = increment_field(path, &self.config.noise, state.n, level)?;
        self.advance(state, &dw)
    }

    /// One step with increment `dw`.
    pub fn advance(&mut self, state: &StepState, dw: &IncrementField) -> Result<(StepState, StepReport)> {
        let step = state.n + 1;
        self.advance_inner(state, dw).map_err(|e| Error::StepFailed {
            step,
            source: Box::new(e),
        })
    }

    fn advance_inner(&mut self, state: &StepState, dw: &IncrementField) -> Result<(StepState, StepReport)> {
        let disc = Arc::clone(&self.disc);
        let k = self.k();
        let nq = disc.tab.rule.len();
        state.u.check_space(&disc.velocity)?;

        // Step I: split G(u^{n-1}) ΔW
        let (eta_load, xi, orth) = if dw.is_zero() || self.config.diffusion == DiffusionOperator::Zero {
            (
                vec![0.0; disc.velocity.n_global()],
                FieldCoefficients::zeros(&disc.potential),
                0.0,
            )
        } else {
            velocity_at_points(&disc.mesh, &disc.velocity, &disc.tab, &state.u, &mut self.uv);
            disc.noise_table.evaluate(dw, &mut self.dwv);
            let g: Vec<[f64; 2]> = self
                .uv
                .iter()
                .zip(&self.dwv)
                .map(|(u, w)| {
                    let d = self.config.diffusion.apply(*u);
                    [d[0] * w[0], d[1] * w[1]]
                })
                .collect();
            let split = disc.helmholtz.split(&disc.mesh, &g)?;
            let eta = split.eta(&g, nq);
            (
                point_load_vector(&disc.mesh, &disc.velocity, &disc.tab, &eta),
                split.xi,
                split.orthogonality_residual,
            )
        };

        // Step II
        let m_uold = disc.mass.mul_vec(&state.u.values);
        let rhs: Vec<f64> = m_uold
            .iter()
            .zip(&eta_load)
            .zip(&self.force_load)
            .map(|((a, b), c)| a + b + c)
            .collect();
        let (u, rk, iterations, residual, fallback) = self.solve_momentum(&state.u, &rhs)?;

        // Step III
        let r: Vec<f64> = rk.iter().map(|v| v / k).collect();
        let p: Vec<f64> = r.iter().zip(&xi.values).map(|(a, b)| a + b / k).collect();

        let report = self.diagnostics(state, &u, &r, &p, &m_uold, &eta_load, StepReport {
            step: state.n + 1,
            iterations,
            fallback,
            nonlinear_residual: residual,
            orthogonality_residual: orth,
            ..Default::default()
        });
        let accumulate = |acc: &FieldCoefficients, v: &[f64]| FieldCoefficients {
            space: acc.space,
            values: acc.values.iter().zip(v).map(|(a, b)| a + k * b).collect(),
        };
        let next = StepState {
            n: state.n + 1,
            time: (state.n + 1) as f64 * k,
            pressure_time_integral_r: accumulate(&state.pressure_time_integral_r, &r),
            pressure_time_integral_p: accumulate(&state.pressure_time_integral_p, &p),
            u: FieldCoefficients {
                space: disc.velocity.space(),
                values: u,
            },
            r: FieldCoefficients {
                space: disc.pressure.space(),
                values: r,
            },
            p: FieldCoefficients {
                space: disc.pressure.space(),
                values: p,
            },
        };
        Ok((next, report))
    }

    fn field(&self, values: Vec<f64>) -> FieldCoefficients {
        FieldCoefficients {
            space: self.disc.velocity.space(),
            values,
        }
    }

    /// Momentum residual `(M + kνK) u - B^T r̃ + k N(u, u) - rhs`, given `N(u, u)`.
    fn residual(&self, u: &[f64], rk: &[f64], nuu: &[f64], rhs: &[f64]) -> f64 {
        let k = self.k();
        let au = self.stokes.a0.mul_vec(u);
        let bt = self.disc.divergence.transpose_mul_vec(rk);
        let r: Vec<f64> = (0..u.len()).map(|i| au[i] - bt[i] + k * nuu[i] - rhs[i]).collect();
        norm2(&r)
    }

    #[allow(clippy::type_complexity)]
    fn solve_momentum(&mut self, u_old: &FieldCoefficients, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize, f64, bool)> {
        let scale = norm2(rhs);
        let tol = self.config.picard_tol * scale;
        let zero_p = vec![0.0; self.disc.pressure.n_global()];
        match self.config.nonlinear {
            NonlinearSolver::LaggedConvection => match self.lagged(u_old, rhs, tol, &zero_p)? {
                Some((u, rk, it, res)) => Ok((u, rk, it, res / scale.max(f64::MIN_POSITIVE), false)),
                None => {
                    let (u, rk, it, res) = self.linearized(u_old, rhs, tol, &zero_p, false)?;
                    Ok((u, rk, it, res / scale.max(f64::MIN_POSITIVE), true))
                }
            },
            NonlinearSolver::Picard | NonlinearSolver::Newton => {
                let newton = self.config.nonlinear == NonlinearSolver::Newton;
                let (u, rk, it, res) = self.linearized(u_old, rhs, tol, &zero_p, newton)?;
                Ok((u, rk, it, res / scale.max(f64::MIN_POSITIVE), false))
            }
        }
    }

    /// `u^{m+1} = S^{-1}(rhs - k N(u^m, u^m))`; `None` when not contracting.
    #[allow(clippy::type_complexity)]
    fn lagged(&self, u_old: &FieldCoefficients, rhs: &[f64], tol: f64, zero_p: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>, usize, f64)>> {
        let k = self.k();
        let mut u = u_old.clone();
        let mut nuu = self.disc.convection(&u, &u);
        let mut prev = f64::INFINITY;
        for it in 1..=self.config.picard_max {
            let f: Vec<f64> = rhs.iter().zip(&nuu).map(|(a, b)| a - k * b).collect();
            let (un, rk) = self.stokes.solve(&f, zero_p.len());
            u = self.field(un);
            nuu = self.disc.convection(&u, &u);
            let res = self.residual(&u.values, &rk, &nuu, rhs);
            if !res.is_finite() {
                return Ok(None);
            }
            if res <= tol {
                return Ok(Some((u.values, rk, it, res)));
            }
            if it > 3 && res > 0.9 * prev {
                return Ok(None);
            }
            prev = res;
        }
        Ok(None)
    }

    /// Picard (frozen convection) or Newton iteration, refactorizing each time.
    fn linearized(&mut self, u_old: &FieldCoefficients, rhs: &[f64], tol: f64, zero_p: &[f64], newton: bool) -> Result<(Vec<f64>, Vec<f64>, usize, f64)> {
        let k = self.k();
        let disc = Arc::clone(&self.disc);
        let mut u = u_old.clone();
        let mut last = f64::INFINITY;
        for it in 1..=self.config.picard_max {
            let (n1, n2) = disc.convection.jacobian(&disc.mesh, &disc.velocity, &u, newton);
            let mut terms = vec![(1.0, &self.stokes.a0), (k, &n1)];
            if newton {
                terms.push((k, &n2));
            }
            let a = SparseOperator::combine_same_pattern(&terms)?;
            let f: Vec<f64> = if newton {
                let nuu = disc.convection(&u, &u);
                rhs.iter().zip(&nuu).map(|(a, b)| a + k * b).collect()
            } else {
                rhs.to_vec()
            };
            match self.picard.as_mut() {
                Some(s) => s.refactor(&a)?,
                None => self.picard = Some(SaddleSolver::new(&a, &disc.divergence, &disc.pressure_mean)?),
            }
            let (un, rk) = self.picard.as_ref().expect("factorized").solve(&f, zero_p);
            u = self.field(un);
            let nuu = disc.convection(&u, &u);
            last = self.residual(&u.values, &rk, &nuu, rhs);
            if !last.is_finite() {
                break;
            }
            if last <= tol {
                return Ok((u.values, rk, it, last));
            }
        }
        Err(Error::NonlinearDivergence {
            step: 0,
            iterations: self.config.picard_max,
            residual: last,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn diagnostics(
        &self,
        state: &StepState,
        u: &[f64],
        r: &[f64],
        p: &[f64],
        m_uold: &[f64],
        eta_load: &[f64],
        mut report: StepReport,
    ) -> StepReport {
        let disc = &self.disc;
        let k = self.k();
        let nu = self.config.nu;
        let mu = disc.mass.mul_vec(u);
        let unew_sq = dot(u, &mu);
        let uold_sq = dot(&state.u.values, m_uold);
        let cross = dot(u, m_uold);
        let diff_sq = (unew_sq - 2.0 * cross + uold_sq).max(0.0);
        let visc = k * nu * disc.h1_seminorm_sq(u);
        let noise = dot(eta_load, u);
        let force = dot(&self.force_load, u);
        let defect = 0.5 * (unew_sq - uold_sq + diff_sq) + visc - noise - force;
        let size = 0.5 * (unew_sq + uold_sq + diff_sq) + visc + noise.abs() + force.abs();
        report.energy_residual = if size > 0.0 { defect.abs() / size } else { 0.0 };
        report.divergence_residual = disc
            .divergence
            .mul_vec(u)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        report.pressure_mean = dot(&disc.pressure_mean, r).abs().max(dot(&disc.pressure_mean, p).abs());
        report
    }

    /// Runs `n_steps` steps from `state` with increments of `path` at `level`.
    pub fn run(&mut self, state: StepState, path: &WienerPath, level: usize) -> Result<PathSummary> {
        let mut summary = PathSummary::new(path.path_index, state.clone());
        let mut state = state;
        for _ in 0..self.config.n_steps {
            let (next, report) = self.advance_path(&state, path, level)?;
            summary.record(&self.disc, &next, &report);
            state = next;
        }
        summary.final_state = state;
        Ok(summary)
    }
}

/// Trajectory statistics of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub path_index: u64,
    pub final_state: StepState,
    /// `‖u^n‖_{L²}` for `n = 1..N`
    pub l2_history: Vec<f64>,
    /// `‖∇u^n‖_{L²}` for `n = 1..N`
    pub h1_history: Vec<f64>,
    /// broken `‖∇²u^n‖_{L²}` for `n = 1..N`
    pub hessian_history: Vec<f64>,
    pub max_energy_residual: f64,
    pub max_divergence_residual: f64,
    pub max_pressure_mean: f64,
    pub max_orthogonality_residual: f64,
    pub max_nonlinear_residual: f64,
    pub total_iterations: usize,
    pub fallbacks: usize,
    /// `max_n ‖u^n - u_ref^n‖²` against a coupled reference trajectory
    pub gap_l2_sq: Option<f64>,
    /// `max_n ‖∇(u^n - u_ref^n)‖²`
    pub gap_h1_sq: Option<f64>,
}

impl PathSummary {
    pub fn new(path_index: u64, initial: StepState) -> Self {
        PathSummary {
            path_index,
            final_state: initial,
            l2_history: Vec::new(),
            h1_history: Vec::new(),
            hessian_history: Vec::new(),
            max_energy_residual: 0.0,
            max_divergence_residual: 0.0,
            max_pressure_mean: 0.0,
            max_orthogonality_residual: 0.0,
            max_nonlinear_residual: 0.0,
            total_iterations: 0,
            fallbacks: 0,
            gap_l2_sq: None,
            gap_h1_sq: None,
        }
    }

    pub fn record(&mut self, disc: &Discretization, state: &StepState, report: &StepReport) {
        self.l2_history.push(disc.l2_norm_sq(&state.u.values).max(0.0).sqrt());
        self.h1_history.push(disc.h1_seminorm_sq(&state.u.values).max(0.0).sqrt());
        self.hessian_history
            .push(broken_hessian_norm(&disc.mesh, &disc.velocity, &state.u));
        self.max_energy_residual = self.max_energy_residual.max(report.energy_residual);
        self.max_divergence_residual = self.max_divergence_residual.max(report.divergence_residual);
        self.max_pressure_mean = self.max_pressure_mean.max(report.pressure_mean);
        self.max_orthogonality_residual = self.max_orthogonality_residual.max(report.orthogonality_residual);
        self.max_nonlinear_residual = self.max_nonlinear_residual.max(report.nonlinear_residual);
        self.total_iterations += report.iterations;
        self.fallbacks += report.fallback as usize;
        self.final_state = state.clone();
    }

    pub fn max_l2_sq(&self) -> f64 {
        self.l2_history.iter().fold(0.0, |a, v| a.max(v * v))
    }

    fn max_of(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.l2_history.len()).map(f).fold(0.0, f64::max)
    }
}

/// Fractions of paths in each sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorFractions {
    /// `max ‖∇u‖⁴ ≤ -ε log k`
    pub omega_k: f64,
    /// `max (‖∇u‖⁴ + ‖u‖²) ≤ -ε log(h² + k)`
    pub omega_h: f64,
    /// `max (‖∇²u‖⁴ + ‖∇u‖⁴) ≤ (h² + k)^{-ε}`
    pub omega_hh: f64,
    /// `max (‖∇²u‖⁴ + ‖∇u‖⁴) ≤ -ε log(h⁴ + k)`
    pub omega_kh: f64,
    /// `max ‖u - u_ref‖² ≤ κ₀ (h^{2-2ε} + k^{1-2ε})`
    pub omega_kappa0: Option<f64>,
    /// `max ‖∇(u - u_ref)‖² ≤ κ (h^{2-4ε} + k^{1-2ε})`
    pub omega_kappa: Option<f64>,
}

/// Sample-set membership fractions; the Hessian is the broken Hessian of the
/// discrete trajectory.
pub fn indicator_diagnostics(summaries: &[PathSummary], epsilon: f64, kappa0: f64, kappa: f64, h: f64, k: f64) -> IndicatorFractions {
    let n = summaries.len().max(1) as f64;
    let frac = |pred: &dyn Fn(&PathSummary) -> bool| summaries.iter().filter(|s| pred(s)).count() as f64 / n;
    let opt_frac = |get: &dyn Fn(&PathSummary) -> Option<f64>, bound: f64| {
        if summaries.iter().all(|s| get(s).is_some()) && !summaries.is_empty() {
            Some(frac(&|s| get(s).unwrap() <= bound))
        } else {
            None
        }
    };
    let b_k = -epsilon * k.ln();
    let b_h = -epsilon * (h * h + k).ln();
    let b_hh = (h * h + k).powf(-epsilon);
    let b_kh = -epsilon * (h.powi(4) + k).ln();
    IndicatorFractions {
        omega_k: frac(&|s| s.max_of(|i| s.h1_history[i].powi(4)) <= b_k),
        omega_h: frac(&|s| s.max_of(|i| s.h1_history[i].powi(4) + s.l2_history[i].powi(2)) <= b_h),
        omega_hh: frac(&|s| s.max_of(|i| s.hessian_history[i].powi(4) + s.h1_history[i].powi(4)) <= b_hh),
        omega_kh: frac(&|s| s.max_of(|i| s.hessian_history[i].powi(4) + s.h1_history[i].powi(4)) <= b_kh),
        omega_kappa0: opt_frac(&|s| s.gap_l2_sq, kappa0 * (h.powf(2.0 - 2.0 * epsilon) + k.powf(1.0 - 2.0 * epsilon))),
        omega_kappa: opt_frac(&|s| s.gap_h1_sq, kappa * (h.powf(2.0 - 4.0 * epsilon) + k.powf(1.0 - 2.0 * epsilon))),
    }
}

/// Runs one path for `config` (fresh discretization, zero initial velocity
/// unless `u0` is given).
pub fn run_path(config: &SchemeConfig, path: &WienerPath, u0: Option<&dyn Fn([f64; 2]) -> [f64; 2]>) -> Result<PathSummary> {
    let mut stepper = Stepper::new(config)?;
    let state = match u0 {
        Some(f) => stepper.initial_state(f)?,
        None => stepper.initial_state(&|_| [0.0, 0.0])?,
    };
    let level = path.n_steps / config.n_steps;
    if level == 0 || level * config.n_steps != path.n_steps {
        return Err(Error::Config(format!(
            "path with {} fine steps cannot drive {} steps",
            path.n_steps, config.n_steps
        )));
    }
    stepper.run(state, path, level)
}
