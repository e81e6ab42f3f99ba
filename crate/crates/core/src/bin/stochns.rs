use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stochns::config::{parse_config, RunConfig};
use stochns::experiments::{
    deterministic_verify, indicator_csv, indicator_table, max_energy_moment, path_ensemble, space_convergence_study,
    time_convergence_study,
};
use stochns::noise::WienerPath;
use stochns::stepper::run_path;
use stochns::Error;

#[derive(Parser)]
#[command(name = "stochns", version, about = "Stochastic Navier-Stokes Taylor-Hood solver and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with [scheme], [noise] and [study] sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// output root (default: $STOCHNS_OUT or ./stochns-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads, 0 for all cores, 1 for serial
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    n_side: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write its per-step summary
    RunPath {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path_index: Option<u64>,
    },
    /// Strong error in time on shared Brownian paths
    ConvergenceTime {
        #[command(flatten)]
        common: Common,
        /// step sizes, coarsest first
        #[arg(long, value_delimiter = ',')]
        k_levels: Option<Vec<f64>>,
    },
    /// Strong error in space on nested meshes
    ConvergenceSpace {
        #[command(flatten)]
        common: Common,
        /// mesh spacings L/n_side, coarsest first
        #[arg(long, value_delimiter = ',')]
        h_levels: Option<Vec<f64>>,
        /// time step of every run
        #[arg(long)]
        k: Option<f64>,
    },
    /// Noise-free Taylor-Green check; exits 0 iff the orders are in band
    DeterministicVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sides: Option<Vec<usize>>,
    },
    /// Sample-set fractions, moments and invariant maxima over an ensemble
    Diagnostics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        /// skip the coupled refined-mesh reference runs
        #[arg(long)]
        no_reference: bool,
    },
}

fn resolve(c: &Common) -> stochns::Result<RunConfig> {
    let mut cfg = parse_config(c.config.as_deref())?;
    if let Some(v) = c.seed {
        cfg.study.master_seed = v;
    }
    if let Some(v) = c.paths {
        cfg.study.n_paths = v;
    }
    if let Some(v) = &c.out {
        cfg.study.out_dir = Some(v.clone());
    }
    if let Some(v) = c.parallel {
        cfg.study.parallel = v;
    }
    if let Some(v) = c.n_side {
        cfg.scheme.n_side = v;
    }
    if let Some(v) = c.steps {
        cfg.scheme.n_steps = v;
    }
    Ok(cfg)
}

fn prepare(cfg: &RunConfig, name: &str) -> stochns::Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.out_root().join(name);
    cfg.echo(&dir)?;
    Ok(dir)
}

fn write(dir: &Path, file: &str, text: &str) -> stochns::Result<()> {
    std::fs::write(dir.join(file), text)?;
    println!("wrote {}", dir.join(file).display());
    Ok(())
}

/// Returns whether the run met its self-check.
fn execute(cmd: Command) -> stochns::Result<bool> {
    match cmd {
        Command::RunPath { common, path_index } => {
            let mut cfg = resolve(&common)?;
            if let Some(p) = path_index {
                cfg.study.path_index = p;
            }
            let dir = prepare(&cfg, "run-path")?;
            let scheme = cfg.scheme();
            let path = WienerPath::new(cfg.study.master_seed, cfg.study.path_index, scheme.n_steps, scheme.dt());
            let s = run_path(&scheme, &path, None)?;
            let mut csv = String::from("step,time,l2,h1,hessian\n");
            for n in 0..s.l2_history.len() {
                let _ = writeln!(
                    csv,
                    "{},{:e},{:e},{:e},{:e}",
                    n + 1,
                    (n + 1) as f64 * scheme.dt(),
                    s.l2_history[n],
                    s.h1_history[n],
                    s.hessian_history[n]
                );
            }
            write(&dir, "summary.csv", &csv)?;
            let inv = format!(
                "quantity,value\nenergy_residual,{:e}\ndivergence_residual,{:e}\npressure_mean,{:e}\northogonality_residual,{:e}\nnonlinear_residual,{:e}\niterations,{}\nfallbacks,{}\n",
                s.max_energy_residual,
                s.max_divergence_residual,
                s.max_pressure_mean,
                s.max_orthogonality_residual,
                s.max_nonlinear_residual,
                s.total_iterations,
                s.fallbacks
            );
            write(&dir, "invariants.csv", &inv)?;
            Ok(true)
        }
        Command::ConvergenceTime { common, k_levels } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = k_levels {
                cfg.study.time_levels = v;
            }
            let dir = prepare(&cfg, "convergence-time")?;
            let table = time_convergence_study(&cfg.scheme(), &cfg.study.time_levels, &cfg.study_options())?;
            write(&dir, "errors.csv", &table.to_csv())?;
            write(&dir, "rates.csv", &table.rates_csv())?;
            if cfg.study.svg {
                write(&dir, "errors.svg", &table.to_svg())?;
            }
            print!("{}", table.rates_csv());
            Ok(true)
        }
        Command::ConvergenceSpace { common, h_levels, k } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = h_levels {
                cfg.study.space_levels = v;
            }
            if let Some(v) = k {
                cfg.study.space_step = v;
            }
            let dir = prepare(&cfg, "convergence-space")?;
            let table = space_convergence_study(&cfg.space_scheme()?, &cfg.study.space_levels, &cfg.study_options())?;
            write(&dir, "errors.csv", &table.to_csv())?;
            write(&dir, "rates.csv", &table.rates_csv())?;
            if cfg.study.svg {
                write(&dir, "errors.svg", &table.to_svg())?;
            }
            print!("{}", table.rates_csv());
            Ok(true)
        }
        Command::DeterministicVerify { common, sides } => {
            let mut cfg = resolve(&common)?;
            if common.steps.is_none() {
                cfg.scheme.t_final = 10.0;
                cfg.scheme.n_steps = 10;
            }
            if let Some(v) = sides {
                cfg.study.verify_sides = v;
            }
            let dir = prepare(&cfg, "deterministic-verify")?;
            let report = deterministic_verify(&cfg.scheme(), &cfg.study.verify_sides)?;
            write(&dir, "verification.csv", &report.to_csv())?;
            print!("{}", report.to_csv());
            println!("orders in band: {}", report.passes());
            Ok(report.passes())
        }
        Command::Diagnostics {
            common,
            epsilon,
            no_reference,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = epsilon {
                cfg.study.epsilon = v;
            }
            if no_reference {
                cfg.study.reference = false;
            }
            let dir = prepare(&cfg, "diagnostics")?;
            let scheme = cfg.scheme();
            let summaries = path_ensemble(&scheme, &cfg.study_options(), cfg.study.reference)?;
            let rows = indicator_table(&summaries, &scheme, &cfg.study.epsilon, cfg.study.kappa0, cfg.study.kappa);
            write(&dir, "indicators.csv", &indicator_csv(&rows))?;
            let mut csv = String::from(
                "path,max_l2_sq,energy_residual,divergence_residual,pressure_mean,orthogonality_residual,iterations,fallbacks\n",
            );
            for s in &summaries {
                let _ = writeln!(
                    csv,
                    "{},{:e},{:e},{:e},{:e},{:e},{},{}",
                    s.path_index,
                    s.max_l2_sq(),
                    s.max_energy_residual,
                    s.max_divergence_residual,
                    s.max_pressure_mean,
                    s.max_orthogonality_residual,
                    s.total_iterations,
                    s.fallbacks
                );
            }
            write(&dir, "paths.csv", &csv)?;
            println!("E[max |u|^2] = {:e} over {} paths", max_energy_moment(&summaries), summaries.len());
            Ok(true)
        }
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::NotNested(_) => "not-nested",
        Error::Io(_) => "io",
        Error::StepFailed { .. } | Error::NonlinearDivergence { .. } => "step-failed",
        Error::TooManyFailures { .. } => "too-many-failures",
        Error::Noise(_) => "noise",
        _ => "numerical",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", serde_json::json!({ "error": "out-of-band", "message": "fitted orders outside the acceptance bands" }));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": kind(&e), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
