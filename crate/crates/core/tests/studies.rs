use proptest::prelude::*;
use stochns::assembly::ConvectionAssembler;
use stochns::config::{parse_config_str, RunConfig};
use stochns::experiments::{fit_rate, prolong, Estimate, VerificationReport};
use stochns::helmholtz::HelmholtzSolver;
use stochns::mesh::build_periodic_uniform_mesh;
use stochns::noise::{NoiseSpec, WienerPath};
use stochns::spaces::{build_dof_map, compute_norm, quadrature_rule, FieldCoefficients, Norm, SpaceKind, NONLINEAR_QUAD_DEGREE};
use stochns::stepper::{run_path, NonlinearSolver, SchemeConfig};

fn field(space: SpaceKind, values: Vec<f64>) -> FieldCoefficients {
    FieldCoefficients { space, values }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coarse_increment_is_ordered_sum(seed in any::<u64>(), path in 0u64..1000, level in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let spec = NoiseSpec { modes: 4, ..Default::default() };
        let w = WienerPath::new(seed, path, 16, 1.0 / 16.0);
        for step in 0..16 / level {
            let coarse = w.coefficients(&spec, step, level).unwrap();
            let mut sum = w.fine_coefficients(&spec, step * level);
            for f in 1..level {
                for (a, b) in sum.iter_mut().zip(w.fine_coefficients(&spec, step * level + f)) {
                    *a += b;
                }
            }
            prop_assert_eq!(coarse, sum);
        }
    }

    #[test]
    fn distinct_paths_draw_distinct_noise(seed in any::<u64>(), a in 0u64..10_000, b in 0u64..10_000) {
        prop_assume!(a != b);
        let spec = NoiseSpec { modes: 2, ..Default::default() };
        let x = WienerPath::new(seed, a, 4, 0.25).gaussians(&spec, 0);
        let y = WienerPath::new(seed, b, 4, 0.25).gaussians(&spec, 0);
        prop_assert_ne!(x, y);
    }

    #[test]
    fn exact_power_laws_are_fitted(slope in -3.0f64..3.0, c in 0.01f64..100.0, n in 3usize..8) {
        let levels: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32 + 1)).collect();
        let values: Vec<f64> = levels.iter().map(|h| c * h.powf(slope)).collect();
        let f = fit_rate(&levels, &values).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-9);
        prop_assert!(f.residual < 1e-9);
    }

    #[test]
    fn estimate_scales_with_the_error(sq in prop::collection::vec(0.0f64..10.0, 2..40), s in 0.1f64..10.0) {
        let a = Estimate::from_squares(&sq);
        let scaled: Vec<f64> = sq.iter().map(|v| v * s * s).collect();
        let b = Estimate::from_squares(&scaled);
        prop_assert!((b.value - s * a.value).abs() <= 1e-12 * (1.0 + b.value));
        prop_assert!(a.stderr >= 0.0);
    }

    #[test]
    fn trilinear_form_is_skew(values in prop::collection::vec(-1.0f64..1.0, 2 * 2 * 64)) {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let d = build_dof_map(&m, SpaceKind::VelocityP2Vector);
        let n = d.n_global();
        let w = field(SpaceKind::VelocityP2Vector, values[..n].to_vec());
        let v = field(SpaceKind::VelocityP2Vector, values[n..2 * n].to_vec());
        let asm = ConvectionAssembler::new(&m, &d).unwrap();
        let b: f64 = asm.apply(&m, &d, &w, &v).iter().zip(&v.values).map(|(a, b)| a * b).sum();
        let scale = (1.0 + compute_norm(&m, &d, &w, Norm::H1Seminorm))
            * (compute_norm(&m, &d, &v, Norm::L2).powi(2) + compute_norm(&m, &d, &v, Norm::H1Seminorm).powi(2));
        prop_assert!(b.abs() <= 1e-12 * scale);
        // antisymmetry in the last two arguments
        let u = field(SpaceKind::VelocityP2Vector, values[n..2 * n].iter().map(|x| x * x).collect());
        let buv: f64 = asm.apply(&m, &d, &w, &u).iter().zip(&v.values).map(|(a, b)| a * b).sum();
        let bvu: f64 = asm.apply(&m, &d, &w, &v).iter().zip(&u.values).map(|(a, b)| a * b).sum();
        prop_assert!((buv + bvu).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn helmholtz_remainder_is_orthogonal(values in prop::collection::vec(-5.0f64..5.0, 32 * 2)) {
        let m = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let d = build_dof_map(&m, SpaceKind::PotentialP1Scalar);
        let h = HelmholtzSolver::new(&m, &d).unwrap();
        let nq = quadrature_rule(NONLINEAR_QUAD_DEGREE).unwrap().len();
        // piecewise-constant field, one vector per triangle
        let g: Vec<[f64; 2]> = (0..m.n_triangles() * nq)
            .map(|i| [values[2 * (i / nq)], values[2 * (i / nq) + 1]])
            .collect();
        let s = h.split(&m, &g).unwrap();
        prop_assert!(s.orthogonality_residual <= 1e-12);
        let mean: f64 = s.xi.values.iter().sum::<f64>();
        prop_assert!(mean.abs() <= 1e-10);
    }

    #[test]
    fn prolongation_preserves_norms(values in prop::collection::vec(-1.0f64..1.0, 16)) {
        let mc = build_periodic_uniform_mesh(4, 1.0).unwrap();
        let mf = build_periodic_uniform_mesh(8, 1.0).unwrap();
        let dc = build_dof_map(&mc, SpaceKind::PressureP1ZeroMean);
        let df = build_dof_map(&mf, SpaceKind::PressureP1ZeroMean);
        let f = field(SpaceKind::PressureP1ZeroMean, values);
        let g = prolong(&mc, &dc, &f, &mf, &df).unwrap();
        for norm in [Norm::L2, Norm::H1Seminorm] {
            let a = compute_norm(&mc, &dc, &f, norm);
            let b = compute_norm(&mf, &df, &g, norm);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn config_round_trips(nu in 0.1f64..10.0, n_side in 2usize..64, seed in any::<u64>(), paths in 1usize..500, modes in 1usize..20) {
        let mut c = RunConfig::default();
        c.scheme.nu = nu;
        c.scheme.n_side = n_side;
        c.study.master_seed = seed;
        c.study.n_paths = paths;
        c.noise.modes = modes;
        prop_assert_eq!(parse_config_str(&c.to_toml()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn step_invariants_hold_on_random_paths(seed in any::<u64>(), path in 0u64..100, newton in any::<bool>()) {
        let c = SchemeConfig {
            n_side: 4,
            n_steps: 8,
            nonlinear: if newton { NonlinearSolver::Newton } else { NonlinearSolver::LaggedConvection },
            ..Default::default()
        };
        let s = run_path(&c, &WienerPath::new(seed, path, 8, c.dt()), None).unwrap();
        prop_assert!(s.max_energy_residual <= 1e-8);
        prop_assert!(s.max_divergence_residual <= 1e-9);
        prop_assert!(s.max_pressure_mean <= 1e-9);
        prop_assert!(s.max_orthogonality_residual <= 1e-9);
    }
}

#[test]
fn verification_band_edges() {
    let report = |a: f64, b: f64, c: f64| VerificationReport {
        rows: Vec::new(),
        velocity_l2_order: a,
        velocity_h1_order: b,
        pressure_l2_order: c,
    };
    assert!(report(3.0, 2.0, 2.0).passes());
    assert!(report(2.81, 2.19, 1.71).passes());
    assert!(!report(2.79, 2.0, 2.0).passes());
    assert!(!report(3.0, 2.21, 2.0).passes());
    assert!(!report(3.0, 2.0, 2.31).passes());
}

#[test]
fn nested_level_validation() {
    assert!(parse_config_str("[study]\ntime_levels = [0.125, 0.0078125]\n").is_ok());
    assert!(parse_config_str("[study]\nspace_levels = [0.25, 0.16666666666666666]\n").is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            stochns::config::parse_config(Some(&p)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
