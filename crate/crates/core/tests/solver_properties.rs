use proptest::prelude::*;
use rjacobi::euler_solver::{convergence_study, solve_path};
use rjacobi::gaussian_paths::{sample_fbm, GaussianPath};
use rjacobi::{ModelParams, SolverConfig, TransformTable};

fn params_strategy() -> impl Strategy<Value = (ModelParams, f64)> {
    (
        0.1f64..5.0,
        0.02f64..0.98,
        0.1f64..3.0,
        0.5f64..0.95,
        0.55f64..0.95,
    )
        .prop_map(|(theta, mu, gamma, beta, hurst)| {
            let alpha = 0.5 * (0.5 + hurst);
            (
                ModelParams::new(theta, mu, gamma, beta, alpha).unwrap(),
                hurst,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn states_stay_interior((params, hurst) in params_strategy(), x0 in 1e-6f64..(1.0 - 1e-6), seed in any::<u64>()) {
        let table = TransformTable::new(params.beta).unwrap();
        let config = SolverConfig::new(4.0, 200, params).unwrap();
        let w = sample_fbm(4.0, 200, hurst, seed).unwrap();
        let path = solve_path(&w, x0, &config, &table).unwrap();
        for (&y, &x) in path.y.iter().zip(&path.x) {
            prop_assert!(y > 0.0 && y < table.f1());
            prop_assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn ordering_is_preserved((params, hurst) in params_strategy(), a in 0.01f64..0.99, b in 0.01f64..0.99, seed in any::<u64>()) {
        prop_assume!((a - b).abs() > 1e-3);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let table = TransformTable::new(params.beta).unwrap();
        let config = SolverConfig::new(3.0, 150, params).unwrap();
        let w = sample_fbm(3.0, 150, hurst, seed).unwrap();
        let p = solve_path(&w, lo, &config, &table).unwrap();
        let q = solve_path(&w, hi, &config, &table).unwrap();
        // Exact roots keep the order; computed ones may swap by the root
        // tolerance once the two paths have merged.
        for (ya, yb) in p.y.iter().zip(&q.y) {
            prop_assert!(*ya <= yb + 1e-12 * (1.0 + yb), "{} > {}", ya, yb);
        }
    }

    #[test]
    fn nodes_are_consistent_with_inverse((params, hurst) in params_strategy(), x0 in 0.01f64..0.99, seed in any::<u64>()) {
        let table = TransformTable::new(params.beta).unwrap();
        let config = SolverConfig::new(2.0, 100, params).unwrap();
        let w = sample_fbm(2.0, 100, hurst, seed).unwrap();
        let path = solve_path(&w, x0, &config, &table).unwrap();
        for k in 1..path.len() {
            let back = table.eval_f(path.x[k]).unwrap();
            prop_assert!((back - path.y[k]).abs() <= 1e-9 * (1.0 + path.y[k]));
        }
    }
}

fn reference_params() -> ModelParams {
    ModelParams::new(1.0, 0.5, 1.0, 0.5, 0.55).unwrap()
}

#[test]
fn fbm_slope_is_at_least_half() {
    let table = TransformTable::new(0.5).unwrap();
    let n_ref = 1 << 14;
    let n_list: Vec<usize> = (5..=10).map(|k| 1 << k).collect();
    for seed in [1u64, 2, 3] {
        let w = sample_fbm(1.0, n_ref, 0.6, seed).unwrap();
        let report =
            convergence_study(&w, 0.3, &reference_params(), &n_list, n_ref, &table).unwrap();
        assert!(report.slope <= -0.5, "seed {seed}: {report:?}");
    }
}

#[test]
fn smooth_signal_slope_is_first_order() {
    let table = TransformTable::new(0.5).unwrap();
    let n_ref = 1 << 14;
    let n_list: Vec<usize> = (5..=10).map(|k| 1 << k).collect();
    let w = GaussianPath::from_fn(1.0, n_ref, f64::sin).unwrap();
    let report = convergence_study(&w, 0.3, &reference_params(), &n_list, n_ref, &table).unwrap();
    assert!(report.slope <= -0.95, "{report:?}");
    for pair in report.entries.windows(2) {
        assert!(pair[1].sup_error <= pair[0].sup_error);
    }
}

#[test]
fn identical_inputs_are_bit_identical() {
    let table = TransformTable::new(0.7).unwrap();
    let params = ModelParams::new(2.0, 0.3, 0.8, 0.7, 0.6).unwrap();
    let config = SolverConfig::new(5.0, 500, params).unwrap();
    let run = || {
        let w = sample_fbm(5.0, 500, 0.7, 42).unwrap();
        solve_path(&w, 0.9, &config, &table).unwrap()
    };
    assert_eq!(run(), run());
}
