//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rjacobi::ergodic::{
    contraction_diagnostic, ergodic_estimate_ensemble, pullback_sequence, EnsembleConfig,
};
use rjacobi::euler_solver::{convergence_study, solve_path};
use rjacobi::gaussian_paths::{fbm_covariance, sample_fbm, sample_two_sided_fbm, GaussianPath};
use rjacobi::jacobi_transform::{contraction_constant, eval_g_of_f_inv};
use rjacobi::malliavin_density::{
    estimate_g, integrated_slope, malliavin_derivative, malliavin_norm, nv_density, DriftMode,
    GridConfig, McConfig,
};
use rjacobi::morris_lecar::{rk4_reference, simulate_ml, simulate_ml_with_signal};
use rjacobi::parallel::map_indexed;
use rjacobi::{Execution, MLParams, ModelParams, SolverConfig, TransformTable};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn reference_params() -> ModelParams {
    ModelParams::new(1.0, 0.5, 1.0, 0.5, 0.55).unwrap()
}

fn closed_form() -> Outcome {
    let start = Instant::now();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let params = reference_params();
    let mut worst = [0.0f64; 3];
    for i in 0..1000 {
        let u = (i as f64 + 0.5) / 1000.0;
        let f = table.eval_f(u).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max((f - (FRAC_PI_2 + (2.0 * u - 1.0).asin())).abs());
        let y = u * PI;
        let x = table.eval_f_inv(y).map_err(|e| e.to_string())?;
        worst[1] = worst[1].max((x - 0.5 * (1.0 - y.cos())).abs());
        let g = eval_g_of_f_inv(y, &params, &table).map_err(|e| e.to_string())?;
        let exact = y.cos() / y.sin();
        worst[2] = worst[2].max((g - exact).abs() / exact.abs().max(1.0));
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    check(
        worst.iter().all(|w| *w <= 1e-10),
        format!(
            "max errors F {:.1e}, F^-1 {:.1e}, G(F^-1) {:.1e} (rel) in {:.0?}",
            worst[0],
            worst[1],
            worst[2],
            start.elapsed()
        ),
    )
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let n_ref = 1 << 14;
    let n_list: Vec<usize> = (5..=10).map(|k| 1 << k).collect();
    let w = sample_fbm(1.0, n_ref, 0.6, 2024).map_err(|e| e.to_string())?;
    let rough = convergence_study(&w, 0.3, &reference_params(), &n_list, n_ref, &table)
        .map_err(|e| e.to_string())?;
    let sine = GaussianPath::from_fn(1.0, n_ref, f64::sin).map_err(|e| e.to_string())?;
    let smooth = convergence_study(&sine, 0.3, &reference_params(), &n_list, n_ref, &table)
        .map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(60))?;
    check(
        rough.slope <= -0.5 && smooth.slope <= -0.95,
        format!(
            "fBm slope {:.3} (<= -0.5), sin slope {:.3} (<= -0.95)",
            rough.slope, smooth.slope
        ),
    )
}

fn confinement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let draws: Vec<(ModelParams, f64, f64, u64)> = (0..1000)
        .map(|_| {
            let hurst = rng.gen_range(0.3..0.95);
            let alpha = 0.95 * hurst;
            let beta = rng.gen_range((1.0 - alpha + 1e-3)..0.999);
            let params = ModelParams {
                theta: rng.gen_range(0.1..5.0),
                mu: rng.gen_range(0.01..0.99),
                gamma: rng.gen_range(0.1..3.0),
                beta,
                alpha,
            };
            (params, hurst, rng.gen_range(1e-6..1.0 - 1e-6), rng.gen())
        })
        .collect();
    let violations: usize = map_indexed(draws.len(), Execution::default(), |i| {
        let (params, hurst, x0, seed) = draws[i];
        let run = || -> rjacobi::Result<usize> {
            let table = TransformTable::new(params.beta)?;
            let w = sample_fbm(5.0, 250, hurst, seed)?;
            let path = solve_path(&w, x0, &SolverConfig::new(5.0, 250, params)?, &table)?;
            Ok(path
                .y
                .iter()
                .zip(&path.x)
                .filter(|(&y, &x)| !(y > 0.0 && y < table.f1() && x > 0.0 && x < 1.0))
                .count())
        };
        run().unwrap_or(1)
    })
    .into_iter()
    .sum();
    check(
        violations == 0,
        format!("{violations} violations over 1000 random (params, seed) draws"),
    )
}

fn contraction() -> Outcome {
    let start = Instant::now();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let mut slopes = Vec::new();
    let mut excess = f64::NEG_INFINITY;
    for seed in 0..10 {
        let w = sample_fbm(10.0, 1000, 0.6, 500 + seed).map_err(|e| e.to_string())?;
        let r = contraction_diagnostic(&w, &reference_params(), (0.1, 0.9), &table)
            .map_err(|e| e.to_string())?;
        slopes.push(r.slope);
        excess = excess.max(r.max_bound_excess);
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    let worst = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check(
        worst <= -0.9 && excess <= 1e-8,
        format!(
            "least steep slope {worst:.3} over 10 paths (<= -0.9), max bound excess {excess:.1e}"
        ),
    )
}

fn pullback_bound() -> Outcome {
    let params = reference_params();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let l = contraction_constant(&params).map_err(|e| e.to_string())?;
    let worst = map_indexed(50, Execution::default(), |seed| -> Result<f64, String> {
        let w = sample_two_sided_fbm(20.0, 1.0, 7, 0.6, 7000 + seed as u64)
            .map_err(|e| e.to_string())?;
        let z = pullback_sequence(&w, &params, &table, 20, 0.5 * table.f1())
            .map_err(|e| e.to_string())?;
        Ok((1..=20)
            .map(|n| (z[n] - z[n - 1]).abs() / (table.f1() * (-l * (n as f64 - 1.0)).exp()))
            .fold(0.0, f64::max))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?
    .into_iter()
    .fold(0.0, f64::max);
    check(
        worst <= 1.0 + 1e-6,
        format!("max gap / (F1 e^(-l(n-1))) = {worst:.3e} over depths 1..20, 50 seeds"),
    )
}

fn ergodic() -> Outcome {
    let start = Instant::now();
    let params = reference_params();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let config = EnsembleConfig {
        hurst: 0.6,
        horizon: 120.0,
        steps: 850,
        n_paths: 200,
        pullback_depth: 60,
        pullback_tol: 1e-8,
        x0: table.eval_f_inv(1.5).map_err(|e| e.to_string())?,
        seed: 606,
    };
    let r = ergodic_estimate_ensemble(&params, &config, &|x| x, Execution::default())
        .map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    check(
        r.diff.abs() <= 3.0 * r.se,
        format!(
            "time average {:.4} vs fixed point {:.4}: |diff| {:.4} <= 3 se = {:.4}",
            r.time_avg_mean,
            r.fixed_point_mean,
            r.diff.abs(),
            3.0 * r.se
        ),
    )
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_rjacobi"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_cli(command: &str, config: &Path, out: &Path, threads: Option<usize>) -> Result<(), String> {
    let mut cmd = Command::new(bin());
    cmd.arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out);
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{command} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        ))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn interior_csv(path: &Path) -> Result<bool, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    Ok(text.lines().skip(1).all(|line| {
        let x: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        x > 0.0 && x < 1.0
    }))
}

fn canned() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = tmp.path().join("a");
    run_cli("simulate", &configs().join("config_a.json"), &a, None)?;
    let summary = read_json(&a.join("summary.json"))?;
    let ordered = summary["members"][0]["ordered"].as_bool() == Some(true);
    let mut interior = true;
    for i in 0..3 {
        interior &= interior_csv(&a.join(format!("path_0_{i}.csv")))?;
    }
    let b = tmp.path().join("b");
    run_cli("simulate", &configs().join("config_b.json"), &b, None)?;
    let summary = read_json(&b.join("summary.json"))?;
    let band = summary["s_final_band"][0].as_f64().ok_or("missing band")?;
    let finals: Vec<f64> = (0..4)
        .map(|j| {
            summary["members"][j]["s_final"][0]
                .as_f64()
                .unwrap_or(f64::NAN)
        })
        .collect();
    let s_files = (0..4).all(|j| b.join(format!("S_{j}_0.csv")).exists());
    check(
        ordered && interior && s_files && band <= 0.1,
        format!(
            "A: 3 paths interior {interior}, ordered {ordered}; B: S_T = {:.3?}, band {band:.4} (<= 0.1)",
            finals
        ),
    )
}

fn sandwich() -> Outcome {
    let params = reference_params();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let n = 40;
    let config = SolverConfig::new(1.0, n, params).map_err(|e| e.to_string())?;
    let c = params.noise_scale();
    let counts = map_indexed(
        200,
        Execution::default(),
        |i| -> Result<(usize, usize), String> {
            let w = sample_fbm(1.0, n, 0.6, 3000 + i as u64).map_err(|e| e.to_string())?;
            let path = solve_path(&w, 0.05 + 0.9 * (i as f64 / 199.0), &config, &table)
                .map_err(|e| e.to_string())?;
            let lower = integrated_slope(&path, &params).exp();
            let mut checked = 0;
            let mut bad = 0;
            for k in 1..=n {
                let t = path.times[k];
                let d = malliavin_derivative(&path, &params, t).map_err(|e| e.to_string())?;
                for &v in &d.profile.levels()[..k] {
                    checked += 1;
                    if v > c * (1.0 + 1e-8) || v < c * lower * (1.0 - 1e-8) {
                        bad += 1;
                    }
                }
                let g = malliavin_norm(&d, 0.6).map_err(|e| e.to_string())?;
                let r = fbm_covariance(t, t, 0.6).map_err(|e| e.to_string())?;
                checked += 1;
                if g > c * c * r * (1.0 + 1e-8) || g < c * c * r * lower * lower * (1.0 - 1e-8) {
                    bad += 1;
                }
            }
            Ok((checked, bad))
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let checked: usize = counts.iter().map(|c| c.0).sum();
    let bad: usize = counts.iter().map(|c| c.1).sum();
    check(
        bad == 0,
        format!("{bad} of {checked} bound checks violated on 200 paths"),
    )
}

fn trapezoid_l1(ys: &[f64], f: &[f64], pdf: impl Fn(f64) -> f64) -> f64 {
    ys.windows(2)
        .zip(f.windows(2))
        .map(|(y, v)| 0.5 * (y[1] - y[0]) * ((v[0] - pdf(y[0])).abs() + (v[1] - pdf(y[1])).abs()))
        .sum()
}

/// Histogram of `samples` on `bins` equal cells, compared with the piecewise
/// linear density on a fine sub-grid.
fn histogram_l1(samples: &[f64], ys: &[f64], f: &[f64], bins: usize) -> f64 {
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &s in samples {
        counts[(((s - lo) / width) as usize).min(bins - 1)] += 1.0;
    }
    let density = |y: f64| {
        if y <= ys[0] || y >= ys[ys.len() - 1] {
            return 0.0;
        }
        let k = ys.partition_point(|g| *g <= y) - 1;
        let s = (y - ys[k]) / (ys[k + 1] - ys[k]);
        f[k] * (1.0 - s) + f[k + 1] * s
    };
    let sub = 20;
    let m = samples.len() as f64;
    let mut l1 = 0.0;
    for (b, c) in counts.iter().enumerate() {
        for q in 0..sub {
            let y = lo + width * (b as f64 + (q as f64 + 0.5) / sub as f64);
            l1 += (c / (m * width) - density(y)).abs() * width / sub as f64;
        }
    }
    l1
}

fn density() -> Outcome {
    let start = Instant::now();
    let params = reference_params();
    let table = TransformTable::new(0.5).map_err(|e| e.to_string())?;
    let grid = GridConfig {
        horizon: 1.0,
        steps: 50,
    };
    let mc = McConfig::default();
    let gauss = estimate_g(
        &params,
        0.6,
        1.0,
        0.4,
        grid,
        mc,
        DriftMode::Disabled,
        5,
        Execution::default(),
    )
    .and_then(nv_density)
    .map_err(|e| e.to_string())?;
    let normal = Normal::new(
        table.eval_f(0.4).map_err(|e| e.to_string())?,
        params.noise_scale(),
    )
    .unwrap();
    // Grid part plus the exact law's mass outside the grid.
    let l1_gauss = trapezoid_l1(&gauss.ys, &gauss.f, |y| normal.pdf(y))
        + normal.cdf(gauss.ys[0])
        + (1.0 - normal.cdf(gauss.ys[gauss.ys.len() - 1]));
    let full = estimate_g(
        &params,
        0.6,
        1.0,
        0.3,
        grid,
        mc,
        DriftMode::Full,
        6,
        Execution::default(),
    )
    .and_then(nv_density)
    .map_err(|e| e.to_string())?;
    let config = SolverConfig::new(1.0, 50, params).map_err(|e| e.to_string())?;
    let ys: Vec<f64> = map_indexed(10_000, Execution::default(), |i| {
        let w = sample_fbm(1.0, 50, 0.6, 1_000_000 + i as u64).unwrap();
        solve_path(&w, 0.3, &config, &table).unwrap().last().y
    });
    let l1_full = histogram_l1(&ys, &full.ys, &full.f, 40);
    let masses = (
        gauss.mass.unwrap_or(f64::NAN),
        full.mass.unwrap_or(f64::NAN),
    );
    within(start.elapsed(), Duration::from_secs(300))?;
    check(
        l1_gauss <= 0.05 && l1_full <= 0.15 && [masses.0, masses.1].iter().all(|m| (0.9..=1.1).contains(m)),
        format!(
            "Gaussian L1 {l1_gauss:.4} (<= 0.05), full-model L1 {l1_full:.4} (<= 0.15), raw masses {:.3}/{:.3}, {:.0?}",
            masses.0,
            masses.1,
            start.elapsed()
        ),
    )
}

fn classic(sigma_star: f64) -> MLParams {
    MLParams {
        c: 20.0,
        g_ca: 4.4,
        g_k: 8.0,
        g_l: 2.0,
        v_ca: 120.0,
        v_k: -84.0,
        v_l: -60.0,
        v1: -1.2,
        v2: 18.0,
        v3: 2.0,
        v4: 30.0,
        phi: 0.04,
        i_ext: 90.0,
        sigma_star,
        beta: 0.6,
        hurst: 0.7,
        alpha: 0.65,
    }
}

fn neuron() -> Outcome {
    let p = classic(0.0);
    let (horizon, n) = (50.0, 400);
    let traj = simulate_ml(&p, 0.2, -40.0, horizon, n, 3).map_err(|e| e.to_string())?;
    let reference = rk4_reference(&p, 0.2, -40.0, horizon, 10 * n, 10);
    let err = traj
        .x
        .iter()
        .zip(&reference.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut flat = classic(0.4);
    flat.g_ca = 0.0;
    flat.g_k = 0.0;
    flat.g_l = 0.0;
    flat.i_ext = 0.0;
    let (v0, x0) = (-25.0, 0.35);
    let w = sample_fbm(20.0, 200, flat.hurst, 11).map_err(|e| e.to_string())?;
    let coupled =
        simulate_ml_with_signal(&flat, x0, v0, &w, 20.0, 200).map_err(|e| e.to_string())?;
    let frozen = flat.frozen_params(v0).map_err(|e| e.to_string())?;
    let table = TransformTable::new(flat.beta).map_err(|e| e.to_string())?;
    let base = solve_path(
        &w,
        x0,
        &SolverConfig::new(20.0, 200, frozen).map_err(|e| e.to_string())?,
        &table,
    )
    .map_err(|e| e.to_string())?;
    let identical = coupled.x == base.x;
    check(
        err <= 10.0 / n as f64 && identical,
        format!(
            "T = {horizon}, n = {n}: sup X error {err:.2e} (<= {:.2e}); constant-V harness bit-identical {identical}",
            10.0 / n as f64
        ),
    )
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            let mut v: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            v.as_object_mut().unwrap().remove("wall_time_seconds");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        files.insert(name, bytes);
    }
    Ok(files)
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [
        ("simulate", "config_a.json"),
        ("simulate", "config_b.json"),
        ("convergence", "convergence_sin.json"),
        ("ergodic", "ergodic.json"),
        ("density", "density_gaussian.json"),
        ("neuron", "neuron_sample.json"),
    ];
    let mut compared = 0;
    for (k, (command, file)) in runs.iter().enumerate() {
        let config = configs().join(file);
        let first = tmp.path().join(format!("{k}_first"));
        let second = tmp.path().join(format!("{k}_second"));
        let replay = tmp.path().join(format!("{k}_replay"));
        run_cli(command, &config, &first, Some(1))?;
        run_cli(command, &config, &second, Some(3))?;
        run_cli(command, &first.join("manifest.json"), &replay, None)?;
        let a = snapshot(&first)?;
        if a != snapshot(&second)? {
            return Err(format!("{file}: outputs differ between identical runs"));
        }
        if a != snapshot(&replay)? {
            return Err(format!("{file}: rerun from manifest differs"));
        }
        compared += a.len();
    }
    check(
        true,
        format!(
            "{compared} files byte-identical across reruns, thread counts and manifest replays"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("closed-form transform oracle", closed_form),
        ("scheme convergence rates", convergence),
        ("interior confinement", confinement),
        ("contraction", contraction),
        ("pullback Cauchy bound", pullback_bound),
        ("ergodic self-consistency", ergodic),
        ("canned configs A and B", canned),
        ("Malliavin sandwich", sandwich),
        ("density oracles", density),
        ("Morris-Lecar noiseless oracle", neuron),
        ("CLI reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
