//! Pullback random fixed points, running time averages and contraction
//! diagnostics.
//!
//! For a two-sided signal `ω`, the state at time 0 of the scheme started at
//! time `-n` from a fixed anchor converges as `n → ∞` to `Ŷ(ω)`, whatever the
//! anchor. Its law is the stationary law of the transformed process, so
//! `E f(F⁻¹(Ŷ))` is the limit of long-run time averages.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_solver::{linear_fit, solve_path, solve_path_from_y, SolutionPath, SolverConfig};
use crate::gaussian_paths::{sample_fbm, sample_two_sided_fbm, wiener_shift, GaussianPath};
use crate::io::fmt_f64;
use crate::jacobi_transform::{contraction_constant, ModelParams, TransformTable};
use crate::parallel::{derive_seed, map_indexed, Execution};

/// Pullback approximation of `Ŷ(ω)` for one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicEstimate {
    pub y_hat: f64,
    pub x_hat: f64,
    /// Depth of the last iterate.
    pub n_pullback: usize,
    /// `|z_n - z_{n-1}|` at the returned depth.
    pub cauchy_gap: f64,
    /// `gaps[k] = |z_{k+1} - z_k|`, with `z_0` the anchor itself.
    pub gaps: Vec<f64>,
    /// Distance at the returned depth to the iterate from the second anchor.
    pub anchor_gap: f64,
}

/// Grid nodes per unit time of a pullback signal.
fn nodes_per_unit(w: &GaussianPath) -> Result<usize> {
    let m = (1.0 / w.dt()).round();
    if m < 1.0 || (m * w.dt() - 1.0).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "pullback needs an integer number of nodes per unit time, grid step is {}",
            w.dt()
        )));
    }
    Ok(m as usize)
}

/// State at time 0 of the scheme started from `y0` at time `-depth`.
fn pullback_iterate(
    w: &GaussianPath,
    depth: usize,
    per_unit: usize,
    y0: f64,
    params: &ModelParams,
    table: &TransformTable,
) -> Result<f64> {
    if depth == 0 {
        return Ok(y0);
    }
    if depth * per_unit > w.origin() {
        return Err(Error::GridMismatch(format!(
            "signal starts at {} but depth {depth} was requested",
            w.t0()
        )));
    }
    let start = wiener_shift(w, -(depth as f64))?;
    let config = SolverConfig::new(depth as f64, depth * per_unit, *params)?;
    Ok(solve_path_from_y(&start, y0, &config, table)?.last().y)
}

/// The iterates `z_0, …, z_{n_max}` from the anchor `y0` (diagnostic form of
/// [`pullback_fixed_point`] with no stopping rule).
pub fn pullback_sequence(
    w: &GaussianPath,
    params: &ModelParams,
    table: &TransformTable,
    n_max: usize,
    y0: f64,
) -> Result<Vec<f64>> {
    let per_unit = nodes_per_unit(w)?;
    (0..=n_max)
        .map(|n| pullback_iterate(w, n, per_unit, y0, params, table))
        .collect()
}

/// Pullback iteration from the anchor `x = F⁻¹(F(1)/2)`, stopping once two
/// consecutive depths agree within `tol` and a second anchor (`x = 0.1`)
/// lands within `2 tol` of the same value.
pub fn pullback_fixed_point(
    w: &GaussianPath,
    params: &ModelParams,
    table: &TransformTable,
    n_max: usize,
    tol: f64,
) -> Result<ErgodicEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if n_max == 0 {
        return Err(Error::invalid("pullback_depth", "must be at least 1"));
    }
    let per_unit = nodes_per_unit(w)?;
    let anchor = 0.5 * table.f1();
    let second = table.eval_f(0.1)?;
    let mut prev = anchor;
    let mut gaps = Vec::with_capacity(n_max);
    let mut last_anchor_gap = f64::INFINITY;
    for n in 1..=n_max {
        let z = pullback_iterate(w, n, per_unit, anchor, params, table)?;
        let gap = (z - prev).abs();
        gaps.push(gap);
        prev = z;
        if gap < tol {
            let z2 = pullback_iterate(w, n, per_unit, second, params, table)?;
            last_anchor_gap = (z2 - z).abs();
            if last_anchor_gap <= 2.0 * tol {
                return Ok(ErgodicEstimate {
                    y_hat: z,
                    x_hat: table.inverse_unchecked(z),
                    n_pullback: n,
                    cauchy_gap: gap,
                    gaps,
                    anchor_gap: last_anchor_gap,
                });
            }
        }
    }
    Err(Error::PullbackNotConverged {
        depth: n_max,
        gap: gaps
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
            .max(if last_anchor_gap.is_finite() {
                last_anchor_gap
            } else {
                0.0
            }),
    })
}

/// Running averages `S_t = (1/t) ∫₀ᵗ f(x_s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAverageSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeAverageSeries {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("series is never empty")
    }

    /// Writes CSV `t,S`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,S")?;
        for (t, s) in self.times.iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*s))?;
        }
        Ok(())
    }
}

/// Trapezoidal running average of `f(x)` along the solver grid; `S_0 = f(x_0)`.
pub fn time_average(path: &SolutionPath, f: impl Fn(f64) -> f64) -> TimeAverageSeries {
    let mut values = Vec::with_capacity(path.len());
    let mut integral = 0.0;
    let mut prev = f(path.x[0]);
    values.push(prev);
    for k in 1..path.len() {
        let cur = f(path.x[k]);
        integral += 0.5 * (prev + cur) * (path.times[k] - path.times[k - 1]);
        prev = cur;
        values.push(integral / (path.times[k] - path.times[0]));
    }
    TimeAverageSeries {
        times: path.times.clone(),
        values,
    }
}

/// `W₁` between two empirical measures of equal size on ℝ.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(
            "samples",
            "need two non-empty samples of equal size",
        ));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub pullback_depth: usize,
    pub pullback_tol: f64,
    pub x0: f64,
    pub seed: u64,
}

/// Time average against fixed-point average over an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub time_avg_mean: f64,
    pub fixed_point_mean: f64,
    pub diff: f64,
    /// Combined standard error of `diff`.
    pub se: f64,
    /// `W₁` between the samples of `X_T` and of `X̂`.
    pub wasserstein1: f64,
    pub n_paths: usize,
    pub max_pullback_depth: usize,
    #[serde(skip)]
    pub time_averages: Vec<f64>,
    #[serde(skip)]
    pub x_final: Vec<f64>,
    #[serde(skip)]
    pub x_hat: Vec<f64>,
}

fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var)
}

/// Member `i` drives the forward run with seed `derive_seed(seed, 2i)` and the
/// independent pullback with `derive_seed(seed, 2i + 1)`, so the two means
/// are independent and their standard errors add in quadrature.
pub fn ergodic_estimate_ensemble(
    params: &ModelParams,
    config: &EnsembleConfig,
    f: &(dyn Fn(f64) -> f64 + Sync),
    exec: Execution,
) -> Result<EnsembleReport> {
    if config.n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be positive"));
    }
    if !(config.x0 > 0.0 && config.x0 < 1.0) {
        return Err(Error::domain("x0", config.x0, "(0, 1)"));
    }
    let solver = SolverConfig::new(config.horizon, config.steps, *params)?;
    let table = TransformTable::new(params.beta)?;
    // Same grid density as the forward run, rounded to whole nodes per unit.
    let per_unit = ((config.steps as f64 / config.horizon).round() as usize).max(1);
    let runs = map_indexed(
        config.n_paths,
        exec,
        |i| -> Result<(f64, f64, f64, usize)> {
            let i = i as u64;
            let w = sample_fbm(
                config.horizon,
                config.steps,
                config.hurst,
                derive_seed(config.seed, 2 * i),
            )?;
            let path = solve_path(&w, config.x0, &solver, &table)?;
            let s = time_average(&path, f).last();
            let past = sample_two_sided_fbm(
                config.pullback_depth as f64,
                1.0,
                per_unit,
                config.hurst,
                derive_seed(config.seed, 2 * i + 1),
            )?;
            let est = pullback_fixed_point(
                &past,
                params,
                &table,
                config.pullback_depth,
                config.pullback_tol,
            )?;
            Ok((s, path.last().x, est.x_hat, est.n_pullback))
        },
    );
    let mut time_averages = Vec::with_capacity(config.n_paths);
    let mut x_final = Vec::with_capacity(config.n_paths);
    let mut x_hat = Vec::with_capacity(config.n_paths);
    let mut max_depth = 0;
    for run in runs {
        let (s, xt, xh, d) = run?;
        time_averages.push(s);
        x_final.push(xt);
        x_hat.push(xh);
        max_depth = max_depth.max(d);
    }
    let fixed: Vec<f64> = x_hat.iter().map(|&x| f(x)).collect();
    let (ma, va) = mean_and_var(&time_averages);
    let (mb, vb) = mean_and_var(&fixed);
    let n = config.n_paths as f64;
    Ok(EnsembleReport {
        time_avg_mean: ma,
        fixed_point_mean: mb,
        diff: ma - mb,
        se: (va / n + vb / n).sqrt(),
        wasserstein1: wasserstein1(&x_final, &x_hat)?,
        n_paths: config.n_paths,
        max_pullback_depth: max_depth,
        time_averages,
        x_final,
        x_hat,
    })
}

/// Outcome of running two initial conditions on one signal.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    /// Least-squares slope of `ln|y¹_t - y²_t|` against `t`.
    pub slope: f64,
    /// The contraction constant `l`.
    pub l: f64,
    /// First node time where the two paths agree to rounding, if any.
    pub merge_time: Option<f64>,
    /// `max_t (|Δy_t| - |Δy_0| e^{-lt})`; nonpositive when the bound holds.
    pub max_bound_excess: f64,
}

/// Distances below this are treated as merged paths.
const MERGE_DIST: f64 = 1e-12;

/// Solves from both initial states over the whole forward part of `w` and
/// fits the exponential decay of their distance in `y`.
pub fn contraction_diagnostic(
    w: &GaussianPath,
    params: &ModelParams,
    x0_pair: (f64, f64),
    table: &TransformTable,
) -> Result<ContractionReport> {
    if x0_pair.0 == x0_pair.1 {
        return Err(Error::invalid("x0_pair", "initial states must differ"));
    }
    let steps = w.len() - 1 - w.origin();
    let horizon = steps as f64 * w.dt();
    let config = SolverConfig::new(horizon, steps, *params)?;
    let a = solve_path(w, x0_pair.0, &config, table)?;
    let b = solve_path(w, x0_pair.1, &config, table)?;
    let l = contraction_constant(params)?;
    let d0 = (a.y[0] - b.y[0]).abs();
    let mut pts = Vec::new();
    let mut merge_time = None;
    let mut excess = f64::NEG_INFINITY;
    for k in 0..a.len() {
        let d = (a.y[k] - b.y[k]).abs();
        let t = a.times[k];
        excess = excess.max(d - d0 * (-l * t).exp());
        if d <= MERGE_DIST {
            merge_time.get_or_insert(t);
        } else if merge_time.is_none() {
            pts.push((t, d.ln()));
        }
    }
    let (slope, _) = linear_fit(&pts).map_err(|_| {
        Error::DegenerateFit(format!(
            "paths merged at t = {} before a decay rate could be fitted",
            merge_time.unwrap_or(0.0)
        ))
    })?;
    Ok(ContractionReport {
        slope,
        l,
        merge_time,
        max_bound_excess: excess,
    })
}
