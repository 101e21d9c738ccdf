//! Implicit Euler scheme for the transformed equation
//! `y_{k+1} = y_k + h (G∘F⁻¹)(y_{k+1}) + γθ^β (w_{t_{k+1}} - w_{t_k})`.
//!
//! Each step solves `φ(y) = y - h (G∘F⁻¹)(y) - A = 0`. Because `G∘F⁻¹` is
//! strictly decreasing and diverges at both ends of `(0, F(1))`, `φ` is a
//! strictly increasing bijection onto ℝ and the root always exists and is
//! interior. The root is searched in the original coordinate `x = F⁻¹(y)`,
//! where `φ(F(x)) = F(x) - h G(x) - A` needs one quadrature per evaluation and
//! no inner inversion; `y = F(x)` is recovered at the end.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_paths::{sample_fbm, GaussianPath};
use crate::io::fmt_f64;
use crate::jacobi_transform::{ModelParams, Split, TransformTable};
use crate::parallel::{derive_seed, map_indexed, Execution};

pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
const MAX_ROOT_ITER: usize = 200;

/// A point of the state space in both coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    /// Transformed coordinate in `(0, F(1))`.
    pub y: f64,
    /// Original coordinate `F⁻¹(y)` in `(0, 1)`.
    pub x: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub horizon: f64,
    pub steps: usize,
    pub root_tol: f64,
    pub params: ModelParams,
}

impl SolverConfig {
    pub fn new(horizon: f64, steps: usize, params: ModelParams) -> Result<Self> {
        let c = Self {
            horizon,
            steps,
            root_tol: DEFAULT_ROOT_TOL,
            params,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(
                "T",
                format!("horizon must be positive, got {}", self.horizon),
            ));
        }
        if self.steps == 0 {
            return Err(Error::invalid("n", "need at least one step"));
        }
        if !(self.root_tol > 0.0) {
            return Err(Error::invalid("root_tol", "must be positive"));
        }
        self.params.validate()
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Solves `F(x) - h G(x) = a` for `x ∈ (0, 1)`, starting Newton from `hint`.
///
/// `ψ'(x) = F'(x)(1 - h r(x)) > F'(x) > 0`, so the root is unique; Newton
/// steps leaving the current bracket are replaced by bisection, which turns
/// geometric near either end.
pub(crate) fn solve_implicit(
    a: f64,
    h: f64,
    params: &ModelParams,
    table: &TransformTable,
    hint: Split,
    tol: f64,
) -> Result<(Split, f64)> {
    let (mut lo, mut hi) = (Split::ZERO, Split::ONE);
    let mut p = if hint.x > 0.0 && hint.c > 0.0 {
        hint
    } else {
        Split::from_x(0.5)
    };
    let target = tol * (1.0 + a.abs());
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ROOT_ITER {
        let fy = table.f_split(p);
        let hg = h * params.drift_split(p);
        let psi = fy - hg - a;
        residual = psi.abs();
        if residual <= target {
            return Ok((p, fy));
        }
        if psi > 0.0 {
            hi = p;
        } else {
            lo = p;
        }
        let slope = table.f_prime_split(p) * (1.0 - h * params.slope_split(p));
        let dx = -psi / slope;
        let newton = p.shifted(dx);
        let next = if dx.is_finite() && lo.lt(&newton) && newton.lt(&hi) {
            newton
        } else if lo.x == 0.0 && hi.x < 0.25 {
            // Roots near an end can sit many orders of magnitude inside it.
            Split::from_x(hi.x * 1e-3)
        } else if hi.c == 0.0 && lo.c < 0.25 {
            Split::from_c(lo.c * 1e-3)
        } else {
            Split::midpoint(lo, hi)
        };
        if (next.near() - p.near()).abs() <= 4.0 * f64::EPSILON * p.near() {
            // Converged to machine resolution in the exact coordinate.
            let fy = table.f_split(next);
            let hg = h * params.drift_split(next);
            let psi = fy - hg - a;
            if psi.abs() <= tol * (1.0 + a.abs() + hg.abs()) {
                return Ok((next, fy));
            }
            residual = psi.abs();
            break;
        }
        p = next;
    }
    Err(Error::RootNotConverged {
        iterations: MAX_ROOT_ITER,
        residual,
    })
}

/// One step of the scheme from `y_k` with signal increment `dw` and step `h`.
pub fn implicit_step(
    y_k: f64,
    dw: f64,
    h: f64,
    params: &ModelParams,
    table: &TransformTable,
) -> Result<f64> {
    if !(y_k > 0.0 && y_k < table.f1()) {
        return Err(Error::domain("y_k", y_k, "(0, F(1))"));
    }
    if !(h > 0.0) {
        return Err(Error::domain("h", h, "(0, ∞)"));
    }
    let a = y_k + params.noise_scale() * dw;
    let hint = table.split_guess(y_k);
    Ok(solve_implicit(a, h, params, table, hint, DEFAULT_ROOT_TOL)?.1)
}

/// The scheme's output on `{k T/n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl SolutionPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step_size(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn last(&self) -> State {
        let k = self.len() - 1;
        State {
            y: self.y[k],
            x: self.x[k],
        }
    }

    /// Piecewise-linear interpolation of `y` at time `t`.
    pub fn y_at(&self, t: f64) -> f64 {
        let n = self.len();
        if t <= self.times[0] {
            return self.y[0];
        }
        if t >= self.times[n - 1] {
            return self.y[n - 1];
        }
        let dt = self.step_size();
        let k = (((t - self.times[0]) / dt).floor() as usize).min(n - 2);
        let frac = (t - self.times[k]) / dt;
        self.y[k] + frac * (self.y[k + 1] - self.y[k])
    }

    /// `F⁻¹` of the interpolated `y`.
    pub fn x_at(&self, t: f64, table: &TransformTable) -> f64 {
        table.inverse_unchecked(self.y_at(t))
    }

    /// Writes CSV `t,y,x`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,y,x")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.y[k]),
                fmt_f64(self.x[k])
            )?;
        }
        Ok(())
    }
}

/// Number of signal nodes per solver step, checking that the solver grid is
/// a coarsening of the signal grid and that `[0, T]` is covered.
fn signal_stride(w: &GaussianPath, config: &SolverConfig) -> Result<usize> {
    let h = config.step_size();
    let ratio = h / w.dt();
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * m {
        return Err(Error::GridMismatch(format!(
            "solver step {h} is not a multiple of the signal step {}",
            w.dt()
        )));
    }
    let m = m as usize;
    if w.origin() + m * config.steps >= w.len() {
        return Err(Error::GridMismatch(format!(
            "signal ends at {} before the horizon {}",
            w.t_end(),
            config.horizon
        )));
    }
    Ok(m)
}

/// Runs the scheme from `y0` over `[0, T]` of the signal `w`.
pub fn solve_path_from_y(
    w: &GaussianPath,
    y0: f64,
    config: &SolverConfig,
    table: &TransformTable,
) -> Result<SolutionPath> {
    config.validate()?;
    if !(y0 > 0.0 && y0 < table.f1()) {
        return Err(Error::domain("y0", y0, "(0, F(1))"));
    }
    let m = signal_stride(w, config)?;
    let h = config.step_size();
    let params = &config.params;
    let noise = params.noise_scale();
    let n = config.steps;
    let o = w.origin();

    let mut times = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut p = table.inverse_split(y0);
    let mut y = y0;
    times.push(0.0);
    ys.push(y);
    xs.push(p.x);
    for k in 0..n {
        let dw = w.increment(o + k * m, o + (k + 1) * m);
        (p, y) = solve_implicit(y + noise * dw, h, params, table, p, config.root_tol)
            .map_err(|e| e.at_step(k + 1))?;
        times.push((k + 1) as f64 * h);
        ys.push(y);
        xs.push(p.x);
    }
    Ok(SolutionPath {
        times,
        y: ys,
        x: xs,
    })
}

/// Runs the scheme from `x0 ∈ (0, 1)`.
pub fn solve_path(
    w: &GaussianPath,
    x0: f64,
    config: &SolverConfig,
    table: &TransformTable,
) -> Result<SolutionPath> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::domain("x0", x0, "(0, 1)"));
    }
    let y0 = table.f_unchecked(x0);
    let mut path = solve_path_from_y(w, y0, config, table)?;
    // Keep the caller's x0 exactly rather than F⁻¹(F(x0)).
    path.x[0] = x0;
    Ok(path)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ConvergenceEntry {
    pub n: usize,
    pub sup_error: f64,
}

/// Sup-node errors against a fine reference and the fitted log-log slope.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    pub n_ref: usize,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares fit of `ln e = intercept + slope ln n` over positive errors.
pub fn fit_loglog(entries: &[ConvergenceEntry]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.sup_error > 0.0)
        .map(|e| ((e.n as f64).ln(), e.sup_error.ln()))
        .collect();
    linear_fit(&pts)
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn check_divisibility(n_list: &[usize], n_ref: usize) -> Result<()> {
    if n_ref == 0 {
        return Err(Error::invalid("n_ref", "must be positive"));
    }
    for &n in n_list {
        if n == 0 || !n_ref.is_multiple_of(n) {
            return Err(Error::GridMismatch(format!(
                "n_ref = {n_ref} is not a multiple of n = {n}"
            )));
        }
    }
    Ok(())
}

/// Sup-node error of the step-`n` solutions against the step-`n_ref`
/// solution, all driven by the same fine signal (coarse increments are
/// differences of fine nodes).
fn sup_errors(
    w_fine: &GaussianPath,
    x0: f64,
    params: &ModelParams,
    n_list: &[usize],
    n_ref: usize,
    table: &TransformTable,
) -> Result<Vec<ConvergenceEntry>> {
    check_divisibility(n_list, n_ref)?;
    let horizon = n_ref as f64 * w_fine.dt();
    let reference = solve_path(
        w_fine,
        x0,
        &SolverConfig::new(horizon, n_ref, *params)?,
        table,
    )?;
    n_list
        .iter()
        .map(|&n| {
            let coarse = solve_path(w_fine, x0, &SolverConfig::new(horizon, n, *params)?, table)?;
            let m = n_ref / n;
            let sup_error = (0..=n)
                .map(|k| (coarse.x[k] - reference.x[k * m]).abs())
                .fold(0.0, f64::max);
            Ok(ConvergenceEntry { n, sup_error })
        })
        .collect()
}

/// Convergence study along one signal sampled at `n_ref` resolution.
pub fn convergence_study(
    w_fine: &GaussianPath,
    x0: f64,
    params: &ModelParams,
    n_list: &[usize],
    n_ref: usize,
    table: &TransformTable,
) -> Result<ConvergenceReport> {
    let entries = sup_errors(w_fine, x0, params, n_list, n_ref, table)?;
    let (slope, intercept) = fit_loglog(&entries)?;
    Ok(ConvergenceReport {
        entries,
        n_ref,
        slope,
        intercept,
    })
}

/// Ensemble version: `(E ‖xⁿ - x^ref‖^p_∞)^{1/p}` over `paths` fBm signals,
/// member `i` seeded with `derive_seed(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study_ensemble(
    params: &ModelParams,
    hurst: f64,
    horizon: f64,
    x0: f64,
    n_list: &[usize],
    n_ref: usize,
    paths: usize,
    p: f64,
    seed: u64,
    exec: Execution,
) -> Result<ConvergenceReport> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p", "moment order must be at least 1"));
    }
    if paths == 0 {
        return Err(Error::invalid("paths", "must be positive"));
    }
    check_divisibility(n_list, n_ref)?;
    let table = TransformTable::new(params.beta)?;
    let runs = map_indexed(paths, exec, |i| {
        let w = sample_fbm(horizon, n_ref, hurst, derive_seed(seed, i as u64))?;
        sup_errors(&w, x0, params, n_list, n_ref, &table)
    });
    let mut acc = vec![0.0; n_list.len()];
    for run in runs {
        for (a, e) in acc.iter_mut().zip(run?) {
            *a += e.sup_error.powf(p);
        }
    }
    let entries: Vec<ConvergenceEntry> = n_list
        .iter()
        .zip(acc)
        .map(|(&n, s)| ConvergenceEntry {
            n,
            sup_error: (s / paths as f64).powf(1.0 / p),
        })
        .collect();
    let (slope, intercept) = fit_loglog(&entries)?;
    Ok(ConvergenceReport {
        entries,
        n_ref,
        slope,
        intercept,
    })
}
