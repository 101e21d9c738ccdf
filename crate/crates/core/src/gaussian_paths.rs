//! Fractional Brownian motion on uniform grids.
//!
//! Paths are synthesized exactly in law by circulant embedding of the
//! fractional Gaussian noise covariance, with a dense Cholesky fallback for
//! small grids. A [`GaussianPath`] keeps the raw sampled node values and the
//! index of its time origin; the Wiener shift only moves that index, so
//! shifts compose exactly and increments never depend on where the origin
//! sits.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::parallel::rng_from_seed;

/// Largest grid for which the dense Cholesky fallback is attempted.
const CHOLESKY_MAX: usize = 4096;

/// A sampled trajectory on the uniform grid `t_i = (i - origin) * dt`.
#[derive(Debug, Clone)]
pub struct GaussianPath {
    dt: f64,
    origin: usize,
    base: Arc<[f64]>,
    hurst: f64,
    seed: u64,
}

impl GaussianPath {
    /// Wraps node values sampled on a grid starting at time 0.
    ///
    /// `hurst` records the regularity of the signal; deterministic smooth
    /// signals use 1.
    pub fn from_values(dt: f64, values: Vec<f64>, hurst: f64, seed: u64) -> Result<Self> {
        Self::with_origin(dt, 0, values, hurst, seed)
    }

    /// Wraps node values with node `origin` at time 0. The value at the origin
    /// must be exactly zero.
    pub fn with_origin(
        dt: f64,
        origin: usize,
        values: Vec<f64>,
        hurst: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(
                "dt",
                format!("grid step must be positive, got {dt}"),
            ));
        }
        if values.len() < 2 {
            return Err(Error::invalid("values", "a path needs at least two nodes"));
        }
        if origin >= values.len() {
            return Err(Error::invalid("origin", "origin index outside the grid"));
        }
        if values[origin] != 0.0 {
            return Err(Error::invalid("values", "path must vanish at time 0"));
        }
        Ok(Self {
            dt,
            origin,
            base: values.into(),
            hurst,
            seed,
        })
    }

    /// Samples the smooth deterministic signal `t ↦ f(t)` on `{k T/n}`, shifted
    /// so that it vanishes at 0.
    pub fn from_fn(horizon: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = horizon / n as f64;
        let f0 = f(0.0);
        let values = (0..=n).map(|k| f(k as f64 * dt) - f0).collect();
        Self::from_values(dt, values, 1.0, 0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Index of the node at time 0.
    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Time of the first node (nonpositive).
    pub fn t0(&self) -> f64 {
        -(self.origin as f64) * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) * self.dt
    }

    /// Time of the last node.
    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Value at node `i`, i.e. `W(t_i) - W(0)`.
    pub fn value(&self, i: usize) -> f64 {
        self.base[i] - self.base[self.origin]
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// `W(t_j) - W(t_i)`, independent of the origin.
    pub fn increment(&self, i: usize, j: usize) -> f64 {
        self.base[j] - self.base[i]
    }

    /// Node index of time `t`, if `t` lies on the grid within the domain.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = t / self.dt;
        let kr = k.round();
        if (k - kr).abs() > 1e-9 * kr.abs().max(1.0) {
            return None;
        }
        let idx = self.origin as i64 + kr as i64;
        (idx >= 0 && (idx as usize) < self.len()).then_some(idx as usize)
    }

    /// Same grid and origin (required to combine paths nodewise).
    pub fn same_grid(&self, other: &GaussianPath) -> bool {
        self.len() == other.len() && self.origin == other.origin && self.dt == other.dt
    }

    /// Writes the path as CSV with header `t,w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,w")?;
        for i in 0..self.len() {
            writeln!(out, "{},{}", fmt_f64(self.time(i)), fmt_f64(self.value(i)))?;
        }
        Ok(())
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("H", h, "(0, 1)"))
    }
}

/// Covariance `R_H(t, s) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2` of fBm.
pub fn fbm_covariance(s: f64, t: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if s < 0.0 {
        return Err(Error::domain("s", s, "[0, ∞)"));
    }
    if t < 0.0 {
        return Err(Error::domain("t", t, "[0, ∞)"));
    }
    let e = 2.0 * h;
    Ok(0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub(crate) fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let e = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Samples fractional Gaussian noise with unit step: `n` increments.
fn sample_fgn(n: usize, h: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if (h - 0.5).abs() < f64::EPSILON {
        return Ok((0..n).map(|_| rng.sample(StandardNormal)).collect());
    }
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(lag, h), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let lambda: Vec<f64> = c.iter().map(|z| z.re).collect();
    let min_eig = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = lambda.iter().cloned().fold(0.0f64, |a, l| a.max(l.abs()));
    if min_eig < -1e-10 * scale {
        return sample_fgn_cholesky(n, h, rng).ok_or(Error::EmbeddingFailed {
            min_eigenvalue: min_eig,
        });
    }
    let mf = m as f64;
    let mut y = vec![Complex::new(0.0, 0.0); m];
    y[0] = Complex::new(
        (lambda[0].max(0.0) / mf).sqrt() * rng.sample::<f64, _>(StandardNormal),
        0.0,
    );
    y[n] = Complex::new(
        (lambda[n].max(0.0) / mf).sqrt() * rng.sample::<f64, _>(StandardNormal),
        0.0,
    );
    for j in 1..n {
        let s = (lambda[j].max(0.0) / (2.0 * mf)).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        y[j] = Complex::new(s * re, s * im);
        y[m - j] = y[j].conj();
    }
    fft.process(&mut y);
    Ok(y[..n].iter().map(|z| z.re).collect())
}

fn sample_fgn_cholesky(n: usize, h: f64, rng: &mut impl Rng) -> Option<Vec<f64>> {
    if n > CHOLESKY_MAX {
        return None;
    }
    let acf: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, h)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| acf[i.abs_diff(j)]);
    let chol = cov.cholesky()?;
    let z = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Some((chol.l() * z).iter().copied().collect())
}

fn cumulative_path(increments: &[f64], step_scale: f64) -> Vec<f64> {
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for &d in increments {
        acc += step_scale * d;
        values.push(acc);
    }
    values
}

/// Samples fBm of Hurst index `h` on `{k T / n : k = 0..n}`.
pub fn sample_fbm(horizon: f64, n: usize, h: f64, seed: u64) -> Result<GaussianPath> {
    check_hurst(h)?;
    if !(horizon > 0.0) {
        return Err(Error::domain("T", horizon, "(0, ∞)"));
    }
    if n < 2 {
        return Err(Error::invalid("n", "grid needs at least two steps"));
    }
    let dt = horizon / n as f64;
    let mut rng = rng_from_seed(seed);
    let fgn = sample_fgn(n, h, &mut rng)?;
    GaussianPath::from_values(dt, cumulative_path(&fgn, dt.powf(h)), h, seed)
}

/// Samples two-sided fBm on `[-S, T]` with `n_per_unit` nodes per unit time.
///
/// One path is drawn on `[0, S + T]` and re-pinned at the node of time `S`,
/// which is again fBm in law by stationarity of increments. `S` and `T` are
/// rounded to the nearest grid node.
pub fn sample_two_sided_fbm(
    past: f64,
    future: f64,
    n_per_unit: usize,
    h: f64,
    seed: u64,
) -> Result<GaussianPath> {
    check_hurst(h)?;
    if !(past > 0.0) {
        return Err(Error::domain("S", past, "(0, ∞)"));
    }
    if !(future > 0.0) {
        return Err(Error::domain("T", future, "(0, ∞)"));
    }
    if n_per_unit == 0 {
        return Err(Error::invalid("n_per_unit", "must be positive"));
    }
    let dt = 1.0 / n_per_unit as f64;
    let n_past = ((past * n_per_unit as f64).round() as usize).max(1);
    let n_future = ((future * n_per_unit as f64).round() as usize).max(1);
    let n = n_past + n_future;
    let mut rng = rng_from_seed(seed);
    let fgn = sample_fgn(n, h, &mut rng)?;
    let mut values = cumulative_path(&fgn, dt.powf(h));
    let pin = values[n_past];
    for v in &mut values {
        *v -= pin;
    }
    values[n_past] = 0.0;
    GaussianPath::with_origin(dt, n_past, values, h, seed)
}

/// The Wiener shift `θ_t ω = ω(t + ·) - ω(t)` for a grid time `t`.
///
/// Only the origin index moves; node values keep the same grid.
pub fn wiener_shift(path: &GaussianPath, t: f64) -> Result<GaussianPath> {
    let idx = path
        .index_of(t)
        .ok_or_else(|| Error::domain("t", t, "grid nodes of the sampled domain"))?;
    Ok(GaussianPath {
        origin: idx,
        ..path.clone()
    })
}

/// A piecewise-constant function on `[breakpoints[0], breakpoints[last]]`
/// taking `levels[i]` on the cell `[breakpoints[i], breakpoints[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || levels.len() + 1 != breakpoints.len() {
            return Err(Error::invalid(
                "levels",
                "need one level per cell and at least one cell",
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("breakpoints", "first breakpoint must be 0"));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("breakpoints", "must be strictly increasing"));
        }
        Ok(Self {
            breakpoints,
            levels,
        })
    }

    /// The indicator of `[0, t]` on `[0, horizon]`.
    pub fn indicator(t: f64, horizon: f64) -> Result<Self> {
        if t >= horizon {
            Self::new(vec![0.0, horizon], vec![1.0])
        } else {
            Self::new(vec![0.0, t, horizon], vec![1.0, 0.0])
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Value at `s` (right-continuous; the last cell is closed).
    pub fn eval(&self, s: f64) -> f64 {
        let bp = &self.breakpoints;
        if s < bp[0] || s > self.horizon() {
            return 0.0;
        }
        let i = bp.partition_point(|&b| b <= s).saturating_sub(1);
        self.levels[i.min(self.levels.len() - 1)]
    }

    pub(crate) fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.levels)
            .map(|(w, &l)| (w[0], w[1], l))
    }
}

/// Inner product of the reproducing-kernel space of fBm for `H ∈ [1/2, 1)`.
///
/// For `H = 1/2` this is the `L²` product. For `H > 1/2` the double integral
/// `α_H ∬ |t - s|^{2H-2} φ(s) ψ(t) ds dt` is evaluated cell by cell through
/// the exact rectangle antiderivative
/// `α_H ∬_{[a,b]×[c,d]} |t - s|^{2H-2} = (|d-a|^{2H} + |c-b|^{2H} - |d-b|^{2H} - |c-a|^{2H}) / 2`.
pub fn h_inner_product(phi: &StepFunction, psi: &StepFunction, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if h < 0.5 {
        return Err(Error::UnsupportedHurst(h));
    }
    if h == 0.5 {
        let mut acc = 0.0;
        for (a, b, x) in phi.cells() {
            if x == 0.0 {
                continue;
            }
            for (c, d, y) in psi.cells() {
                let overlap = b.min(d) - a.max(c);
                if overlap > 0.0 {
                    acc += x * y * overlap;
                }
            }
        }
        return Ok(acc);
    }
    let e = 2.0 * h;
    let p = |x: f64| x.abs().powf(e);
    let mut acc = 0.0;
    for (a, b, x) in phi.cells() {
        if x == 0.0 {
            continue;
        }
        for (c, d, y) in psi.cells() {
            if y == 0.0 {
                continue;
            }
            acc += x * y * 0.5 * (p(d - a) + p(c - b) - p(d - b) - p(c - a));
        }
    }
    Ok(acc)
}

/// Precomputed inner product for step functions on the uniform grid
/// `{k dt : k = 0..n}`: `⟨φ, ψ⟩ = dt^{2H} Σ_{ij} φ_i ψ_j ρ(|i - j|)` with `ρ`
/// the unit fractional Gaussian noise autocovariance.
#[derive(Debug, Clone)]
pub struct UniformGridKernel {
    scale: f64,
    acf: Vec<f64>,
}

impl UniformGridKernel {
    pub fn new(dt: f64, cells: usize, h: f64) -> Result<Self> {
        check_hurst(h)?;
        if h < 0.5 {
            return Err(Error::UnsupportedHurst(h));
        }
        Ok(Self {
            scale: dt.powf(2.0 * h),
            acf: (0..cells).map(|k| fgn_autocovariance(k, h)).collect(),
        })
    }

    pub fn cells(&self) -> usize {
        self.acf.len()
    }

    /// Inner product of two level vectors on the grid cells (shorter vectors
    /// are zero-padded).
    pub fn inner(&self, phi: &[f64], psi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &x) in phi.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for (j, &y) in psi.iter().enumerate() {
                row += y * self.acf[i.abs_diff(j)];
            }
            acc += x * row;
        }
        self.scale * acc
    }
}

/// Discrete `α`-Hölder seminorm: the largest `|x_v - x_u| / |v - u|^α` over
/// pairs of grid nodes.
pub fn holder_norm(path: &GaussianPath, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("alpha", alpha, "(0, 1]"));
    }
    let n = path.len();
    let mut best = 0.0f64;
    // Spacing powers depend only on the lag.
    let lag_pow: Vec<f64> = (0..n).map(|k| (k as f64 * path.dt()).powf(alpha)).collect();
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(path.increment(i, j).abs() / lag_pow[j - i]);
        }
    }
    Ok(best)
}
