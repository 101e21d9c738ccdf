//! Malliavin derivative of `Y_t`, its ℋ-norm, and density estimation through
//! the Nourdin–Viens formula
//! `f(y) = E|Y_t - E Y_t| / (2 g(y)) · exp(-∫_{E Y_t}^y (z - E Y_t)/g(z) dz)`,
//! with `g(y) = E[⟨DY_t, -DL⁻¹Y_t⟩_ℋ | Y_t = y]`.
//!
//! `-D_s L⁻¹ Y_t = ∫₀^∞ e^{-u} T_u(D_s Y_t) du` is evaluated with Gauss–Laguerre
//! nodes in `u` and the Mehler form of the Ornstein–Uhlenbeck semigroup,
//! `T_u Φ(w) = E' Φ(e^{-u} w + √(1 - e^{-2u}) w')`, averaged over a few
//! independent copies `w'`. Only `H ≥ 1/2` is supported.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_solver::{solve_path, SolutionPath, SolverConfig};
use crate::gaussian_paths::{
    h_inner_product, sample_fbm, GaussianPath, StepFunction, UniformGridKernel,
};
use crate::io::fmt_f64;
use crate::jacobi_transform::{ModelParams, TransformTable};
use crate::parallel::{derive_seed, map_indexed, Execution};
use crate::quadrature::gauss_laguerre;

/// Kernel mass below which a grid node has no data around it.
const MIN_KERNEL_MASS: f64 = 1e-12;

/// `s ↦ D_s Y_t` as a step function on the solver cells of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinDerivative {
    pub t: f64,
    pub profile: StepFunction,
}

/// Levels of `D_s Y_t` on the first `k` solver cells: on `[t_j, t_{j+1})` the
/// value `c · exp(∫_{t_{j+1}}^{t_k} r(X_u) du)`, trapezoid in `u`.
fn profile_levels(x: &[f64], k: usize, h: f64, params: &ModelParams) -> Vec<f64> {
    let c = params.noise_scale();
    let mut levels = vec![0.0; k];
    let mut integral = 0.0f64;
    let mut r_next = params.drift_slope(x[k]);
    for j in (0..k).rev() {
        levels[j] = c * integral.exp();
        let r = params.drift_slope(x[j]);
        integral += 0.5 * h * (r + r_next);
        r_next = r;
    }
    levels
}

/// `∫₀ᵀ r(X_u) du` by the trapezoid rule on the whole path.
pub fn integrated_slope(path: &SolutionPath, params: &ModelParams) -> f64 {
    let h = path.step_size();
    path.x
        .windows(2)
        .map(|p| 0.5 * h * (params.drift_slope(p[0]) + params.drift_slope(p[1])))
        .sum()
}

fn node_index(path: &SolutionPath, t: f64) -> Result<usize> {
    let h = path.step_size();
    let k = (t / h).round();
    if !(k >= 1.0) || (k * h - t).abs() > 1e-9 * t.abs().max(1.0) || k as usize >= path.len() {
        return Err(Error::domain("t", t, "positive solver grid nodes"));
    }
    Ok(k as usize)
}

/// `D_s Y_t = γθ^β 1_{[0,t]}(s) exp(∫_s^t r(X_u) du)` on the solver cells,
/// extended by zero to the end of the path.
pub fn malliavin_derivative(
    path: &SolutionPath,
    params: &ModelParams,
    t: f64,
) -> Result<MalliavinDerivative> {
    let k = node_index(path, t)?;
    let mut levels = profile_levels(&path.x, k, path.step_size(), params);
    let mut breakpoints = path.times[..=k].to_vec();
    let end = *path.times.last().unwrap();
    if k + 1 < path.len() {
        breakpoints.push(end);
        levels.push(0.0);
    }
    Ok(MalliavinDerivative {
        t: path.times[k],
        profile: StepFunction::new(breakpoints, levels)?,
    })
}

/// `γ_t = ‖D Y_t‖²_ℋ`.
pub fn malliavin_norm(d: &MalliavinDerivative, h: f64) -> Result<f64> {
    h_inner_product(&d.profile, &d.profile, h)
}

/// `e^{-u} w + √(1 - e^{-2u}) w'` nodewise.
pub fn mehler_shift(w: &GaussianPath, w_prime: &GaussianPath, u: f64) -> Result<GaussianPath> {
    if !w.same_grid(w_prime) {
        return Err(Error::GridMismatch(
            "Mehler shift needs both paths on one grid".into(),
        ));
    }
    if !(u >= 0.0) {
        return Err(Error::domain("u", u, "[0, ∞)"));
    }
    let a = (-u).exp();
    let b = (-(-2.0 * u).exp_m1()).sqrt();
    let values = w
        .values()
        .iter()
        .zip(w_prime.values())
        .map(|(x, y)| a * x + b * y)
        .collect();
    GaussianPath::with_origin(w.dt(), w.origin(), values, w.hurst(), w.seed())
}

/// How `Y` is produced from the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// The implicit scheme for the full equation.
    Full,
    /// `G ≡ 0`: `Y_t = F(x0) + γθ^β W_t`, a Gaussian test case.
    Disabled,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct McConfig {
    pub n_outer: usize,
    pub n_inner: usize,
    pub u_nodes: usize,
    /// Kernel width; `None` selects `1.06 σ̂ n_outer^{-1/5}`.
    pub bandwidth: Option<f64>,
    pub y_nodes: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_outer: 2000,
            n_inner: 8,
            u_nodes: 8,
            bandwidth: None,
            y_nodes: 101,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_outer < 2 {
            return Err(Error::invalid("n_outer", "need at least two outer paths"));
        }
        if self.n_inner == 0 {
            return Err(Error::invalid("n_inner", "must be positive"));
        }
        if self.u_nodes == 0 {
            return Err(Error::invalid("u_nodes", "must be positive"));
        }
        if self.y_nodes < 3 {
            return Err(Error::invalid("y_nodes", "need at least three grid nodes"));
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0) {
                return Err(Error::invalid("bandwidth", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub t: f64,
    pub ys: Vec<f64>,
    pub g: Vec<f64>,
    /// Filled by [`nv_density`].
    pub f: Vec<f64>,
    pub mean_y: f64,
    pub mean_abs_dev: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_u: usize,
    pub bandwidth: f64,
    /// Mass of `f` on the grid before renormalization.
    pub mass: Option<f64>,
    /// Sampled `Y_t`, one per outer path.
    #[serde(skip)]
    pub samples: Vec<f64>,
    /// `ξ_i`, the unconditioned estimates of `⟨DY_t, -DL⁻¹Y_t⟩`.
    #[serde(skip)]
    pub xi: Vec<f64>,
}

impl DensityEstimate {
    /// Writes CSV `y,g,f` (`f` blank until filled).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "y,g,f")?;
        for (i, (y, g)) in self.ys.iter().zip(&self.g).enumerate() {
            let f = self.f.get(i).map(|v| fmt_f64(*v)).unwrap_or_default();
            writeln!(out, "{},{},{}", fmt_f64(*y), fmt_f64(*g), f)?;
        }
        Ok(())
    }
}

/// Outcome of driving the model with one signal: `Y_t` and the derivative
/// levels on `[0, t]`.
struct Drive {
    y_t: f64,
    levels: Vec<f64>,
}

struct Driver<'a> {
    params: &'a ModelParams,
    table: &'a TransformTable,
    solver: SolverConfig,
    x0: f64,
    k: usize,
    mode: DriftMode,
}

impl Driver<'_> {
    fn drive(&self, w: &GaussianPath) -> Result<Drive> {
        match self.mode {
            DriftMode::Full => {
                let path = solve_path(w, self.x0, &self.solver, self.table)?;
                Ok(Drive {
                    y_t: path.y[self.k],
                    levels: profile_levels(&path.x, self.k, self.solver.step_size(), self.params),
                })
            }
            DriftMode::Disabled => {
                let c = self.params.noise_scale();
                Ok(Drive {
                    y_t: self.table.f_unchecked(self.x0) + c * w.value(w.origin() + self.k),
                    levels: vec![c; self.k],
                })
            }
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Monte Carlo estimate of `g_{Y_t}` on a grid over the central 98% of the
/// sampled `Y_t`. Outer path `i` uses `derive_seed(seed, i)`; its inner copy
/// `k` at Laguerre node `j` uses `derive_seed(derive_seed(seed, i), j n_inner + k)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_g(
    params: &ModelParams,
    hurst: f64,
    t: f64,
    x0: f64,
    grid: GridConfig,
    mc: McConfig,
    mode: DriftMode,
    seed: u64,
    exec: Execution,
) -> Result<DensityEstimate> {
    if hurst < 0.5 {
        return Err(Error::UnsupportedHurst(hurst));
    }
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::domain("x0", x0, "(0, 1)"));
    }
    mc.validate()?;
    let solver = SolverConfig::new(grid.horizon, grid.steps, *params)?;
    let h = solver.step_size();
    let k = (t / h).round();
    if !(t > 0.0 && t <= grid.horizon * (1.0 + 1e-12)) || (k * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::domain("t", t, "positive solver grid nodes"));
    }
    let k = k as usize;
    let table = TransformTable::new(params.beta)?;
    let laguerre = gauss_laguerre(mc.u_nodes)?;
    let kernel = UniformGridKernel::new(h, k, hurst)?;
    let driver = Driver {
        params,
        table: &table,
        solver,
        x0,
        k,
        mode,
    };

    let outer = map_indexed(mc.n_outer, exec, |i| -> Result<(f64, f64)> {
        let s_i = derive_seed(seed, i as u64);
        let w = sample_fbm(grid.horizon, grid.steps, hurst, s_i)?;
        let base = driver.drive(&w)?;
        let mut xi = 0.0;
        for (j, (&u, &weight)) in laguerre.nodes.iter().zip(&laguerre.weights).enumerate() {
            let mut mean = vec![0.0; k];
            for m in 0..mc.n_inner {
                let inner_seed = derive_seed(s_i, (j * mc.n_inner + m) as u64);
                let w_prime = sample_fbm(grid.horizon, grid.steps, hurst, inner_seed)?;
                let shifted = driver.drive(&mehler_shift(&w, &w_prime, u)?)?;
                for (a, b) in mean.iter_mut().zip(&shifted.levels) {
                    *a += b;
                }
            }
            for a in &mut mean {
                *a /= mc.n_inner as f64;
            }
            xi += weight * kernel.inner(&base.levels, &mean);
        }
        Ok((base.y_t, xi))
    });
    let mut samples = Vec::with_capacity(mc.n_outer);
    let mut xis = Vec::with_capacity(mc.n_outer);
    for r in outer {
        let (y, xi) = r?;
        samples.push(y);
        xis.push(xi);
    }

    let n = samples.len() as f64;
    let mean_y = samples.iter().sum::<f64>() / n;
    let mean_abs_dev = samples.iter().map(|y| (y - mean_y).abs()).sum::<f64>() / n;
    let sd = (samples.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bandwidth = mc.bandwidth.unwrap_or(1.06 * sd * n.powf(-0.2));
    if !(bandwidth > 0.0) {
        return Err(Error::DegenerateFit(
            "Y_t has no spread; bandwidth is zero".into(),
        ));
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&sorted, 0.01), quantile(&sorted, 0.99));

    let mut ys = Vec::with_capacity(mc.y_nodes);
    let mut g = Vec::with_capacity(mc.y_nodes);
    for q in 0..mc.y_nodes {
        let y = lo + (hi - lo) * q as f64 / (mc.y_nodes - 1) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for (&yi, &xi) in samples.iter().zip(&xis) {
            let z = (y - yi) / bandwidth;
            let kz = (-0.5 * z * z).exp();
            num += kz * xi;
            den += kz;
        }
        if den < MIN_KERNEL_MASS {
            continue;
        }
        ys.push(y);
        g.push(num / den);
    }
    if ys.len() < 2 {
        return Err(Error::EmptyNeighborhood);
    }
    Ok(DensityEstimate {
        t: k as f64 * h,
        ys,
        g,
        f: Vec::new(),
        mean_y,
        mean_abs_dev,
        n_outer: mc.n_outer,
        n_inner: mc.n_inner,
        n_u: mc.u_nodes,
        bandwidth,
        mass: None,
        samples,
        xi: xis,
    })
}

fn trapezoid(xs: &[f64], fs: &[f64]) -> f64 {
    xs.windows(2)
        .zip(fs.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

/// Fills `f` from `g` by the Nourdin–Viens formula and renormalizes it to
/// unit mass on the grid; the mass before renormalization is kept in `mass`.
pub fn nv_density(mut est: DensityEstimate) -> Result<DensityEstimate> {
    for (&y, &g) in est.ys.iter().zip(&est.g) {
        if !(g > 0.0) {
            return Err(Error::NonPositiveG { y, value: g });
        }
    }
    let m = est.mean_y;
    let ys = &est.ys;
    let integrand: Vec<f64> = ys.iter().zip(&est.g).map(|(y, g)| (y - m) / g).collect();
    // Cumulative trapezoid from the first node.
    let mut cum = vec![0.0; ys.len()];
    for i in 1..ys.len() {
        cum[i] = cum[i - 1] + 0.5 * (ys[i] - ys[i - 1]) * (integrand[i - 1] + integrand[i]);
    }
    // The same integral up to the mean, with the integrand linear on its cell.
    let j = ys.partition_point(|&y| y <= m).clamp(1, ys.len() - 1) - 1;
    let (y0, y1) = (ys[j], ys[j + 1]);
    let slope = (integrand[j + 1] - integrand[j]) / (y1 - y0);
    let d = m - y0;
    let at_mean = cum[j] + d * integrand[j] + 0.5 * slope * d * d;
    let f: Vec<f64> = est
        .g
        .iter()
        .zip(&cum)
        .map(|(g, c)| est.mean_abs_dev / (2.0 * g) * (-(c - at_mean)).exp())
        .collect();
    let mass = trapezoid(ys, &f);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::DegenerateFit(format!("density mass is {mass}")));
    }
    est.f = f.into_iter().map(|v| v / mass).collect();
    est.mass = Some(mass);
    Ok(est)
}

/// Density of `X_t` on an x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct XDensity {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
}

impl XDensity {
    /// Writes CSV `x,density`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,density")?;
        for (x, d) in self.xs.iter().zip(&self.density) {
            writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*d))?;
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.xs, &self.density)
    }
}

/// `f(F(x)) F'(x)` on `x = F⁻¹(y)` for `y` running over the estimate's grid
/// refined `refine` times (`f` linear between grid nodes). Grid nodes
/// outside `(0, F(1))` are dropped.
pub fn x_density(est: &DensityEstimate, table: &TransformTable, refine: usize) -> Result<XDensity> {
    if est.f.len() != est.ys.len() {
        return Err(Error::invalid(
            "f",
            "density not filled; run nv_density first",
        ));
    }
    let refine = refine.max(1);
    let f1 = table.f1();
    let mut xs = Vec::new();
    let mut density = Vec::new();
    for i in 0..est.ys.len() - 1 {
        let last = if i + 2 == est.ys.len() {
            refine
        } else {
            refine - 1
        };
        for s in 0..=last {
            let frac = s as f64 / refine as f64;
            let y = est.ys[i] + frac * (est.ys[i + 1] - est.ys[i]);
            if !(y > 0.0 && y < f1) {
                continue;
            }
            let fy = est.f[i] + frac * (est.f[i + 1] - est.f[i]);
            let x = table.inverse_unchecked(y);
            xs.push(x);
            density.push(fy * table.f_prime(x));
        }
    }
    if xs.len() < 2 {
        return Err(Error::domain("ys", est.ys[0], "(0, F(1))"));
    }
    Ok(XDensity { xs, density })
}
