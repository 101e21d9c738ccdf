//! The singular change of variable `F(x) = ∫₀ˣ [v(1 - v)]^{-β} dv` and the
//! drift of the transformed equation.
//!
//! Under `y = F(x)` the Jacobi equation
//! `dx = -θ(x - μ) dt + γ [θ x(1 - x)]^β dw` becomes
//! `dy = (G∘F⁻¹)(y) dt + γθ^β dw` on `(0, F(1))` with
//! `G(x) = θ(μ - x) F'(x)`. `G∘F⁻¹` is strictly decreasing with slope below
//! `-l < 0`, which is what makes the implicit scheme well posed.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::quadrature::gauss_jacobi;

/// Default number of Gauss–Jacobi nodes.
pub const QUADRATURE_NODES: usize = 32;
/// Default number of tabulation nodes for the inverse.
pub const TABLE_NODES: usize = 4096;
/// Smallest tabulated abscissa.
const X_MIN: f64 = 1e-15;
const INVERSE_MAX_ITER: usize = 100;

/// Constant coefficients of the generalized Jacobi equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Mean-reversion rate `θ > 0`.
    pub theta: f64,
    /// Mean level `μ ∈ (0, 1)`.
    pub mu: f64,
    /// Noise scale `γ`.
    pub gamma: f64,
    /// Singularity exponent `β ∈ (1 - α, 1)`.
    pub beta: f64,
    /// Hölder index `α ∈ (0, 1]` of the driving signal.
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(theta: f64, mu: f64, gamma: f64, beta: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            theta,
            mu,
            gamma,
            beta,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(
                "theta",
                format!("must be > 0, got {}", self.theta),
            ));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::invalid(
                "mu",
                format!("must lie in (0, 1), got {}", self.mu),
            ));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1], got {}", self.alpha),
            ));
        }
        if !(self.beta > 1.0 - self.alpha && self.beta < 1.0) {
            return Err(Error::invalid(
                "beta",
                format!(
                    "must lie in (1 - alpha, 1) = ({}, 1), got {}",
                    1.0 - self.alpha,
                    self.beta
                ),
            ));
        }
        Ok(())
    }

    /// Additive noise coefficient `γθ^β` of the transformed equation.
    pub fn noise_scale(&self) -> f64 {
        self.gamma * self.theta.powf(self.beta)
    }

    /// Same drift, no noise.
    pub fn without_noise(&self) -> Self {
        Self {
            gamma: 0.0,
            ..*self
        }
    }

    /// `r(x) = G'(x)/F'(x) = (G∘F⁻¹)'(F(x))
    ///       = -θ [β(μ - x)(1 - 2x)/(x(1 - x)) + 1]`.
    pub fn drift_slope(&self, x: f64) -> f64 {
        self.slope_split(Split::from_x(x))
    }

    /// `G(x) = θ(μ - x)[x(1 - x)]^{-β}` without domain checks.
    pub(crate) fn drift_raw(&self, x: f64) -> f64 {
        self.drift_split(Split::from_x(x))
    }

    pub(crate) fn drift_split(&self, p: Split) -> f64 {
        self.theta * p.mu_minus_x(self.mu) * (p.x * p.c).powf(-self.beta)
    }

    pub(crate) fn slope_split(&self, p: Split) -> f64 {
        -self.theta * (self.beta * p.mu_minus_x(self.mu) * (p.c - p.x) / (p.x * p.c) + 1.0)
    }
}

/// A point of `[0, 1]` stored with its complement `c = 1 - x`. The smaller
/// of the two is exact, so points near either end keep full relative
/// precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub x: f64,
    pub c: f64,
}

impl Split {
    pub const ZERO: Split = Split { x: 0.0, c: 1.0 };
    pub const ONE: Split = Split { x: 1.0, c: 0.0 };

    pub fn from_x(x: f64) -> Self {
        Split { x, c: 1.0 - x }
    }

    pub fn from_c(c: f64) -> Self {
        Split { x: 1.0 - c, c }
    }

    fn is_left(&self) -> bool {
        self.x <= 0.5
    }

    /// The point moved by `dx`, updating whichever coordinate is exact.
    pub fn shifted(self, dx: f64) -> Self {
        if self.is_left() {
            Split::from_x(self.x + dx)
        } else {
            Split::from_c(self.c - dx)
        }
    }

    pub fn mu_minus_x(&self, mu: f64) -> f64 {
        if self.is_left() {
            mu - self.x
        } else {
            (mu - 1.0) + self.c
        }
    }

    pub fn lt(&self, other: &Split) -> bool {
        if !self.is_left() && !other.is_left() {
            self.c > other.c
        } else {
            self.x < other.x
        }
    }

    pub fn midpoint(a: Split, b: Split) -> Split {
        if !a.is_left() && !b.is_left() {
            Split::from_c(0.5 * (a.c + b.c))
        } else {
            Split::from_x(0.5 * (a.x + b.x))
        }
    }

    /// `min(x, 1 - x)`.
    pub fn near(&self) -> f64 {
        self.x.min(self.c)
    }
}

/// Tabulation of `x ↦ F(x)` with the quadrature needed to evaluate and invert it.
#[derive(Debug, Clone)]
pub struct TransformTable {
    beta: f64,
    /// Nodes of the rule `∫₀¹ s^{-β} h(s) ds ≈ Σ w_i h(s_i)`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    f1: f64,
    xs: Vec<f64>,
    fs: Vec<f64>,
}

impl TransformTable {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_sizes(beta, QUADRATURE_NODES, TABLE_NODES)
    }

    pub fn with_sizes(beta: f64, quad_nodes: usize, table_nodes: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain("beta", beta, "(0, 1)"));
        }
        if table_nodes < 4 {
            return Err(Error::invalid("table_nodes", "need at least 4 nodes"));
        }
        // Left-singular rule: s = (1 + ξ)/2, s^{-β} ds = 2^{β-1} (1 + ξ)^{-β} dξ.
        let left = gauss_jacobi(quad_nodes, 0.0, -beta)?;
        let scale = 2f64.powf(beta - 1.0);
        let nodes = left.nodes.iter().map(|x| 0.5 * (1.0 + x)).collect();
        let weights = left.weights.iter().map(|w| scale * w).collect();
        let mut table = Self {
            beta,
            nodes,
            weights,
            f1: 0.0,
            xs: Vec::new(),
            fs: Vec::new(),
        };
        // Symmetry of the integrand gives F(1) = 2 F(1/2), and makes the two
        // halves meet exactly.
        table.f1 = 2.0 * table.left_integral(0.5);
        // Log-spaced on [X_MIN, 1/2].
        let half = table_nodes / 2;
        let span = (0.5 / X_MIN).ln();
        let mut xs: Vec<f64> = (0..half)
            .map(|i| X_MIN * (span * i as f64 / (half - 1) as f64).exp())
            .collect();
        xs[half - 1] = 0.5;
        let fs: Vec<f64> = xs.iter().map(|&x| table.left_integral(x)).collect();
        if !fs.windows(2).all(|w| w[0] < w[1]) || fs[0] <= 0.0 {
            return Err(Error::Internal(
                "tabulated F is not strictly increasing".into(),
            ));
        }
        table.xs = xs;
        table.fs = fs;
        Ok(table)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `F(1)`, the right end of the state space in transformed coordinates.
    pub fn f1(&self) -> f64 {
        self.f1
    }

    /// Tabulated abscissae on `(0, 1/2]`; the right half follows from
    /// `F(1 - x) = F(1) - F(x)`.
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn fs(&self) -> &[f64] {
        &self.fs
    }

    /// `∫₀ˣ [v(1-v)]^{-β} dv` for `x ≤ 1/2` by `v = x s`.
    fn left_integral(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let b = self.beta;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * (1.0 - x * s).powf(-b))
            .sum();
        x.powf(1.0 - b) * sum
    }

    pub(crate) fn f_split(&self, p: Split) -> f64 {
        if p.is_left() {
            self.left_integral(p.x)
        } else {
            self.f1 - self.left_integral(p.c)
        }
    }

    pub(crate) fn f_unchecked(&self, x: f64) -> f64 {
        self.f_split(Split::from_x(x.clamp(0.0, 1.0)))
    }

    /// `F(x)` for `x ∈ [0, 1]`.
    pub fn eval_f(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain("x", x, "[0, 1]"));
        }
        Ok(self.f_unchecked(x))
    }

    /// `F'(x) = [x(1 - x)]^{-β}`.
    pub fn f_prime(&self, x: f64) -> f64 {
        (x * (1.0 - x)).powf(-self.beta)
    }

    pub(crate) fn f_prime_split(&self, p: Split) -> f64 {
        (p.x * p.c).powf(-self.beta)
    }

    /// Two-argument map `F(u, y) = ∫₀ʸ [v(1 - uv)]^{-β} dv` on `uy < 1`,
    /// through the scaling identity `F(u, y) = u^{β-1} F(uy)`.
    pub fn eval_f2(&self, u: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain("u", u, "[0, 1]"));
        }
        if !(y >= 0.0) {
            return Err(Error::domain("y", y, "[0, ∞)"));
        }
        if u * y >= 1.0 {
            return Err(Error::domain("u*y", u * y, "[0, 1)"));
        }
        let b = self.beta;
        if u == 0.0 {
            return Ok(y.powf(1.0 - b) / (1.0 - b));
        }
        Ok(u.powf(b - 1.0) * self.f_unchecked(u * y))
    }

    /// `F⁻¹(z)` for `z ∈ [0, F(1)]`: table bracket, then safeguarded Newton.
    pub fn eval_f_inv(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0 && z <= self.f1) {
            return Err(Error::domain("z", z, "[0, F(1)]"));
        }
        Ok(self.inverse_unchecked(z))
    }

    pub(crate) fn inverse_unchecked(&self, z: f64) -> f64 {
        self.inverse_split(z).x
    }

    pub(crate) fn inverse_split(&self, z: f64) -> Split {
        if z <= 0.0 {
            Split::ZERO
        } else if z >= self.f1 {
            Split::ONE
        } else if z <= 0.5 * self.f1 {
            Split::from_x(self.solve_left(z))
        } else {
            Split::from_c(self.solve_left(self.f1 - z))
        }
    }

    /// `u ∈ [0, 1/2]` with `∫₀ᵘ [v(1-v)]^{-β} dv = w`.
    fn solve_left(&self, w: f64) -> f64 {
        let (mut lo, mut hi, guess) = self.bracket(w);
        let mut u = guess.clamp(lo, hi);
        for _ in 0..INVERSE_MAX_ITER {
            let r = self.left_integral(u) - w;
            if r == 0.0 {
                return u;
            }
            if r > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - r / self.f_prime(u);
            let next = if newton > lo && newton < hi && newton.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - u).abs() <= 2.0 * f64::EPSILON * u.max(f64::MIN_POSITIVE)
                || hi - lo <= f64::EPSILON * hi
            {
                return next;
            }
            u = next;
        }
        u
    }

    /// Cheap approximation of `F⁻¹(z)` from the table (no quadrature).
    pub(crate) fn split_guess(&self, z: f64) -> Split {
        if z <= 0.5 * self.f1 {
            Split::from_x(self.bracket(z.max(0.0)).2)
        } else {
            Split::from_c(self.bracket((self.f1 - z).max(0.0)).2)
        }
    }

    fn bracket(&self, w: f64) -> (f64, f64, f64) {
        let b = self.beta;
        let k = self.fs.partition_point(|&f| f <= w);
        if k == 0 {
            // Below the table: F(x) ≈ x^{1-β}/(1-β).
            let guess = ((1.0 - b) * w).powf(1.0 / (1.0 - b));
            return (0.0, self.xs[0], guess);
        }
        if k == self.fs.len() {
            return (0.5, 0.5, 0.5);
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (f0, f1) = (self.fs[k - 1], self.fs[k]);
        (x0, x1, x0 + (x1 - x0) * (w - f0) / (f1 - f0))
    }

    /// Dumps the table over the whole interval as CSV `x,F`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,F")?;
        for (x, f) in self.xs.iter().zip(&self.fs) {
            writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*f))?;
        }
        for (c, f) in self.xs.iter().zip(&self.fs).rev().skip(1) {
            writeln!(out, "{},{}", fmt_f64(1.0 - c), fmt_f64(self.f1 - f))?;
        }
        Ok(())
    }
}

/// `F(x)`; builds the quadrature on every call (use a [`TransformTable`] in loops).
pub fn eval_f(x: f64, beta: f64) -> Result<f64> {
    TransformTable::with_sizes(beta, QUADRATURE_NODES, 4)?.eval_f(x)
}

/// `F(u, y)`; builds the quadrature on every call.
pub fn eval_f2(u: f64, y: f64, beta: f64) -> Result<f64> {
    TransformTable::with_sizes(beta, QUADRATURE_NODES, 4)?.eval_f2(u, y)
}

/// `G(x) = θ(μ - x)[x(1 - x)]^{-β}` on the open interval.
pub fn eval_g(x: f64, params: &ModelParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain("x", x, "(0, 1)"));
    }
    Ok(params.drift_raw(x))
}

/// `(G∘F⁻¹)(z)` on `(0, F(1))`.
pub fn eval_g_of_f_inv(z: f64, params: &ModelParams, table: &TransformTable) -> Result<f64> {
    if !(z > 0.0 && z < table.f1()) {
        return Err(Error::domain("z", z, "(0, F(1))"));
    }
    let p = table.inverse_split(z);
    if !(p.x > 0.0 && p.c > 0.0) {
        return Err(Error::domain("F^-1(z)", p.x, "(0, 1)"));
    }
    Ok(params.drift_split(p))
}

/// `(G∘F⁻¹)'(z) = r(F⁻¹(z))`.
pub fn eval_g_of_f_inv_slope(z: f64, params: &ModelParams, table: &TransformTable) -> Result<f64> {
    if !(z > 0.0 && z < table.f1()) {
        return Err(Error::domain("z", z, "(0, F(1))"));
    }
    Ok(params.slope_split(table.inverse_split(z)))
}

/// The contraction constant `l = inf_{y ∈ (0,1)} θ [β(μ - y)(1 - 2y)/(y(1 - y)) + 1]`,
/// so that `(G∘F⁻¹)' ≤ -l` everywhere.
///
/// A logit-spaced scan locates the minimizing cell, then golden-section
/// search refines it.
pub fn contraction_constant(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let q = |y: f64| -params.drift_slope(y);
    let logistic = |s: f64| 1.0 / (1.0 + (-s).exp());
    const SCAN: usize = 4001;
    let s_of = |i: usize| -35.0 + 70.0 * i as f64 / (SCAN - 1) as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..SCAN {
        let v = q(logistic(s_of(i)));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut a = s_of(best_i.saturating_sub(1));
    let mut b = s_of((best_i + 1).min(SCAN - 1));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (q(logistic(c)), q(logistic(d)));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = q(logistic(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = q(logistic(d));
        }
    }
    let l = best.min(fc).min(fd);
    if !(l > 0.0) {
        return Err(Error::Internal(format!(
            "contraction constant is not positive ({l})"
        )));
    }
    Ok(l)
}
