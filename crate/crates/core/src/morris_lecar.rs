//! Morris–Lecar neuron whose potassium gating variable follows the
//! generalized Jacobi equation with voltage-dependent coefficients:
//!
//! ```text
//! dV = -(1/C)[g_Ca m∞(V)(V - V_Ca) + g_K X (V - V_K) + g_L (V - V_L) - I] dt
//! dX = -θ(V)(X - μ(V)) dt + σ* [2h(V) X(1 - X)]^β dB^H
//! ```
//!
//! Each step freezes `(θ, μ, σ)` at the current potential, advances `X` by one
//! implicit step in transformed coordinates (the transform depends on `β`
//! only, so `y = F(X)` is carried across steps) and then `V` by explicit
//! Euler with the updated `X`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler_solver::{solve_implicit, DEFAULT_ROOT_TOL};
use crate::gaussian_paths::{sample_fbm, GaussianPath};
use crate::io::fmt_f64;
use crate::jacobi_transform::{ModelParams, Split, TransformTable};

/// Potentials accepted as initial condition, in mV.
pub const V0_RANGE: (f64, f64) = (-70.0, 30.0);

/// Every constant of the model; there are no built-in defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MLParams {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "g_Ca")]
    pub g_ca: f64,
    #[serde(rename = "g_K")]
    pub g_k: f64,
    #[serde(rename = "g_L")]
    pub g_l: f64,
    #[serde(rename = "V_Ca")]
    pub v_ca: f64,
    #[serde(rename = "V_K")]
    pub v_k: f64,
    #[serde(rename = "V_L")]
    pub v_l: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    #[serde(rename = "V2")]
    pub v2: f64,
    #[serde(rename = "V3")]
    pub v3: f64,
    #[serde(rename = "V4")]
    pub v4: f64,
    pub phi: f64,
    #[serde(rename = "I")]
    pub i_ext: f64,
    pub sigma_star: f64,
    pub beta: f64,
    #[serde(rename = "H")]
    pub hurst: f64,
    /// Hölder index used to check `β ∈ (1 - α, 1)`; must be below `H`.
    pub alpha: f64,
}

/// Gating rates at one potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub a: f64,
    pub b: f64,
    pub m_inf: f64,
    /// `ab/(a + b)`.
    pub h_gate: f64,
}

impl MLParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.c, self.g_ca, self.g_k, self.g_l, self.v_ca, self.v_k, self.v_l, self.v1, self.v2,
            self.v3, self.v4, self.phi, self.i_ext,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("MLParams", "all constants must be finite"));
        }
        if !(self.c > 0.0) {
            return Err(Error::invalid("C", "capacitance must be positive"));
        }
        if self.v2 == 0.0 {
            return Err(Error::invalid("V2", "must be nonzero"));
        }
        if self.v4 == 0.0 {
            return Err(Error::invalid("V4", "must be nonzero"));
        }
        if !(self.phi > 0.0) {
            return Err(Error::invalid("phi", "rate scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.sigma_star) {
            return Err(Error::invalid("sigma_star", "must lie in [0, 1)"));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::invalid("H", "must lie in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha < self.hurst) {
            return Err(Error::invalid("alpha", "must lie in (0, H)"));
        }
        if !(self.beta > 1.0 - self.alpha && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (1 - alpha, 1)"));
        }
        Ok(())
    }

    pub fn rate_functions(&self, v: f64) -> Rates {
        let ch = 0.5 * self.phi * ((v - self.v3) / (2.0 * self.v4)).cosh();
        let th = ((v - self.v3) / self.v4).tanh();
        let a = ch * (1.0 + th);
        let b = ch * (1.0 - th);
        Rates {
            a,
            b,
            m_inf: 0.5 * (1.0 + ((v - self.v1) / self.v2).tanh()),
            h_gate: a * b / (a + b),
        }
    }

    /// `(θ, μ, c_diff)` at potential `v`, with `θ = a + b`, `μ = a/(a + b)`
    /// and `c_diff = σ* (2h)^β`, so that the gating noise is
    /// `c_diff [X(1 - X)]^β dB`.
    pub fn effective_jacobi_params(&self, v: f64) -> (f64, f64, f64) {
        let r = self.rate_functions(v);
        let theta = r.a + r.b;
        let gamma = self.sigma_star * (r.a * r.b / (theta * theta)).powf(self.beta);
        (theta, r.a / theta, gamma * (2.0 * theta).powf(self.beta))
    }

    /// Constant-coefficient parameters frozen at `v`, with `γθ^β = c_diff`.
    pub fn frozen_params(&self, v: f64) -> Result<ModelParams> {
        let (theta, mu, c_diff) = self.effective_jacobi_params(v);
        ModelParams::new(
            theta,
            mu,
            c_diff / theta.powf(self.beta),
            self.beta,
            self.alpha,
        )
    }

    /// `b_V(v, x)`.
    pub fn voltage_drift(&self, v: f64, x: f64) -> f64 {
        let m = self.rate_functions(v).m_inf;
        -(self.g_ca * m * (v - self.v_ca)
            + self.g_k * x * (v - self.v_k)
            + self.g_l * (v - self.v_l)
            - self.i_ext)
            / self.c
    }

    /// Noiseless vector field `(b_V, b_X)`.
    pub fn vector_field(&self, v: f64, x: f64) -> (f64, f64) {
        let (theta, mu, _) = self.effective_jacobi_params(v);
        (self.voltage_drift(v, x), -theta * (x - mu))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronTrajectory {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

impl NeuronTrajectory {
    /// Writes CSV `t,V,X`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,V,X")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.times[k]),
                fmt_f64(self.v[k]),
                fmt_f64(self.x[k])
            )?;
        }
        Ok(())
    }
}

fn check_initial(x0: f64, v0: f64) -> Result<()> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::domain("x0", x0, "(0, 1)"));
    }
    if !(v0 >= V0_RANGE.0 && v0 <= V0_RANGE.1) {
        return Err(Error::domain("v0", v0, "[-70, 30] mV"));
    }
    Ok(())
}

/// Simulation driven by fBm sampled with `sample_fbm(T, n, H, seed)`.
pub fn simulate_ml(
    p: &MLParams,
    x0: f64,
    v0: f64,
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<NeuronTrajectory> {
    p.validate()?;
    let w = sample_fbm(horizon, n, p.hurst, seed)?;
    simulate_ml_with_signal(p, x0, v0, &w, horizon, n)
}

/// Simulation along a given signal whose grid is `{k T/n}` from its origin.
pub fn simulate_ml_with_signal(
    p: &MLParams,
    x0: f64,
    v0: f64,
    w: &GaussianPath,
    horizon: f64,
    n: usize,
) -> Result<NeuronTrajectory> {
    p.validate()?;
    check_initial(x0, v0)?;
    if n == 0 || !(horizon > 0.0) {
        return Err(Error::invalid(
            "n",
            "need a positive horizon and step count",
        ));
    }
    let h = horizon / n as f64;
    if (w.dt() - h).abs() > 1e-12 * h || w.origin() + n >= w.len() {
        return Err(Error::GridMismatch(
            "signal must be sampled on the solver grid".into(),
        ));
    }
    let table = TransformTable::new(p.beta)?;
    let o = w.origin();
    let mut times = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut split = Split::from_x(x0);
    let mut y = table.f_split(split);
    let mut v = v0;
    times.push(0.0);
    vs.push(v);
    xs.push(x0);
    for k in 0..n {
        let frozen = p.frozen_params(v).map_err(|e| e.at_step(k + 1))?;
        let a = y + frozen.noise_scale() * w.increment(o + k, o + k + 1);
        (split, y) = solve_implicit(a, h, &frozen, &table, split, DEFAULT_ROOT_TOL)
            .map_err(|e| e.at_step(k + 1))?;
        v += h * p.voltage_drift(v, split.x);
        if !v.is_finite() {
            return Err(Error::domain("V", v, "finite potentials").at_step(k + 1));
        }
        times.push((k + 1) as f64 * h);
        vs.push(v);
        xs.push(split.x);
    }
    Ok(NeuronTrajectory {
        times,
        v: vs,
        x: xs,
    })
}

/// Classical RK4 on the noiseless system, recording every `record_every` steps.
pub fn rk4_reference(
    p: &MLParams,
    x0: f64,
    v0: f64,
    horizon: f64,
    steps: usize,
    record_every: usize,
) -> NeuronTrajectory {
    let h = horizon / steps as f64;
    let (mut v, mut x) = (v0, x0);
    let mut out = NeuronTrajectory {
        times: vec![0.0],
        v: vec![v],
        x: vec![x],
    };
    for k in 0..steps {
        let (a1, b1) = p.vector_field(v, x);
        let (a2, b2) = p.vector_field(v + 0.5 * h * a1, x + 0.5 * h * b1);
        let (a3, b3) = p.vector_field(v + 0.5 * h * a2, x + 0.5 * h * b2);
        let (a4, b4) = p.vector_field(v + h * a3, x + h * b3);
        v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        x += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if (k + 1) % record_every == 0 {
            out.times.push((k + 1) as f64 * h);
            out.v.push(v);
            out.x.push(x);
        }
    }
    out
}
