//! Run configuration: JSON schema, validation and the resolved job for each
//! command.

use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use rjacobi::malliavin_density::{DriftMode, GridConfig, McConfig};
use rjacobi::{MLParams, ModelParams, TransformTable};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Convergence,
    Ergodic,
    Density,
    Neuron,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Simulate => "simulate",
            Command::Convergence => "convergence",
            Command::Ergodic => "ergodic",
            Command::Density => "density",
            Command::Neuron => "neuron",
        };
        f.write_str(name)
    }
}

/// A validation failure; the message always names the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

fn missing(field: &str, command: Command) -> ConfigError {
    ConfigError(format!("missing field `{field}` (required by `{command}`)"))
}

fn invalid(field: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError(format!("`{field}`: {reason}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
}

/// An initial state, either directly in `(0, 1)` or as `{"y": v}` meaning
/// `F⁻¹(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Initial {
    X(f64),
    Y { y: f64 },
}

impl Initial {
    fn resolve(self, table: &TransformTable) -> Result<f64, ConfigError> {
        let x = match self {
            Initial::X(x) => x,
            Initial::Y { y } => table.eval_f_inv(y).map_err(|e| invalid("x0.y", e))?,
        };
        if !(x > 0.0 && x < 1.0) {
            return Err(invalid("x0", format!("{x} is outside (0, 1)")));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStates {
    One(Initial),
    Many(Vec<Initial>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Fbm,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceBlock {
    pub n_list: Vec<usize>,
    #[serde(default = "default_signal")]
    pub signal: Signal,
    #[serde(default = "one")]
    pub paths: usize,
    #[serde(default = "two")]
    pub p: f64,
}

fn default_signal() -> Signal {
    Signal::Fbm
}

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

/// Monte Carlo sizes; each command reads the fields it needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    /// Evaluation time; defaults to the grid horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default = "full")]
    pub mode: Mode,
    /// Sub-intervals per y-cell when mapping the density to x.
    #[serde(default = "default_refine")]
    pub x_refine: usize,
}

fn full() -> Mode {
    Mode::Full
}

fn default_refine() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ml: Option<MLParams>,
    #[serde(default, rename = "H", skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<InitialStates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    /// Independent noise realisations for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityBlock>,
}

/// Parses a config file, or a manifest written by a previous run (its
/// `config` member).
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError(format!("not valid JSON: {e}")))?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("config") => {
            map.remove("config").unwrap()
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| ConfigError(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct SimulateJob {
    pub params: ModelParams,
    pub hurst: f64,
    pub grid: Grid,
    pub x0: Vec<f64>,
    pub paths: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceJob {
    pub params: ModelParams,
    pub hurst: f64,
    pub grid: Grid,
    pub x0: f64,
    pub block: ConvergenceBlock,
}

#[derive(Debug, Clone)]
pub struct ErgodicJob {
    pub params: ModelParams,
    pub hurst: f64,
    pub grid: Grid,
    pub x0: f64,
    pub n_paths: usize,
    pub pullback_depth: usize,
    pub pullback_tol: f64,
}

#[derive(Debug, Clone)]
pub struct DensityJob {
    pub params: ModelParams,
    pub hurst: f64,
    pub t: f64,
    pub x0: f64,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub mode: DriftMode,
    pub x_refine: usize,
}

#[derive(Debug, Clone)]
pub struct NeuronJob {
    pub ml: MLParams,
    pub grid: Grid,
    pub x0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone)]
pub enum Job {
    Simulate(SimulateJob),
    Convergence(ConvergenceJob),
    Ergodic(ErgodicJob),
    Density(DensityJob),
    Neuron(NeuronJob),
}

impl RunConfig {
    /// Checks every block the command needs and resolves defaults.
    pub fn resolve(&self, command: Command) -> Result<Job, ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(invalid(
                    "command",
                    format!("config is for `{c}` but `{command}` was requested"),
                ));
            }
        }
        if command == Command::Neuron {
            return self.neuron();
        }
        let params = self.params.ok_or_else(|| missing("params", command))?;
        params.validate().map_err(|e| invalid("params", e))?;
        let hurst = self.hurst.ok_or_else(|| missing("H", command))?;
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid("H", format!("{hurst} is outside (0, 1)")));
        }
        let grid = self.grid.ok_or_else(|| missing("grid", command))?;
        check_grid(&grid)?;
        let table = TransformTable::new(params.beta).map_err(|e| invalid("params.beta", e))?;
        let states = match &self.x0 {
            None => return Err(missing("x0", command)),
            Some(InitialStates::One(s)) => vec![s.resolve(&table)?],
            Some(InitialStates::Many(v)) => v
                .iter()
                .map(|s| s.resolve(&table))
                .collect::<Result<_, _>>()?,
        };
        if states.is_empty() {
            return Err(invalid("x0", "needs at least one initial state"));
        }
        let single = || {
            if states.len() == 1 {
                Ok(states[0])
            } else {
                Err(invalid(
                    "x0",
                    format!("`{command}` takes a single initial state"),
                ))
            }
        };
        let mc = self.mc.unwrap_or_default();
        match command {
            Command::Simulate => {
                let paths = self.paths.unwrap_or(1);
                if paths == 0 {
                    return Err(invalid("paths", "must be positive"));
                }
                Ok(Job::Simulate(SimulateJob {
                    params,
                    hurst,
                    grid,
                    x0: states,
                    paths,
                }))
            }
            Command::Convergence => {
                let block = self
                    .convergence
                    .clone()
                    .ok_or_else(|| missing("convergence", command))?;
                if block.n_list.len() < 2 {
                    return Err(invalid(
                        "convergence.n_list",
                        "needs at least two step counts",
                    ));
                }
                if let Some(&n) = block.n_list.iter().find(|&&n| n == 0 || grid.n % n != 0) {
                    return Err(invalid(
                        "convergence.n_list",
                        format!("{n} does not divide grid.n = {}", grid.n),
                    ));
                }
                if block.paths == 0 {
                    return Err(invalid("convergence.paths", "must be positive"));
                }
                if !(block.p >= 1.0) {
                    return Err(invalid("convergence.p", "must be at least 1"));
                }
                if block.signal == Signal::Fbm && !(hurst > 0.0 && hurst < 1.0) {
                    return Err(invalid("H", "needed for an fBm signal"));
                }
                Ok(Job::Convergence(ConvergenceJob {
                    params,
                    hurst,
                    grid,
                    x0: single()?,
                    block,
                }))
            }
            Command::Ergodic => {
                let n_paths = mc.n_paths.ok_or_else(|| missing("mc.n_paths", command))?;
                let pullback_depth = mc
                    .pullback_depth
                    .ok_or_else(|| missing("mc.pullback_depth", command))?;
                let pullback_tol = mc.pullback_tol.unwrap_or(1e-8);
                if n_paths == 0 {
                    return Err(invalid("mc.n_paths", "must be positive"));
                }
                if pullback_depth == 0 {
                    return Err(invalid("mc.pullback_depth", "must be positive"));
                }
                if !(pullback_tol > 0.0) {
                    return Err(invalid("mc.pullback_tol", "must be positive"));
                }
                if grid.n as f64 / grid.horizon < 0.5 {
                    return Err(invalid(
                        "grid",
                        "needs at least one node per unit time for the pullback",
                    ));
                }
                Ok(Job::Ergodic(ErgodicJob {
                    params,
                    hurst,
                    grid,
                    x0: single()?,
                    n_paths,
                    pullback_depth,
                    pullback_tol,
                }))
            }
            Command::Density => {
                if hurst < 0.5 {
                    return Err(invalid("H", "density estimation requires H >= 1/2"));
                }
                let block = self.density.unwrap_or(DensityBlock {
                    t: None,
                    mode: Mode::Full,
                    x_refine: default_refine(),
                });
                let t = block.t.unwrap_or(grid.horizon);
                let h = grid.horizon / grid.n as f64;
                let k = (t / h).round();
                if !(t > 0.0 && t <= grid.horizon) || (k * h - t).abs() > 1e-9 * t.max(1.0) {
                    return Err(invalid(
                        "density.t",
                        format!("{t} is not a positive node of the grid"),
                    ));
                }
                if block.x_refine == 0 {
                    return Err(invalid("density.x_refine", "must be positive"));
                }
                let defaults = McConfig::default();
                let mc = McConfig {
                    n_outer: mc.n_outer.unwrap_or(defaults.n_outer),
                    n_inner: mc.n_inner.unwrap_or(defaults.n_inner),
                    u_nodes: mc.u_nodes.unwrap_or(defaults.u_nodes),
                    bandwidth: mc.bandwidth,
                    y_nodes: mc.y_nodes.unwrap_or(defaults.y_nodes),
                };
                check_mc(&mc)?;
                Ok(Job::Density(DensityJob {
                    params,
                    hurst,
                    t,
                    x0: single()?,
                    grid: GridConfig {
                        horizon: grid.horizon,
                        steps: grid.n,
                    },
                    mc,
                    mode: match block.mode {
                        Mode::Full => DriftMode::Full,
                        Mode::Disabled => DriftMode::Disabled,
                    },
                    x_refine: block.x_refine,
                }))
            }
            Command::Neuron => unreachable!(),
        }
    }

    fn neuron(&self) -> Result<Job, ConfigError> {
        let command = Command::Neuron;
        let ml = self.ml.ok_or_else(|| missing("ml", command))?;
        ml.validate().map_err(|e| invalid("ml", e))?;
        let grid = self.grid.ok_or_else(|| missing("grid", command))?;
        check_grid(&grid)?;
        let x0 = match self.x0 {
            Some(InitialStates::One(Initial::X(x))) if x > 0.0 && x < 1.0 => x,
            Some(_) => return Err(invalid("x0", "`neuron` takes one initial state in (0, 1)")),
            None => return Err(missing("x0", command)),
        };
        let v0 = self.v0.ok_or_else(|| missing("v0", command))?;
        let (lo, hi) = rjacobi::morris_lecar::V0_RANGE;
        if !(v0 >= lo && v0 <= hi) {
            return Err(invalid("v0", format!("{v0} is outside [{lo}, {hi}]")));
        }
        Ok(Job::Neuron(NeuronJob { ml, grid, x0, v0 }))
    }
}

fn check_grid(grid: &Grid) -> Result<(), ConfigError> {
    if !(grid.horizon > 0.0 && grid.horizon.is_finite()) {
        return Err(invalid("grid.T", "must be positive"));
    }
    if grid.n == 0 {
        return Err(invalid("grid.n", "must be positive"));
    }
    Ok(())
}

fn check_mc(mc: &McConfig) -> Result<(), ConfigError> {
    if mc.n_outer < 2 {
        return Err(invalid("mc.n_outer", "needs at least two outer paths"));
    }
    if mc.n_inner == 0 {
        return Err(invalid("mc.n_inner", "must be positive"));
    }
    if mc.u_nodes == 0 {
        return Err(invalid("mc.u_nodes", "must be positive"));
    }
    if mc.y_nodes < 3 {
        return Err(invalid("mc.y_nodes", "needs at least three nodes"));
    }
    if let Some(b) = mc.bandwidth {
        if !(b > 0.0) {
            return Err(invalid("mc.bandwidth", "must be positive"));
        }
    }
    Ok(())
}
