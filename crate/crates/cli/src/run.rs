//! Executes a resolved job and writes its artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rjacobi::ergodic::{ergodic_estimate_ensemble, time_average, EnsembleConfig, EnsembleReport};
use rjacobi::euler_solver::{convergence_study, convergence_study_ensemble, solve_path};
use rjacobi::gaussian_paths::{sample_fbm, GaussianPath};
use rjacobi::io::fmt_f64;
use rjacobi::jacobi_transform::contraction_constant;
use rjacobi::malliavin_density::{estimate_g, nv_density, x_density, DriftMode};
use rjacobi::morris_lecar::simulate_ml;
use rjacobi::parallel::{derive_seed, map_indexed};
use rjacobi::{Execution, ModelParams, SolverConfig, TransformTable};
use serde::Serialize;

use crate::config::{ConvergenceJob, DensityJob, ErgodicJob, Job, NeuronJob, Signal, SimulateJob};

/// Names of the files written, in order.
pub type Artifacts = Vec<String>;

struct Sink<'a> {
    dir: &'a Path,
    written: Artifacts,
}

impl<'a> Sink<'a> {
    fn create(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut out = BufWriter::new(file);
        fill(&mut out)
            .and_then(|_| out.flush())
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.create(name, |out| writeln!(out, "{text}"))
    }
}

pub fn execute(job: &Job, seed: u64, dir: &Path) -> Result<Artifacts> {
    let mut sink = Sink {
        dir,
        written: Vec::new(),
    };
    match job {
        Job::Simulate(j) => simulate(j, seed, &mut sink)?,
        Job::Convergence(j) => convergence(j, seed, &mut sink)?,
        Job::Ergodic(j) => ergodic(j, seed, &mut sink)?,
        Job::Density(j) => density(j, seed, &mut sink)?,
        Job::Neuron(j) => neuron(j, seed, &mut sink)?,
    }
    Ok(sink.written)
}

#[derive(Serialize)]
struct MemberSummary {
    member: usize,
    seed: u64,
    x_final: Vec<f64>,
    s_final: Vec<f64>,
    /// Paths keep the order of their initial states at every node.
    ordered: bool,
}

#[derive(Serialize)]
struct SimulateSummary {
    x0: Vec<f64>,
    members: Vec<MemberSummary>,
    /// Per initial state, `max - min` of the final running average across
    /// members.
    s_final_band: Vec<f64>,
}

fn simulate(job: &SimulateJob, seed: u64, sink: &mut Sink) -> Result<()> {
    let table = TransformTable::new(job.params.beta)?;
    let config = SolverConfig::new(job.grid.horizon, job.grid.n, job.params)?;
    let runs = map_indexed(job.paths, Execution::default(), |j| -> Result<_> {
        let s = derive_seed(seed, j as u64);
        let w = sample_fbm(job.grid.horizon, job.grid.n, job.hurst, s).context("gaussian_paths")?;
        let paths = job
            .x0
            .iter()
            .map(|&x0| {
                solve_path(&w, x0, &config, &table)
                    .with_context(|| format!("euler_solver (member {j}, x0 = {x0})"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((s, paths))
    });
    let mut order: Vec<usize> = (0..job.x0.len()).collect();
    order.sort_by(|&a, &b| job.x0[a].total_cmp(&job.x0[b]));
    let mut members = Vec::with_capacity(job.paths);
    for (j, run) in runs.into_iter().enumerate() {
        let (s, paths) = run?;
        let mut x_final = Vec::new();
        let mut s_final = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let avg = time_average(path, |x| x);
            sink.create(&format!("path_{j}_{i}.csv"), |out| path.write_csv(out))?;
            sink.create(&format!("S_{j}_{i}.csv"), |out| avg.write_csv(out))?;
            x_final.push(path.last().x);
            s_final.push(avg.last());
        }
        let ordered = order.windows(2).all(|p| {
            paths[p[0]]
                .y
                .iter()
                .zip(&paths[p[1]].y)
                .all(|(a, b)| a <= b)
        });
        members.push(MemberSummary {
            member: j,
            seed: s,
            x_final,
            s_final,
            ordered,
        });
    }
    let s_final_band = (0..job.x0.len())
        .map(|i| {
            let (lo, hi) = members
                .iter()
                .map(|m| m.s_final[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .collect();
    sink.json(
        "summary.json",
        &SimulateSummary {
            x0: job.x0.clone(),
            members,
            s_final_band,
        },
    )
}

fn convergence(job: &ConvergenceJob, seed: u64, sink: &mut Sink) -> Result<()> {
    let b = &job.block;
    let n_ref = job.grid.n;
    let report = match b.signal {
        Signal::Fbm => convergence_study_ensemble(
            &job.params,
            job.hurst,
            job.grid.horizon,
            job.x0,
            &b.n_list,
            n_ref,
            b.paths,
            b.p,
            seed,
            Execution::default(),
        ),
        Signal::Sin => {
            let table = TransformTable::new(job.params.beta)?;
            let w = GaussianPath::from_fn(job.grid.horizon, n_ref, f64::sin)?;
            convergence_study(&w, job.x0, &job.params, &b.n_list, n_ref, &table)
        }
    }
    .context("euler_solver convergence study")?;
    sink.create("convergence.csv", |out| {
        writeln!(out, "n,sup_error")?;
        for e in &report.entries {
            writeln!(out, "{},{}", e.n, fmt_f64(e.sup_error))?;
        }
        Ok(())
    })?;
    sink.json("convergence.json", &report)
}

#[derive(Serialize)]
struct ErgodicOutput<'a> {
    #[serde(flatten)]
    report: &'a EnsembleReport,
    /// Contraction constant of the model.
    l: f64,
    nodes_per_unit: usize,
}

fn ergodic(job: &ErgodicJob, seed: u64, sink: &mut Sink) -> Result<()> {
    let config = EnsembleConfig {
        hurst: job.hurst,
        horizon: job.grid.horizon,
        steps: job.grid.n,
        n_paths: job.n_paths,
        pullback_depth: job.pullback_depth,
        pullback_tol: job.pullback_tol,
        x0: job.x0,
        seed,
    };
    let report = ergodic_estimate_ensemble(&job.params, &config, &|x| x, Execution::default())
        .context("ergodic ensemble")?;
    sink.create("ergodic_samples.csv", |out| {
        writeln!(out, "S_T,x_T,x_hat")?;
        for ((s, xt), xh) in report
            .time_averages
            .iter()
            .zip(&report.x_final)
            .zip(&report.x_hat)
        {
            writeln!(out, "{},{},{}", fmt_f64(*s), fmt_f64(*xt), fmt_f64(*xh))?;
        }
        Ok(())
    })?;
    sink.json(
        "ergodic.json",
        &ErgodicOutput {
            report: &report,
            l: contraction_constant(&job.params)?,
            nodes_per_unit: ((job.grid.n as f64 / job.grid.horizon).round() as usize).max(1),
        },
    )
}

#[derive(Serialize)]
struct DensityMeta<'a> {
    t: f64,
    params: &'a ModelParams,
    #[serde(rename = "H")]
    hurst: f64,
    x0: f64,
    mode: DriftMode,
    n_outer: usize,
    n_inner: usize,
    n_u: usize,
    y_nodes: usize,
    bandwidth: f64,
    mass: Option<f64>,
    mean_y: f64,
    mean_abs_dev: f64,
    x_mass: f64,
    seed: u64,
}

fn density(job: &DensityJob, seed: u64, sink: &mut Sink) -> Result<()> {
    let est = estimate_g(
        &job.params,
        job.hurst,
        job.t,
        job.x0,
        job.grid,
        job.mc,
        job.mode,
        seed,
        Execution::default(),
    )
    .context("malliavin_density estimate of g")?;
    let est = nv_density(est).context("malliavin_density density formula")?;
    let table = TransformTable::new(job.params.beta)?;
    let xd = x_density(&est, &table, job.x_refine).context("malliavin_density x-density")?;
    sink.create("density_y.csv", |out| est.write_csv(out))?;
    sink.create("density_x.csv", |out| xd.write_csv(out))?;
    sink.json(
        "density.json",
        &DensityMeta {
            t: est.t,
            params: &job.params,
            hurst: job.hurst,
            x0: job.x0,
            mode: job.mode,
            n_outer: est.n_outer,
            n_inner: est.n_inner,
            n_u: est.n_u,
            y_nodes: est.ys.len(),
            bandwidth: est.bandwidth,
            mass: est.mass,
            mean_y: est.mean_y,
            mean_abs_dev: est.mean_abs_dev,
            x_mass: xd.mass(),
            seed,
        },
    )
}

fn neuron(job: &NeuronJob, seed: u64, sink: &mut Sink) -> Result<()> {
    let traj = simulate_ml(&job.ml, job.x0, job.v0, job.grid.horizon, job.grid.n, seed)
        .context("morris_lecar")?;
    sink.create("trajectory.csv", |out| traj.write_csv(out))
}
