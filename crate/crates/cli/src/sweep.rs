//! Error-versus-sample-size sweeps against a large-sample Sinkhorn reference.
//!
//! Every random quantity is drawn from a stream keyed by the sweep seed and
//! the cell coordinates, so results do not depend on thread count or order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use neural_eot::estimator::{fit, TrainConfig};
use neural_eot::numerics::{mix_seed, RealMatrix, SeededRng};
use neural_eot::sinkhorn::solve_potentials;
use neural_eot::synthetic::{random_gaussian_pair, sample_gaussian, sample_uniform_cube, GaussianSpec};
use neural_eot::transport::PointInstance;

use crate::data::write_file;
use crate::error::{usage, CliError};
use crate::slope::{fit_loglog_slope, LogLogFit};
use crate::svg::{loglog_plot, Series};

pub const CSV_VERSION_LINE: &str = "# neot sweep v1";
pub const CSV_HEADER: &str = "dim,n,k,eps,seed,batch,estimate,truth,relative_error,wall_time,error";
pub const CACHE_FILE: &str = "truth_cache.json";
pub const MAX_PILOT_SEEDS: usize = 5;

const TAG_TRUTH: u64 = 1;
const TAG_PAIR: u64 = 2;
const TAG_RUN: u64 = 3;
const TAG_PILOT: u64 = 4;
const STREAM_X: u64 = 10;
const STREAM_Y: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Both samples uniform on the cube [−1/√d, 1/√d]^d.
    Uniform,
    /// Two random Gaussians per dimension.
    Gaussian,
}

impl Distribution {
    fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub distribution: Distribution,
    pub dims: Vec<usize>,
    /// Width per dimension, paired positionally with `dims`.
    pub k_per_dim: Vec<usize>,
    pub ns: Vec<usize>,
    pub eps: f64,
    pub runs: usize,
    pub batch_candidates: Vec<usize>,
    pub truth_n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub truth_tol: f64,
    pub truth_max_iter: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distribution: Distribution::Uniform,
            dims: vec![1],
            k_per_dim: vec![16],
            ns: (3..=11).map(|p| 1usize << p).collect(),
            eps: 0.5,
            runs: 20,
            batch_candidates: vec![2, 4, 8, 16, 32, 64, 128],
            truth_n: 10_000,
            seed: 0,
            out_dir: PathBuf::from("sweep-out"),
            epochs: 20,
            lr: 1e-3,
            truth_tol: 1e-9,
            truth_max_iter: 100_000,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(usage("eps must be positive"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(usage("dims must be a nonempty list of positive counts"));
        }
        if self.k_per_dim.len() != self.dims.len() {
            return Err(usage(format!(
                "k_per_dim has {} entries for {} dims",
                self.k_per_dim.len(),
                self.dims.len()
            )));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(usage("ns must be a nonempty list of positive counts"));
        }
        if self.runs == 0 {
            return Err(usage("runs must be at least 1"));
        }
        if self.batch_candidates.is_empty() || self.batch_candidates.contains(&0) {
            return Err(usage("batch_candidates must be a nonempty list of positive counts"));
        }
        if self.truth_n == 0 {
            return Err(usage("truth_n must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(usage("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(usage("lr must be positive"));
        }
        if !(self.truth_tol > 0.0) || self.truth_max_iter == 0 {
            return Err(usage("truth_tol must be positive and truth_max_iter at least 1"));
        }
        Ok(())
    }

    pub fn pilot_seeds(&self) -> usize {
        self.runs.min(MAX_PILOT_SEEDS)
    }

    fn truth_key(&self, dim: usize) -> String {
        format!(
            "{}|dim={dim}|truth_n={}|eps={:?}|seed={}|tol={:?}",
            self.distribution.name(),
            self.truth_n,
            self.eps,
            self.seed,
            self.truth_tol
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub threads: usize,
    /// Record wall times; off makes every output byte-reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub dim: usize,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub batch: usize,
    pub estimate: Option<f64>,
    pub truth: Option<f64>,
    pub relative_error: Option<f64>,
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub cost: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotScore {
    pub batch: usize,
    pub median_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub dim: usize,
    pub n: usize,
    pub k: usize,
    pub batch: usize,
    pub median_relative_error: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    pub pilot: Vec<PilotScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimSlope {
    pub dim: usize,
    pub k: usize,
    pub fit: Option<LogLogFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<DimSlope>,
    pub truths: BTreeMap<usize, Result<TruthEntry, String>>,
    pub sinkhorn_solves: usize,
}

impl SweepOutcome {
    pub fn failed_cells(&self) -> Vec<&CellSummary> {
        self.cells.iter().filter(|c| c.successes == 0).collect()
    }
}

/// Median of finite values; `+∞` entries count as failures and sort last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    let m = if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    };
    m.is_finite().then_some(m)
}

struct DimSetup {
    dim: usize,
    k: usize,
    gaussians: Option<(GaussianSpec, GaussianSpec)>,
    truth: Result<TruthEntry, String>,
}

fn draw(
    setup_gauss: &Option<(GaussianSpec, GaussianSpec)>,
    dim: usize,
    n: usize,
    seed: u64,
) -> neural_eot::Result<(RealMatrix, RealMatrix)> {
    let mut rx = SeededRng::new(seed, STREAM_X);
    let mut ry = SeededRng::new(seed, STREAM_Y);
    match setup_gauss {
        None => Ok((
            sample_uniform_cube(dim, n, &mut rx)?,
            sample_uniform_cube(dim, n, &mut ry)?,
        )),
        Some((mu, nu)) => Ok((sample_gaussian(mu, n, &mut rx)?, sample_gaussian(nu, n, &mut ry)?)),
    }
}

fn load_cache(path: &Path) -> BTreeMap<String, TruthEntry> {
    fs::read(path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

struct TrialOutput {
    estimate: Result<f64, String>,
    wall_time: f64,
}

fn trial(setup: &DimSetup, cfg: &SweepConfig, n: usize, batch: usize, seed: u64) -> TrialOutput {
    let run = || -> neural_eot::Result<(f64, f64)> {
        let (x, y) = draw(&setup.gaussians, setup.dim, n, seed)?;
        let train = TrainConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch,
            seed,
            ..TrainConfig::new(cfg.eps, setup.k)
        };
        let out = fit(&x, &y, &train)?;
        Ok((out.estimate, out.wall_time))
    };
    match run() {
        Ok((estimate, wall_time)) => TrialOutput {
            estimate: Ok(estimate),
            wall_time,
        },
        Err(e) => TrialOutput {
            estimate: Err(e.to_string()),
            wall_time: 0.0,
        },
    }
}

fn relative_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs() / truth.abs()
}

/// Runs the full sweep. Reference values are read from and written back to
/// the cache file in `cfg.out_dir`.
pub fn run_sweep(cfg: &SweepConfig, opts: RunOptions) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", opts.threads)))?;

    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    let cache_path = cfg.out_dir.join(CACHE_FILE);
    let mut cache = load_cache(&cache_path);
    let mut solves = 0;

    let mut setups = Vec::new();
    for (&dim, &k) in cfg.dims.iter().zip(&cfg.k_per_dim) {
        let gaussians = match cfg.distribution {
            Distribution::Uniform => None,
            Distribution::Gaussian => Some(random_gaussian_pair(
                dim,
                &mut SeededRng::new(mix_seed(&[cfg.seed, TAG_PAIR, dim as u64]), 0),
            )?),
        };
        let key = cfg.truth_key(dim);
        let truth = match cache.get(&key) {
            Some(entry) => Ok(*entry),
            None => {
                let computed = (|| -> neural_eot::Result<TruthEntry> {
                    let seed = mix_seed(&[cfg.seed, TAG_TRUTH, dim as u64]);
                    let (x, y) = draw(&gaussians, dim, cfg.truth_n, seed)?;
                    let p = PointInstance::from_samples(x, y, cfg.eps)?;
                    let s = pool.install(|| solve_potentials(&p, cfg.truth_tol, cfg.truth_max_iter))?;
                    Ok(TruthEntry {
                        cost: s.cost(),
                        iterations: s.iterations,
                        residual: s.final_residual,
                    })
                })();
                solves += 1;
                if let Ok(entry) = &computed {
                    cache.insert(key, *entry);
                }
                computed.map_err(|e| format!("reference solve failed: {e}"))
            }
        };
        setups.push(DimSetup {
            dim,
            k,
            gaussians,
            truth,
        });
    }
    if solves > 0 {
        let body = serde_json::to_vec_pretty(&cache).expect("cache serializes");
        write_file(&cache_path, &body)?;
    }

    let mut records = Vec::new();
    let mut cells = Vec::new();
    for setup in &setups {
        for &n in &cfg.ns {
            let (batch, pilot) = select_batch(&pool, setup, cfg, n);
            let seeds: Vec<u64> = (0..cfg.runs)
                .map(|r| mix_seed(&[cfg.seed, TAG_RUN, setup.dim as u64, n as u64, r as u64]))
                .collect();
            let outputs: Vec<TrialOutput> = match &setup.truth {
                Ok(_) => pool.install(|| {
                    seeds
                        .par_iter()
                        .map(|&s| trial(setup, cfg, n, batch, s))
                        .collect()
                }),
                Err(msg) => seeds
                    .iter()
                    .map(|_| TrialOutput {
                        estimate: Err(msg.clone()),
                        wall_time: 0.0,
                    })
                    .collect(),
            };
            let truth = setup.truth.as_ref().ok().map(|t| t.cost);
            let mut errs = Vec::new();
            for (&seed, out) in seeds.iter().zip(outputs) {
                let (estimate, rel, error) = match (out.estimate, truth) {
                    (Ok(e), Some(t)) => {
                        let rel = relative_error(e, t);
                        errs.push(rel);
                        (Some(e), Some(rel), None)
                    }
                    (Ok(e), None) => (Some(e), None, Some("no reference value".to_string())),
                    (Err(msg), _) => (None, None, Some(msg)),
                };
                records.push(TrialRecord {
                    dim: setup.dim,
                    n,
                    k: setup.k,
                    eps: cfg.eps,
                    seed,
                    batch,
                    estimate,
                    truth,
                    relative_error: rel,
                    wall_time: if opts.timing { out.wall_time } else { 0.0 },
                    error,
                });
            }
            cells.push(CellSummary {
                dim: setup.dim,
                n,
                k: setup.k,
                batch,
                median_relative_error: median(&errs),
                successes: errs.len(),
                failures: cfg.runs - errs.len(),
                pilot,
            });
        }
    }
    records.sort_by_key(|r| (r.dim, r.n));

    let slopes = setups
        .iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.dim == s.dim)
                .filter_map(|c| c.median_relative_error.map(|m| (c.n as f64, m)))
                .collect();
            DimSlope {
                dim: s.dim,
                k: s.k,
                fit: fit_loglog_slope(&pts).ok(),
            }
        })
        .collect();

    Ok(SweepOutcome {
        records,
        cells,
        slopes,
        truths: setups.into_iter().map(|s| (s.dim, s.truth)).collect(),
        sinkhorn_solves: solves,
    })
}

/// Picks the candidate with the smallest median relative error over the
/// pilot seeds; ties go to the earlier candidate. Candidates above `n` are skipped.
fn select_batch(
    pool: &rayon::ThreadPool,
    setup: &DimSetup,
    cfg: &SweepConfig,
    n: usize,
) -> (usize, Vec<PilotScore>) {
    let candidates: Vec<usize> = cfg.batch_candidates.iter().copied().filter(|&b| b <= n).collect();
    let fallback = candidates.first().copied().unwrap_or(n.min(cfg.batch_candidates[0]));
    let truth = match (&setup.truth, candidates.len()) {
        (Ok(t), 2..) => t.cost,
        _ => return (fallback, Vec::new()),
    };
    let jobs: Vec<(usize, u64)> = candidates
        .iter()
        .flat_map(|&b| {
            (0..cfg.pilot_seeds()).map(move |p| {
                (b, mix_seed(&[cfg.seed, TAG_PILOT, setup.dim as u64, n as u64, p as u64]))
            })
        })
        .collect();
    let errs: Vec<f64> = pool.install(|| {
        jobs.par_iter()
            .map(|&(b, s)| match trial(setup, cfg, n, b, s).estimate {
                Ok(e) => relative_error(e, truth),
                Err(_) => f64::INFINITY,
            })
            .collect()
    });
    let pilot: Vec<PilotScore> = candidates
        .iter()
        .zip(errs.chunks(cfg.pilot_seeds()))
        .map(|(&batch, chunk)| PilotScore {
            batch,
            median_relative_error: median(chunk),
        })
        .collect();
    let mut best = (f64::INFINITY, fallback);
    for p in &pilot {
        if let Some(m) = p.median_relative_error {
            if m < best.0 {
                best = (m, p.batch);
            }
        }
    }
    (best.1, pilot)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{CSV_VERSION_LINE}\n{CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:?},{},{},{},{},{},{:?},{}\n",
            r.dim,
            r.n,
            r.k,
            r.eps,
            r.seed,
            r.batch,
            opt(r.estimate),
            opt(r.truth),
            opt(r.relative_error),
            r.wall_time,
            csv_field(r.error.as_deref().unwrap_or(""))
        ));
    }
    out
}

pub fn render_svg(cfg: &SweepConfig, outcome: &SweepOutcome) -> String {
    let series: Vec<Series> = outcome
        .slopes
        .iter()
        .map(|s| Series {
            label: format!("d={} k={}", s.dim, s.k),
            points: outcome
                .cells
                .iter()
                .filter(|c| c.dim == s.dim)
                .filter_map(|c| c.median_relative_error.map(|m| (c.n as f64, m)))
                .collect(),
            fit: s.fit,
        })
        .collect();
    loglog_plot(
        &format!("{} samples, eps = {}", cfg.distribution.name(), cfg.eps),
        "sample size n",
        "median relative error",
        &series,
    )
}

pub fn summary_json(cfg: &SweepConfig, outcome: &SweepOutcome) -> serde_json::Value {
    let truths: Vec<serde_json::Value> = outcome
        .truths
        .iter()
        .map(|(dim, t)| match t {
            Ok(e) => json!({"dim": dim, "cost": e.cost, "iterations": e.iterations, "residual": e.residual}),
            Err(msg) => json!({"dim": dim, "error": msg}),
        })
        .collect();
    json!({
        "schema": "neot-sweep-summary-v1",
        "config": cfg,
        "sinkhorn_solves": outcome.sinkhorn_solves,
        "truth": truths,
        "slopes": outcome.slopes,
        "cells": outcome.cells,
        "failed_cells": outcome.failed_cells().len(),
        "protocol": {
            "pilot_seeds": cfg.pilot_seeds(),
            "pilot_selection": "smallest median relative error over pilot seeds disjoint from the reported runs; ties keep the earlier candidate; candidates larger than n are skipped",
            "estimate": "end_of_training",
            "relative_error": "|estimate - truth| / |truth|",
            "median": "mean of the two middle values for an even count",
            "ragged_tail": "dropped",
            "adam": {"beta1": 0.9, "beta2": 0.999, "delta": 1e-8, "lr": cfg.lr},
            "epochs": cfg.epochs,
            "slope_fit": "ordinary least squares on (log2 n, log2 median relative error)",
        },
    })
}

/// Writes `sweep.csv`, `sweep.svg` and `summary.json` into the output directory.
pub fn write_outputs(cfg: &SweepConfig, outcome: &SweepOutcome) -> Result<Vec<PathBuf>, CliError> {
    let csv = cfg.out_dir.join("sweep.csv");
    let svg = cfg.out_dir.join("sweep.svg");
    let summary = cfg.out_dir.join("summary.json");
    write_file(&csv, render_csv(&outcome.records).as_bytes())?;
    write_file(&svg, render_svg(cfg, outcome).as_bytes())?;
    let mut body = serde_json::to_string_pretty(&summary_json(cfg, outcome)).expect("summary serializes");
    body.push('\n');
    write_file(&summary, body.as_bytes())?;
    Ok(vec![csv, svg, summary])
}
