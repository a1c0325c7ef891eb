//! Command-line surface and the four commands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use neural_eot::estimator::{fit, TrainConfig};
use neural_eot::numerics::{RealMatrix, SeededRng};
use neural_eot::sinkhorn::{solve, solve_potentials, DEFAULT_MAX_ITER, DEFAULT_TOL};
use neural_eot::synthetic::{
    mean_and_cov, paper_example_marginals, paper_example_plan, sample_gaussian, sample_neural_plan,
};
use neural_eot::transport::{EotInstance, PointInstance};

use crate::data::{encode_csv, read_points, write_file};
use crate::error::{usage, CliError};
use crate::sweep::{run_sweep, write_outputs, Distribution, RunOptions, SweepConfig};

pub const PLAN_CSV_VERSION_LINE: &str = "# neot plan pairs v1";
const STREAM_PLAN_X: u64 = 20;
const STREAM_PLAN_Y: u64 = 21;
const STREAM_PLAN_DRAW: u64 = 22;

#[derive(Debug, Parser)]
#[command(name = "neot", version, about = "Neural estimation of entropic optimal transport")]
pub struct Cli {
    /// Seed for every random choice a command makes (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Report all wall times as 0 so that outputs are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network on two sample files and print the estimate.
    Estimate(EstimateArgs),
    /// Solve the empirical problem between two sample files with Sinkhorn.
    Sinkhorn(SinkhornArgs),
    /// Sweep the estimation error over sample sizes.
    Sweep(SweepArgs),
    /// Learn and sample the neural plan of the 1-D Gaussian example.
    Plan(PlanArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Defaults to 32, or the smaller sample size if that is below 32.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub save_net: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SinkhornArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Write the dense plan as CSV; needs memory for the full n×m matrix.
    #[arg(long)]
    pub save_plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON file holding a flat sweep configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub distribution: Option<Distribution>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub k_per_dim: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub batch_candidates: Option<Vec<usize>>,
    #[arg(long)]
    pub truth_n: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Use the Gaussian example N(0.5, 1) to N(0.25, 0.25) at eps = 0.5.
    #[arg(long)]
    pub paper_example: bool,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

impl Cli {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Runs a parsed command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if cli.threads == 0 {
        return Err(usage("threads must be at least 1"));
    }
    let value = match &cli.command {
        Command::Estimate(a) => estimate(cli, a)?,
        Command::Sinkhorn(a) => sinkhorn(cli, a)?,
        Command::Sweep(a) => sweep(cli, a)?,
        Command::Plan(a) => plan(cli, a)?,
    };
    Ok(pretty(&value))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(usage("eps must be positive"))
    }
}

fn check_training(epochs: usize, lr: f64) -> Result<(), CliError> {
    if epochs == 0 {
        return Err(usage("epochs must be at least 1"));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(usage("lr must be positive"));
    }
    Ok(())
}

fn load_pair(x: &Path, y: &Path) -> Result<(RealMatrix, RealMatrix), CliError> {
    let (x_pts, y_pts) = (read_points(x)?, read_points(y)?);
    if x_pts.cols() != y_pts.cols() {
        return Err(CliError::Input(format!(
            "{} holds {}-dimensional points but {} holds {}-dimensional points",
            x.display(),
            x_pts.cols(),
            y.display(),
            y_pts.cols()
        )));
    }
    Ok((x_pts, y_pts))
}

fn save_json(cli: &Cli, name: &str, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = &cli.out_dir {
        write_file(&dir.join(name), pretty(value).as_bytes())?;
    }
    Ok(())
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<Value, CliError> {
    check_eps(a.eps)?;
    check_training(a.epochs, a.lr)?;
    if a.batch == Some(0) {
        return Err(usage("batch must be at least 1"));
    }
    let (x, y) = load_pair(&a.x, &a.y)?;
    let smaller = x.rows().min(y.rows());
    let batch = a.batch.unwrap_or(32.min(smaller));
    if batch > smaller {
        return Err(usage(format!("batch {batch} exceeds the smaller sample size {smaller}")));
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch,
        seed: cli.seed(),
        ..TrainConfig::new(a.eps, a.k)
    };
    let out = fit(&x, &y, &cfg)?;
    if let Some(path) = &a.save_net {
        let body = serde_json::to_vec_pretty(&out.net).expect("network serializes");
        write_file(path, &body)?;
    }
    let value = json!({
        "estimate": out.estimate,
        "epochs": a.epochs,
        "objective_curve": out.objective_curve,
        "wall_time": if cli.no_timing { 0.0 } else { out.wall_time },
        "metadata": {
            "estimate_kind": "end_of_training",
            "eps": a.eps,
            "k": a.k,
            "lr": a.lr,
            "batch": batch,
            "seed": cli.seed(),
            "n": x.rows(),
            "m": y.rows(),
            "dim": x.cols(),
        },
    });
    save_json(cli, "estimate.json", &value)?;
    Ok(value)
}

fn sinkhorn(cli: &Cli, a: &SinkhornArgs) -> Result<Value, CliError> {
    check_eps(a.eps)?;
    if !(a.tol > 0.0) {
        return Err(usage("tol must be positive"));
    }
    if a.max_iter == 0 {
        return Err(usage("max-iter must be at least 1"));
    }
    let (x, y) = load_pair(&a.x, &a.y)?;
    let (cost, iterations, residual, primal, dual) = match &a.save_plan {
        Some(path) => {
            let inst = EotInstance::from_samples(x, y, a.eps)?;
            let s = solve(&inst, a.tol, a.max_iter)?;
            write_file(path, encode_csv(s.plan.matrix()).as_bytes())?;
            (s.cost(), s.iterations, s.final_residual, s.primal_cost, s.dual_cost)
        }
        None => {
            let p = PointInstance::from_samples(x, y, a.eps)?;
            let s = solve_potentials(&p, a.tol, a.max_iter)?;
            (s.cost(), s.iterations, s.final_residual, s.primal_cost, s.dual_cost)
        }
    };
    let value = json!({
        "cost": cost,
        "iterations": iterations,
        "residual": residual,
        "dual_gap": (primal - dual).abs(),
        "primal_cost": primal,
        "dual_cost": dual,
    });
    save_json(cli, "sinkhorn.json", &value)?;
    Ok(value)
}

fn sweep_config(cli: &Cli, a: &SweepArgs) -> Result<SweepConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| usage(format!("{}: invalid sweep configuration: {e}", path.display())))?
        }
        None => SweepConfig::default(),
    };
    if let Some(v) = a.distribution {
        cfg.distribution = v;
    }
    if let Some(v) = &a.dims {
        cfg.dims = v.clone();
    }
    if let Some(v) = &a.k_per_dim {
        cfg.k_per_dim = v.clone();
    }
    if let Some(v) = &a.ns {
        cfg.ns = v.clone();
    }
    if let Some(v) = a.eps {
        cfg.eps = v;
    }
    if let Some(v) = a.runs {
        cfg.runs = v;
    }
    if let Some(v) = &a.batch_candidates {
        cfg.batch_candidates = v.clone();
    }
    if let Some(v) = a.truth_n {
        cfg.truth_n = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<Value, CliError> {
    let cfg = sweep_config(cli, a)?;
    let outcome = run_sweep(
        &cfg,
        RunOptions {
            threads: cli.threads,
            timing: !cli.no_timing,
        },
    )?;
    let files = write_outputs(&cfg, &outcome)?;
    let failed = outcome.failed_cells();
    if !failed.is_empty() {
        let cells: Vec<String> = failed.iter().map(|c| format!("(dim {}, n {})", c.dim, c.n)).collect();
        return Err(CliError::CellFailure(format!(
            "every trial failed in {}; details in {}",
            cells.join(", "),
            files[0].display()
        )));
    }
    Ok(json!({
        "files": files,
        "sinkhorn_solves": outcome.sinkhorn_solves,
        "slopes": outcome.slopes,
    }))
}

fn plan(cli: &Cli, a: &PlanArgs) -> Result<Value, CliError> {
    if !a.paper_example {
        return Err(usage("plan needs --paper-example, the only built-in example"));
    }
    check_training(a.epochs, a.lr)?;
    if a.n == 0 {
        return Err(usage("n must be at least 1"));
    }
    if a.batch == 0 || a.batch > a.n {
        return Err(usage(format!("batch must lie in [1, {}]", a.n)));
    }
    let eps = 0.5;
    let (mu, nu) = paper_example_marginals();
    let x = sample_gaussian(&mu, a.n, &mut SeededRng::new(cli.seed(), STREAM_PLAN_X))?;
    let y = sample_gaussian(&nu, a.n, &mut SeededRng::new(cli.seed(), STREAM_PLAN_Y))?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch: a.batch,
        seed: cli.seed(),
        ..TrainConfig::new(eps, a.k)
    };
    let out = fit(&x, &y, &cfg)?;
    let f = out.net.forward(&x)?;
    let problem = PointInstance::from_samples(x, y, eps)?;
    let pairs = sample_neural_plan(&f, &problem, a.samples, &mut SeededRng::new(cli.seed(), STREAM_PLAN_DRAW))?;

    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut csv = format!("{PLAN_CSV_VERSION_LINE}\nx,y\n");
    csv.push_str(&encode_csv(&pairs));
    write_file(&dir.join("plan_pairs.csv"), csv.as_bytes())?;

    let (mean, cov) = match mean_and_cov(&pairs) {
        Some((m, c)) => (
            json!(m),
            json!([[c.get(0, 0), c.get(0, 1)], [c.get(1, 0), c.get(1, 1)]]),
        ),
        None => (Value::Null, Value::Null),
    };
    let mean = if pairs.rows() == 1 { json!(pairs.row(0)) } else { mean };
    let reference = paper_example_plan();
    let value = json!({
        "empirical_mean": mean,
        "empirical_cov": cov,
        "reference_mean": reference.mean,
        "reference_cov": reference.cov,
        "samples": a.samples,
        "estimate": out.estimate,
        "wall_time": if cli.no_timing { 0.0 } else { out.wall_time },
        "metadata": {
            "estimate_kind": "end_of_training",
            "eps": eps,
            "n": a.n,
            "k": a.k,
            "epochs": a.epochs,
            "lr": a.lr,
            "batch": a.batch,
            "seed": cli.seed(),
        },
    });
    write_file(&dir.join("plan_summary.json"), pretty(&value).as_bytes())?;
    Ok(value)
}
