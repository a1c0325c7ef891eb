//! Minibatch training of the neural potential.
//!
//! Each epoch shuffles the two sample sets independently, cuts both into
//! batches of `cfg.batch` (a ragged tail is dropped), pairs the b-th X batch
//! with the b-th Y batch and takes one Adam step per pair. The reported
//! estimate is the full-sample semi-dual objective of the final network.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::net::{init, loss_and_grad, project, NetGradient, ShallowReluNet};
use crate::numerics::{half_sqdist, logsumexp, RealMatrix, SeededRng};
use crate::sinkhorn::SinkhornSolution;
use crate::transport::{
    kl_discrete, neural_plan, semidual_objective, DiscretePlan, EotInstance, PointInstance,
};
use crate::{domain, shape, Result};

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;

/// Which X sample feeds the inner log-partition of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerPartition {
    /// The step's own X batch serves both the outer mean and the inner sum.
    #[default]
    Batch,
    /// The inner sum runs over the whole X sample; only the outer mean is batched.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eps: f64,
    pub k: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub project_a: Option<f64>,
    #[serde(default)]
    pub inner: InnerPartition,
}

impl TrainConfig {
    /// Defaults: 20 epochs, learning rate 1e-3, batch 32, seed 0, unconstrained parameters.
    pub fn new(eps: f64, k: usize) -> Self {
        Self {
            eps,
            k,
            epochs: 20,
            lr: 1e-3,
            batch: 32,
            seed: 0,
            project_a: None,
            inner: InnerPartition::Batch,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(domain(format!("eps must be positive, got {}", self.eps)));
        }
        if self.epochs == 0 {
            return Err(domain("epochs must be at least 1"));
        }
        if self.batch == 0 || self.batch > n {
            return Err(domain(format!(
                "batch must lie in [1, {n}], got {}",
                self.batch
            )));
        }
        if let Some(a) = self.project_a {
            if !(a >= 0.0) {
                return Err(domain(format!("projection radius must be nonnegative, got {a}")));
            }
        }
        self.adam().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub net: ShallowReluNet,
    /// Full-sample semi-dual objective of `net`.
    pub estimate: f64,
    /// Full-sample objective after each epoch; the last entry equals `estimate`.
    pub objective_curve: Vec<f64>,
    /// Seconds spent in [`fit`]. Not covered by the determinism guarantee.
    pub wall_time: f64,
}

/// Semi-dual objective of `net` on the full samples, costs evaluated on the fly.
pub fn full_objective(net: &ShallowReluNet, problem: &PointInstance) -> Result<f64> {
    use crate::transport::TransportProblem;
    let f = net.forward(problem.mu().points())?;
    semidual_objective(&f, problem)
}

/// Trains a network on `(x, y)` and returns the final estimate.
pub fn fit(x: &RealMatrix, y: &RealMatrix, cfg: &TrainConfig) -> Result<FitResult> {
    let start = Instant::now();
    if x.cols() != y.cols() {
        return Err(shape(format!(
            "samples have dimensions {} and {}",
            x.cols(),
            y.cols()
        )));
    }
    let (nx, ny) = (x.rows(), y.rows());
    if nx == 0 || ny == 0 {
        return Err(domain("sample sets must be nonempty"));
    }
    cfg.validate(nx.min(ny))?;
    let problem = PointInstance::from_samples(x.clone(), y.clone(), cfg.eps)?;

    let mut net = init(cfg.k, x.cols(), &mut SeededRng::new(cfg.seed, STREAM_INIT));
    if let Some(a) = cfg.project_a {
        net = project(&net, a)?;
    }
    let mut adam = AdamState::new(&net, cfg.adam())?;
    let mut shuffler = SeededRng::new(cfg.seed, STREAM_SHUFFLE);
    let mut perm_x: Vec<usize> = (0..nx).collect();
    let mut perm_y: Vec<usize> = (0..ny).collect();
    let steps = (nx / cfg.batch).min(ny / cfg.batch);

    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        perm_x.shuffle(&mut shuffler);
        perm_y.shuffle(&mut shuffler);
        for s in 0..steps {
            let window = s * cfg.batch..(s + 1) * cfg.batch;
            let xb = x.select_rows(&perm_x[window.clone()]);
            let yb = y.select_rows(&perm_y[window]);
            let (_, grad) = match cfg.inner {
                InnerPartition::Batch => loss_and_grad(&net, &xb, &yb, cfg.eps)?,
                InnerPartition::Full => loss_and_grad_full_inner(&net, &xb, x, &yb, cfg.eps)?,
            };
            adam.step(&mut net, &grad)?;
            if let Some(a) = cfg.project_a {
                net = project(&net, a)?;
            }
        }
        curve.push(full_objective(&net, &problem)?);
    }

    let estimate = *curve.last().expect("at least one epoch");
    Ok(FitResult {
        net,
        estimate,
        objective_curve: curve,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Loss and gradient when the inner log-partition runs over all of `x_all`
/// while the outer mean uses the batch `xb`.
fn loss_and_grad_full_inner(
    net: &ShallowReluNet,
    xb: &RealMatrix,
    x_all: &RealMatrix,
    yb: &RealMatrix,
    eps: f64,
) -> Result<(f64, NetGradient)> {
    let (nb, n, mb) = (xb.rows(), x_all.rows(), yb.rows());
    let f_all = net.forward(x_all)?;
    let mut logits = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let mut inner = 0.0;
    for y in yb.row_iter() {
        for (i, x) in x_all.row_iter().enumerate() {
            logits[i] = (f_all[i] - half_sqdist(x, y)) / eps;
        }
        let lse = logsumexp(&logits)?;
        inner += lse - (n as f64).ln();
        for (m, a) in mass.iter_mut().zip(&logits) {
            *m += (a - lse).exp();
        }
    }
    let f_b = net.forward(xb)?;
    let outer: f64 = f_b.iter().sum::<f64>() / nb as f64;
    let objective = outer - eps * inner / mb as f64;

    let mut grad = NetGradient::zeros(net.k, net.d);
    accumulate(net, xb, |_| -1.0 / nb as f64, &mut grad);
    accumulate(net, x_all, |i| mass[i] / mb as f64, &mut grad);
    Ok((-objective, grad))
}

fn accumulate(net: &ShallowReluNet, x: &RealMatrix, weight: impl Fn(usize) -> f64, grad: &mut NetGradient) {
    let (k, d) = (net.k, net.d);
    for (i, row) in x.row_iter().enumerate() {
        let g = weight(i);
        for h in 0..k {
            let mut z = net.b[h];
            for (wv, xv) in net.w[h * d..(h + 1) * d].iter().zip(row) {
                z += wv * xv;
            }
            if z > 0.0 {
                grad.beta[h] += g * z;
                let gb = g * net.beta[h];
                grad.b[h] += gb;
                for (gw, xv) in grad.w[h * d..(h + 1) * d].iter_mut().zip(row) {
                    *gw += gb * xv;
                }
            }
        }
        for (gw, xv) in grad.w0.iter_mut().zip(row) {
            *gw += g * xv;
        }
        grad.b0 += g;
    }
}

/// Neural plan of the trained potential on `(x, y)` with uniform weights.
pub fn evaluate_plan(fit: &FitResult, x: &RealMatrix, y: &RealMatrix, eps: f64) -> Result<DiscretePlan> {
    let inst = EotInstance::from_samples(x.clone(), y.clone(), eps)?;
    let f = fit.net.forward(x)?;
    neural_plan(&f, &inst)
}

/// `KL(π* ‖ π_f̂)` between the Sinkhorn plan and the trained network's plan.
pub fn plan_kl_vs_truth(fit: &FitResult, inst: &EotInstance, star: &SinkhornSolution) -> Result<f64> {
    use crate::transport::TransportProblem;
    let f = fit.net.forward(inst.mu().points())?;
    kl_discrete(&star.plan, &neural_plan(&f, inst)?)
}
