//! Synthetic data: uniform cubes, random Gaussian pairs, the 1-D Gaussian
//! reference plan, and sampling index pairs from transport plans.

use rand::Rng;

use crate::numerics::{cholesky, RealMatrix, SeededRng};
use crate::transport::{column_log_partition, DiscretePlan, TransportProblem};
use crate::{domain, shape, Result};

/// `n` i.i.d. points, uniform on `[−1/√d, 1/√d]^d`.
pub fn sample_uniform_cube(d: usize, n: usize, rng: &mut SeededRng) -> Result<RealMatrix> {
    if d == 0 || n == 0 {
        return Err(domain("uniform cube needs d ≥ 1 and n ≥ 1"));
    }
    let half = 1.0 / (d as f64).sqrt();
    let data = (0..n * d).map(|_| rng.uniform(-half, half)).collect();
    RealMatrix::new(n, d, data)
}

/// Mean vector and covariance of a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: RealMatrix,
    chol: RealMatrix,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov: RealMatrix) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(shape(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        let chol = cholesky(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cholesky_factor(&self) -> &RealMatrix {
        &self.chol
    }
}

/// Two independent Gaussians in dimension `d`. Each mean is standard
/// normal and each covariance is `BᵀB + I/(3d)` with `B_ij ~ U(−1/d, 1/d)`.
///
/// The construction guarantees eigenvalues ≥ 1/(3d); no upper bound
/// tighter than `‖B‖_F² + 1/(3d) ≤ 1 + 1/(3d)` is enforced.
pub fn random_gaussian_pair(d: usize, rng: &mut SeededRng) -> Result<(GaussianSpec, GaussianSpec)> {
    if d == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    let first = random_gaussian(d, rng)?;
    let second = random_gaussian(d, rng)?;
    Ok((first, second))
}

fn random_gaussian(d: usize, rng: &mut SeededRng) -> Result<GaussianSpec> {
    let mean: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let bound = 1.0 / d as f64;
    let b = RealMatrix::new(d, d, (0..d * d).map(|_| rng.uniform(-bound, bound)).collect())?;
    let mut cov = b.transpose().matmul(&b)?;
    let shift = 1.0 / (3.0 * d as f64);
    for i in 0..d {
        cov.set(i, i, cov.get(i, i) + shift);
    }
    // BᵀB is symmetric in exact arithmetic; copy the lower triangle up so it is bitwise too
    for i in 0..d {
        for j in 0..i {
            cov.set(j, i, cov.get(i, j));
        }
    }
    GaussianSpec::new(mean, cov)
}

/// `x = mean + L z` with `L = chol(cov)` and `z` standard normal.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, rng: &mut SeededRng) -> Result<RealMatrix> {
    let d = spec.dim();
    let l = spec.cholesky_factor();
    let mut data = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        z.iter_mut().for_each(|v| *v = rng.standard_normal());
        for i in 0..d {
            let mut acc = spec.mean[i];
            for (lv, zv) in l.row(i)[..=i].iter().zip(&z) {
                acc += lv * zv;
            }
            data.push(acc);
        }
    }
    RealMatrix::new(n, d, data)
}

/// Bivariate Gaussian describing a reference coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanReference {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Optimal EOT plan between `N(0.5, 1)` and `N(0.25, 0.25)` at `ε = 0.5`:
/// mean `(0.5, 0.25)` and covariance `[[1, (√5−1)/4], [(√5−1)/4, 0.25]]`.
pub fn paper_example_plan() -> PlanReference {
    let cross = (5f64.sqrt() - 1.0) / 4.0;
    PlanReference {
        mean: [0.5, 0.25],
        cov: [[1.0, cross], [cross, 0.25]],
    }
}

/// The source and target Gaussians of [`paper_example_plan`].
pub fn paper_example_marginals() -> (GaussianSpec, GaussianSpec) {
    let mu = GaussianSpec::new(vec![0.5], RealMatrix::identity(1)).expect("valid 1-D Gaussian");
    let nu = GaussianSpec::new(vec![0.25], RealMatrix::new(1, 1, vec![0.25]).expect("1x1"))
        .expect("valid 1-D Gaussian");
    (mu, nu)
}

const PLAN_MASS_TOL: f64 = 1e-10;

/// First index whose cumulative weight exceeds `u`.
fn pick(cdf: &[f64], u: f64) -> usize {
    let idx = cdf.partition_point(|&c| c <= u);
    idx.min(cdf.len() - 1)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn push_pair(out: &mut Vec<f64>, x: &[f64], y: &[f64]) {
    out.extend_from_slice(x);
    out.extend_from_slice(y);
}

/// Draws `count` i.i.d. index pairs `(i, j)` with probability `plan(i, j)`
/// and emits the rows `(X_i, Y_j)` concatenated.
pub fn sample_from_plan(plan: &DiscretePlan, count: usize, rng: &mut SeededRng) -> Result<RealMatrix> {
    let total = plan.total_mass();
    if (total - 1.0).abs() > PLAN_MASS_TOL {
        return Err(domain(format!("plan mass is {total}, expected 1")));
    }
    let m = plan.matrix().cols();
    let (xs, ys) = (plan.row_support(), plan.col_support());
    let cdf = cumulative(plan.matrix().data().iter().copied());
    let mut out = Vec::with_capacity(count * (xs.cols() + ys.cols()));
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        let flat = pick(&cdf, u);
        push_pair(&mut out, xs.row(flat / m), ys.row(flat % m));
    }
    RealMatrix::new(count, xs.cols() + ys.cols(), out)
}

/// Samples the plan induced by the potential `f` without materializing it:
/// `j` is drawn from the ν weights, then `i` from the column conditional
/// `∝ w_i exp((f_i − c_ij)/ε)`. Same law as [`sample_from_plan`] applied to
/// [`crate::transport::neural_plan`].
pub fn sample_neural_plan<P: TransportProblem + ?Sized>(
    f: &[f64],
    p: &P,
    count: usize,
    rng: &mut SeededRng,
) -> Result<RealMatrix> {
    if f.len() != p.n() {
        return Err(shape(format!("potential has {} entries, expected {}", f.len(), p.n())));
    }
    let (xs, ys) = (p.mu().points(), p.nu().points());
    let width = xs.cols() + ys.cols();
    if count == 0 {
        return RealMatrix::new(0, width, Vec::new());
    }
    let col_cdf = cumulative(p.nu().weights().iter().copied());
    let col_total = *col_cdf.last().expect("nonempty measure");
    let cols: Vec<usize> = (0..count)
        .map(|_| pick(&col_cdf, rng.random::<f64>() * col_total))
        .collect();

    // draws per column, visited in column order
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&s| cols[s]);
    let lse = column_log_partition(f, p)?;
    let (eps, logw) = (p.eps(), p.mu().log_weights());
    let mut rows = vec![0usize; count];
    let mut cdf = vec![0.0; p.n()];
    let mut pos = 0;
    while pos < count {
        let j = cols[order[pos]];
        let mut acc = 0.0;
        for (i, c) in cdf.iter_mut().enumerate() {
            acc += (logw[i] + (f[i] - p.cost(i, j)) / eps - lse[j]).exp();
            *c = acc;
        }
        while pos < count && cols[order[pos]] == j {
            rows[order[pos]] = pick(&cdf, rng.random::<f64>() * acc);
            pos += 1;
        }
    }

    let mut out = Vec::with_capacity(count * width);
    for s in 0..count {
        push_pair(&mut out, xs.row(rows[s]), ys.row(cols[s]));
    }
    RealMatrix::new(count, width, out)
}

/// Sample mean and (n−1)-normalized covariance of the rows of `x`.
pub fn mean_and_cov(x: &RealMatrix) -> Option<(Vec<f64>, RealMatrix)> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return None;
    }
    let mut mean = vec![0.0; d];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = RealMatrix::zeros(d, d);
    for row in x.row_iter() {
        for a in 0..d {
            for b in 0..d {
                let v = cov.get(a, b) + (row[a] - mean[a]) * (row[b] - mean[b]);
                cov.set(a, b, v);
            }
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for a in 0..d {
        for b in 0..d {
            cov.set(a, b, cov.get(a, b) * scale);
        }
    }
    Some((mean, cov))
}
