//! Empirical-measure EOT primitives for the quadratic cost `c(x, y) = ½‖x − y‖²`.
//!
//! All functions are generic over [`TransportProblem`], which supplies the
//! two measures, the regularization `ε` and cost entries. [`EotInstance`]
//! stores the cost matrix; [`PointInstance`] recomputes entries from the
//! points so that large samples never materialize an `n × m` matrix. Both
//! produce bit-identical cost entries, so every kernel gives the same bits
//! on either representation.
//!
//! Exponentials are only ever taken inside [`logsumexp`] or on
//! already-normalized log-plan values.

use crate::numerics::{half_sqdist, half_sqdist_matrix, logsumexp, RealMatrix};
use crate::sinkhorn::SinkhornSolution;
use crate::{domain, shape, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: RealMatrix,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: RealMatrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(domain("empirical measure needs at least one atom"));
        }
        if weights.len() != points.rows() {
            return Err(shape(format!(
                "{} points but {} weights",
                points.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(domain("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(domain(format!("weights sum to {total}, not 1")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
        })
    }

    /// Equal weights `1/n` on every row of `points`.
    pub fn uniform(points: RealMatrix) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(domain("empirical measure needs at least one atom"));
        }
        let w = 1.0 / n as f64;
        Ok(Self {
            points,
            weights: vec![w; n],
            log_weights: vec![w.ln(); n],
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &RealMatrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }
}

/// Source of the two measures, `ε`, and the cost entries.
pub trait TransportProblem {
    fn mu(&self) -> &EmpiricalMeasure;
    fn nu(&self) -> &EmpiricalMeasure;
    fn eps(&self) -> f64;
    fn cost(&self, i: usize, j: usize) -> f64;

    fn n(&self) -> usize {
        self.mu().len()
    }

    fn m(&self) -> usize {
        self.nu().len()
    }
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, eps: f64) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(shape(format!(
            "measures live in different dimensions: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// EOT problem with a stored cost matrix.
#[derive(Debug, Clone)]
pub struct EotInstance {
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    eps: f64,
    cost: RealMatrix,
}

impl EotInstance {
    pub fn new(mu: EmpiricalMeasure, nu: EmpiricalMeasure, eps: f64) -> Result<Self> {
        check_pair(&mu, &nu, eps)?;
        let cost = half_sqdist_matrix(mu.points(), nu.points())?;
        Ok(Self { mu, nu, eps, cost })
    }

    /// Uniform weights on both sample sets.
    pub fn from_samples(x: RealMatrix, y: RealMatrix, eps: f64) -> Result<Self> {
        Self::new(EmpiricalMeasure::uniform(x)?, EmpiricalMeasure::uniform(y)?, eps)
    }

    pub fn cost_matrix(&self) -> &RealMatrix {
        &self.cost
    }

    /// Same measures, different regularization.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        check_pair(&self.mu, &self.nu, eps)?;
        Ok(Self { eps, ..self.clone() })
    }
}

impl TransportProblem for EotInstance {
    fn mu(&self) -> &EmpiricalMeasure {
        &self.mu
    }
    fn nu(&self) -> &EmpiricalMeasure {
        &self.nu
    }
    fn eps(&self) -> f64 {
        self.eps
    }
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost.get(i, j)
    }
}

/// EOT problem that evaluates costs from the points on demand.
#[derive(Debug, Clone)]
pub struct PointInstance {
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    eps: f64,
}

impl PointInstance {
    pub fn new(mu: EmpiricalMeasure, nu: EmpiricalMeasure, eps: f64) -> Result<Self> {
        check_pair(&mu, &nu, eps)?;
        Ok(Self { mu, nu, eps })
    }

    pub fn from_samples(x: RealMatrix, y: RealMatrix, eps: f64) -> Result<Self> {
        Self::new(EmpiricalMeasure::uniform(x)?, EmpiricalMeasure::uniform(y)?, eps)
    }

    /// Materializes the cost matrix.
    pub fn to_dense(&self) -> Result<EotInstance> {
        EotInstance::new(self.mu.clone(), self.nu.clone(), self.eps)
    }
}

impl TransportProblem for PointInstance {
    fn mu(&self) -> &EmpiricalMeasure {
        &self.mu
    }
    fn nu(&self) -> &EmpiricalMeasure {
        &self.nu
    }
    fn eps(&self) -> f64 {
        self.eps
    }
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        half_sqdist(self.mu.points().row(i), self.nu.points().row(j))
    }
}

/// Coupling matrix on `row_support × col_support`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlan {
    matrix: RealMatrix,
    row_support: RealMatrix,
    col_support: RealMatrix,
}

impl DiscretePlan {
    pub fn new(matrix: RealMatrix, row_support: RealMatrix, col_support: RealMatrix) -> Result<Self> {
        if matrix.rows() != row_support.rows() || matrix.cols() != col_support.rows() {
            return Err(shape(format!(
                "{}x{} plan on supports of size {} and {}",
                matrix.rows(),
                matrix.cols(),
                row_support.rows(),
                col_support.rows()
            )));
        }
        if matrix.data().iter().any(|&p| p < 0.0) {
            return Err(domain("plan entries must be nonnegative"));
        }
        Ok(Self {
            matrix,
            row_support,
            col_support,
        })
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn row_support(&self) -> &RealMatrix {
        &self.row_support
    }

    pub fn col_support(&self) -> &RealMatrix {
        &self.col_support
    }

    pub fn total_mass(&self) -> f64 {
        self.matrix.data().iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.matrix.cols()];
        for r in self.matrix.row_iter() {
            for (s, p) in sums.iter_mut().zip(r) {
                *s += p;
            }
        }
        sums
    }
}

fn check_potential(len: usize, expected: usize, what: &str) -> Result<()> {
    if len != expected {
        return Err(shape(format!("{what} has {len} entries, expected {expected}")));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(domain(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Column log-partitions `L_j = logsumexp_i(log w_i + (f_i − c_ij)/ε)`.
pub(crate) fn column_log_partition<P: TransportProblem + ?Sized>(
    f: &[f64],
    p: &P,
) -> Result<Vec<f64>> {
    let (n, m, eps) = (p.n(), p.m(), p.eps());
    let logw = p.mu().log_weights();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = logw[i] + (f[i] - p.cost(i, j)) / eps;
        }
        out.push(logsumexp(&buf)?);
    }
    Ok(out)
}

/// Row log-partitions `logsumexp_j(log v_j + (g_j − c_ij)/ε)`.
pub(crate) fn row_log_partition<P: TransportProblem + ?Sized>(g: &[f64], p: &P) -> Result<Vec<f64>> {
    let (n, m, eps) = (p.n(), p.m(), p.eps());
    let logv = p.nu().log_weights();
    let mut buf = vec![0.0; m];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = logv[j] + (g[j] - p.cost(i, j)) / eps;
        }
        out.push(logsumexp(&buf)?);
    }
    Ok(out)
}

/// The (c,ε)-transform of a potential on the μ atoms, evaluated on the ν atoms:
/// `f^{c,ε}(y_j) = −ε · log Σ_i w_i exp((f_i − c_ij)/ε)`.
pub fn c_transform<P: TransportProblem + ?Sized>(f: &[f64], p: &P) -> Result<Vec<f64>> {
    check_potential(f.len(), p.n(), "potential")?;
    check_finite(f, "potential")?;
    let eps = p.eps();
    Ok(column_log_partition(f, p)?
        .into_iter()
        .map(|l| -eps * l)
        .collect())
}

/// The transform in the other direction: a potential on ν atoms mapped to μ atoms.
pub fn c_transform_rows<P: TransportProblem + ?Sized>(g: &[f64], p: &P) -> Result<Vec<f64>> {
    check_potential(g.len(), p.m(), "potential")?;
    check_finite(g, "potential")?;
    let eps = p.eps();
    Ok(row_log_partition(g, p)?.into_iter().map(|l| -eps * l).collect())
}

/// Empirical semi-dual objective `Σ_i w_i f_i + Σ_j v_j f^{c,ε}_j`.
pub fn semidual_objective<P: TransportProblem + ?Sized>(f: &[f64], p: &P) -> Result<f64> {
    let fc = c_transform(f, p)?;
    let mut outer = 0.0;
    for (w, fi) in p.mu().weights().iter().zip(f) {
        outer += w * fi;
    }
    let mut inner = 0.0;
    for (v, gj) in p.nu().weights().iter().zip(&fc) {
        inner += v * gj;
    }
    Ok(outer + inner)
}

/// Plan induced by a potential:
/// `π_ij = v_j · w_i exp((f_i − c_ij)/ε) / Σ_i' w_i' exp((f_i' − c_i'j)/ε)`.
///
/// The ν-marginal is exact by construction; the μ-marginal is only exact
/// when `f` is an optimal potential.
pub fn neural_plan<P: TransportProblem + ?Sized>(f: &[f64], p: &P) -> Result<DiscretePlan> {
    check_potential(f.len(), p.n(), "potential")?;
    check_finite(f, "potential")?;
    let (n, m, eps) = (p.n(), p.m(), p.eps());
    let logw = p.mu().log_weights();
    let v = p.nu().weights();
    let lse = column_log_partition(f, p)?;
    let mut data = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let log_cond = logw[i] + (f[i] - p.cost(i, j)) / eps - lse[j];
            data[i * m + j] = v[j] * log_cond.exp();
        }
    }
    DiscretePlan::new(
        RealMatrix::new(n, m, data)?,
        p.mu().points().clone(),
        p.nu().points().clone(),
    )
}

/// `Σ p_ij log(p_ij / q_ij)` with `0 · log(0/·) = 0`.
///
/// Both plans are assumed normalized; the sum is not clamped, so rounding
/// can leave a result of order `-1e-16` on equal inputs.
pub fn kl_discrete(p: &DiscretePlan, q: &DiscretePlan) -> Result<f64> {
    let (pm, qm) = (p.matrix(), q.matrix());
    if pm.rows() != qm.rows() || pm.cols() != qm.cols() {
        return Err(shape(format!(
            "plans have shapes {}x{} and {}x{}",
            pm.rows(),
            pm.cols(),
            qm.rows(),
            qm.cols()
        )));
    }
    if p.row_support() != q.row_support() || p.col_support() != q.col_support() {
        return Err(shape("plans live on different supports"));
    }
    let mut acc = 0.0;
    for (idx, (&a, &b)) in pm.data().iter().zip(qm.data()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            let cols = pm.cols();
            return Err(domain(format!(
                "p is not absolutely continuous w.r.t. q at ({}, {})",
                idx / cols,
                idx % cols
            )));
        }
        acc += a * (a / b).ln();
    }
    Ok(acc)
}

/// Max violation of each half of the Schrödinger system,
/// returned as `(row_max_abs, col_max_abs)`.
pub fn schrodinger_residual<P: TransportProblem + ?Sized>(
    phi: &[f64],
    psi: &[f64],
    p: &P,
) -> Result<(f64, f64)> {
    check_potential(phi.len(), p.n(), "phi")?;
    check_potential(psi.len(), p.m(), "psi")?;
    check_finite(phi, "phi")?;
    check_finite(psi, "psi")?;
    let eps = p.eps();
    // Σ_i w_i exp((φ_i + ψ_j − c_ij)/ε) = exp(ψ_j/ε + L_j(φ))
    let col = column_log_partition(phi, p)?
        .iter()
        .zip(psi)
        .fold(0.0, |acc, (l, s)| f64::max(acc, ((s / eps + l).exp() - 1.0).abs()));
    let row = row_log_partition(psi, p)?
        .iter()
        .zip(phi)
        .fold(0.0, |acc, (l, f)| f64::max(acc, ((f / eps + l).exp() - 1.0).abs()));
    Ok((row, col))
}

/// Both sides of `Γ̂(φ*) − Γ̂(f) = ε · KL(π* ‖ π_f)`, as `(lhs, rhs)`.
///
/// The two sides are computed by separate code paths: the left from
/// semi-dual objective values, the right from materialized plans.
pub fn kl_identity_gap(
    f: &[f64],
    inst: &EotInstance,
    star: &SinkhornSolution,
) -> Result<(f64, f64)> {
    let lhs = semidual_objective(&star.phi, inst)? - semidual_objective(f, inst)?;
    let plan_f = neural_plan(f, inst)?;
    let rhs = inst.eps() * kl_discrete(&star.plan, &plan_f)?;
    Ok((lhs, rhs))
}
