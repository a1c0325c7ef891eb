//! Log-domain Sinkhorn iterations.
//!
//! Potentials are updated by alternating (c,ε)-transforms,
//!
//! ```text
//! ψ_j ← −ε · logsumexp_i(log w_i + (φ_i − c_ij)/ε)
//! φ_i ← −ε · logsumexp_j(log v_j + (ψ_j − c_ij)/ε)
//! ```
//!
//! After each ψ update the plan `π_ij = w_i v_j exp((φ_i + ψ_j − c_ij)/ε)`
//! has exact column sums, and its row sums are `w_i exp((φ_i − φ'_i)/ε)`
//! where `φ'` is the next φ update. The loop stops as soon as
//! `max_i |exp((φ_i − φ'_i)/ε) − 1|` drops below `tol`, keeping the pair
//! `(φ, ψ = φ^{c,ε})`. This is the Schrödinger-system residual; the
//! absolute marginal error of row `i` is `w_i` times it.

use crate::numerics::RealMatrix;
use crate::transport::{
    c_transform_rows, column_log_partition, DiscretePlan, EotInstance, TransportProblem,
};
use crate::{domain, shape, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Converged potentials and cost values, without the plan matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub primal_cost: f64,
    pub dual_cost: f64,
    pub iterations: usize,
    pub final_residual: f64,
}

/// Converged potentials together with the materialized optimal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornSolution {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub plan: DiscretePlan,
    pub primal_cost: f64,
    pub dual_cost: f64,
    pub iterations: usize,
    pub final_residual: f64,
}

impl SinkhornSolution {
    /// The EOT cost. Primal and dual agree to within the residual at convergence.
    pub fn cost(&self) -> f64 {
        self.dual_cost
    }
}

impl SinkhornPotentials {
    pub fn cost(&self) -> f64 {
        self.dual_cost
    }
}

fn check_args(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(domain(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(domain("max_iter must be at least 1"));
    }
    Ok(())
}

/// Runs Sinkhorn on any [`TransportProblem`] without materializing the plan.
pub fn solve_potentials<P: TransportProblem + ?Sized>(
    p: &P,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPotentials> {
    check_args(tol, max_iter)?;
    let eps = p.eps();
    let mut phi = vec![0.0; p.n()];
    let mut last_residual = f64::INFINITY;
    for it in 1..=max_iter {
        let lse = column_log_partition(&phi, p)?;
        let psi: Vec<f64> = lse.iter().map(|l| -eps * l).collect();
        let next = c_transform_rows(&psi, p)?;

        let row_residual = phi
            .iter()
            .zip(&next)
            .fold(0.0, |acc, (a, b)| f64::max(acc, (((a - b) / eps).exp() - 1.0).abs()));
        last_residual = row_residual;
        if row_residual <= tol {
            let col_residual = psi
                .iter()
                .zip(&lse)
                .fold(0.0, |acc, (s, l)| f64::max(acc, ((s / eps + l).exp() - 1.0).abs()));
            return Ok(finish(p, phi, psi, it, row_residual.max(col_residual)));
        }
        phi = next;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}

fn finish<P: TransportProblem + ?Sized>(
    p: &P,
    mut phi: Vec<f64>,
    mut psi: Vec<f64>,
    iterations: usize,
    final_residual: f64,
) -> SinkhornPotentials {
    let w = p.mu().weights();
    let v = p.nu().weights();
    // split the total evenly: Σ w φ = Σ v ψ
    let shift = (dot(v, &psi) - dot(w, &phi)) / 2.0;
    phi.iter_mut().for_each(|x| *x += shift);
    psi.iter_mut().for_each(|x| *x -= shift);

    let dual_cost = dot(w, &phi) + dot(v, &psi);
    let primal_cost = streaming_primal(p, &phi, &psi);
    sup_bound_diagnostic(p, &phi);
    SinkhornPotentials {
        phi,
        psi,
        primal_cost,
        dual_cost,
        iterations,
        final_residual,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
fn plan_entry(log_w: f64, log_v: f64, phi: f64, psi: f64, cost: f64, eps: f64) -> f64 {
    (log_w + log_v + (phi + psi - cost) / eps).exp()
}

#[inline]
fn primal_term(pi: f64, cost: f64, w: f64, v: f64, eps: f64) -> f64 {
    if pi == 0.0 {
        return 0.0;
    }
    pi * cost + eps * pi * (pi / (w * v)).ln()
}

fn streaming_primal<P: TransportProblem + ?Sized>(p: &P, phi: &[f64], psi: &[f64]) -> f64 {
    let eps = p.eps();
    let (w, lw) = (p.mu().weights(), p.mu().log_weights());
    let (v, lv) = (p.nu().weights(), p.nu().log_weights());
    let mut acc = 0.0;
    for i in 0..p.n() {
        for j in 0..p.m() {
            let c = p.cost(i, j);
            let pi = plan_entry(lw[i], lv[j], phi[i], psi[j], c, eps);
            acc += primal_term(pi, c, w[i], v[j], eps);
        }
    }
    acc
}

/// Flags potentials that exceed `2d + 1` in sup norm when both supports
/// sit inside `[-1, 1]^d`. Returns whether the bound was exceeded.
pub fn sup_bound_diagnostic<P: TransportProblem + ?Sized>(p: &P, phi: &[f64]) -> bool {
    let in_cube = |m: &RealMatrix| m.data().iter().all(|x| x.abs() <= 1.0);
    if !(in_cube(p.mu().points()) && in_cube(p.nu().points())) {
        return false;
    }
    let d = p.mu().dim() as f64;
    let sup = phi.iter().fold(0.0, |m, x| f64::max(m, x.abs()));
    let exceeded = sup > 2.0 * d + 1.0;
    if exceeded {
        log::warn!("potential sup norm {sup:.4} exceeds 2d + 1 = {}", 2.0 * d + 1.0);
    }
    exceeded
}

/// Solves a dense instance and materializes the optimal plan.
pub fn solve(inst: &EotInstance, tol: f64, max_iter: usize) -> Result<SinkhornSolution> {
    let pot = solve_potentials(inst, tol, max_iter)?;
    let plan = plan_from_potentials(&pot.phi, &pot.psi, inst)?;
    let primal_cost = primal_cost(&plan, inst)?;
    Ok(SinkhornSolution {
        phi: pot.phi,
        psi: pot.psi,
        plan,
        primal_cost,
        dual_cost: pot.dual_cost,
        iterations: pot.iterations,
        final_residual: pot.final_residual,
    })
}

/// `π_ij = w_i v_j exp((φ_i + ψ_j − c_ij)/ε)`.
pub fn plan_from_potentials(phi: &[f64], psi: &[f64], inst: &EotInstance) -> Result<DiscretePlan> {
    let (n, m, eps) = (inst.n(), inst.m(), inst.eps());
    if phi.len() != n || psi.len() != m {
        return Err(shape(format!(
            "potentials of length {} and {} for a {n}x{m} instance",
            phi.len(),
            psi.len()
        )));
    }
    let (lw, lv) = (inst.mu().log_weights(), inst.nu().log_weights());
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            data.push(plan_entry(lw[i], lv[j], phi[i], psi[j], inst.cost(i, j), eps));
        }
    }
    DiscretePlan::new(
        RealMatrix::new(n, m, data)?,
        inst.mu().points().clone(),
        inst.nu().points().clone(),
    )
}

const MARGINAL_TOL: f64 = 1e-6;

/// Regularized transport cost of a coupling:
/// `Σ π_ij c_ij + ε Σ π_ij log(π_ij / (w_i v_j))`.
pub fn primal_cost(plan: &DiscretePlan, inst: &EotInstance) -> Result<f64> {
    let pm = plan.matrix();
    if pm.rows() != inst.n() || pm.cols() != inst.m() {
        return Err(shape(format!(
            "{}x{} plan for a {}x{} instance",
            pm.rows(),
            pm.cols(),
            inst.n(),
            inst.m()
        )));
    }
    let (w, v) = (inst.mu().weights(), inst.nu().weights());
    let bad_rows = plan.row_sums().iter().zip(w).any(|(r, wi)| (r - wi).abs() > MARGINAL_TOL);
    let bad_cols = plan.col_sums().iter().zip(v).any(|(c, vj)| (c - vj).abs() > MARGINAL_TOL);
    if bad_rows || bad_cols {
        return Err(domain("plan marginals do not match the instance"));
    }
    let eps = inst.eps();
    let mut acc = 0.0;
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            let pi = pm.get(i, j);
            if pi > 0.0 && (w[i] == 0.0 || v[j] == 0.0) {
                return Err(domain("plan puts mass outside the product support"));
            }
            acc += primal_term(pi, inst.cost(i, j), w[i], v[j], eps);
        }
    }
    Ok(acc)
}
