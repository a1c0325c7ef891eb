#![allow(dead_code)]

use neural_eot::numerics::{DrawKind, RealMatrix, SeededRng};
use neural_eot::transport::{EmpiricalMeasure, EotInstance};

pub const EPS_GRID: [f64; 3] = [0.1, 0.5, 2.0];

pub fn uniform(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> RealMatrix {
    let data = rng.draw(DrawKind::Uniform { lo, hi }, rows * cols).unwrap();
    RealMatrix::new(rows, cols, data).unwrap()
}

pub fn vector(rng: &mut SeededRng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    rng.draw(DrawKind::Uniform { lo, hi }, len).unwrap()
}

/// Random positive weights summing to one.
pub fn weights(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    let raw = vector(rng, len, 0.1, 1.0);
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let drift = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    w
}

/// Random instance with up to 16 atoms per side in up to 3 dimensions,
/// uniform or random weights, supports in [−1, 1]^d.
pub fn random_instance(rng: &mut SeededRng, eps: f64) -> EotInstance {
    let n = 1 + (rng.uniform(0.0, 16.0) as usize);
    let m = 1 + (rng.uniform(0.0, 16.0) as usize);
    let d = 1 + (rng.uniform(0.0, 3.0) as usize);
    let x = uniform(rng, n, d, -1.0, 1.0);
    let y = uniform(rng, m, d, -1.0, 1.0);
    if rng.uniform(0.0, 1.0) < 0.5 {
        EotInstance::from_samples(x, y, eps).unwrap()
    } else {
        let (wx, wy) = (weights(rng, n), weights(rng, m));
        EotInstance::new(
            EmpiricalMeasure::new(x, wx).unwrap(),
            EmpiricalMeasure::new(y, wy).unwrap(),
            eps,
        )
        .unwrap()
    }
}

/// Direct evaluation of Σ π c + ε Σ π ln(π / (w v)) from plan entries.
pub fn entropic_cost(plan: &[Vec<f64>], cost: &[Vec<f64>], w: &[f64], v: &[f64], eps: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        for j in 0..v.len() {
            let p = plan[i][j];
            if p > 0.0 {
                total += p * cost[i][j] + eps * p * (p / (w[i] * v[j])).ln();
            }
        }
    }
    total
}

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}
