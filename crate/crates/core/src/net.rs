//! Shallow ReLU potential
//! `f(x) = Σ_h β_h · max(w_h·x + b_h, 0) + w₀·x + b₀`
//! and the exact gradient of the minibatch semi-dual loss.

use serde::{Deserialize, Serialize};

use crate::numerics::{half_sqdist, logsumexp, RealMatrix, SeededRng};
use crate::{domain, shape, Result};

/// Network parameters. `w` is the `k × d` hidden weight matrix in row-major order.
///
/// Serializes as a flat JSON object with keys `k, d, W, b, beta, w0, b0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowReluNet {
    pub k: usize,
    pub d: usize,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub w0: Vec<f64>,
    pub b0: f64,
}

/// Gradient with the same layout as [`ShallowReluNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub k: usize,
    pub d: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub beta: Vec<f64>,
    pub w0: Vec<f64>,
    pub b0: f64,
}

/// Uniform access to the five parameter blocks (`W, b, beta, w0, b0`) in a fixed order.
pub trait ParamBlocks {
    fn blocks(&self) -> [&[f64]; 5];
    fn blocks_mut(&mut self) -> [&mut [f64]; 5];

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

macro_rules! impl_blocks {
    ($t:ty) => {
        impl ParamBlocks for $t {
            fn blocks(&self) -> [&[f64]; 5] {
                [
                    &self.w,
                    &self.b,
                    &self.beta,
                    &self.w0,
                    std::slice::from_ref(&self.b0),
                ]
            }

            fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
                [
                    &mut self.w,
                    &mut self.b,
                    &mut self.beta,
                    &mut self.w0,
                    std::slice::from_mut(&mut self.b0),
                ]
            }
        }
    };
}

impl_blocks!(ShallowReluNet);
impl_blocks!(NetGradient);

impl NetGradient {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            w: vec![0.0; k * d],
            b: vec![0.0; k],
            beta: vec![0.0; k],
            w0: vec![0.0; d],
            b0: 0.0,
        }
    }

    pub fn same_shape<B: ParamBlocks>(&self, other: &B) -> bool {
        self.blocks()
            .iter()
            .zip(other.blocks().iter())
            .all(|(a, b)| a.len() == b.len())
    }
}

impl ShallowReluNet {
    /// All-zero network with `k` hidden units.
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            w: vec![0.0; k * d],
            b: vec![0.0; k],
            beta: vec![0.0; k],
            w0: vec![0.0; d],
            b0: 0.0,
        }
    }

    /// Checks block lengths against `(k, d)` and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k, self.d);
        let lens = [
            ("W", self.w.len(), k * d),
            ("b", self.b.len(), k),
            ("beta", self.beta.len(), k),
            ("w0", self.w0.len(), d),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(shape(format!("{name} has {got} entries, expected {want} for k={k}, d={d}")));
            }
        }
        if self.blocks().iter().any(|b| b.iter().any(|x| !x.is_finite())) {
            return Err(domain("network parameters must be finite"));
        }
        Ok(())
    }

    #[inline]
    fn hidden_row(&self, h: usize) -> &[f64] {
        &self.w[h * self.d..(h + 1) * self.d]
    }

    /// `w_h · x + b_h`.
    #[inline]
    fn preactivation(&self, h: usize, x: &[f64]) -> f64 {
        let mut z = self.b[h];
        for (wv, xv) in self.hidden_row(h).iter().zip(x) {
            z += wv * xv;
        }
        z
    }

    /// Evaluates the network on one point; `x.len()` must equal `d`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let mut out = 0.0;
        for h in 0..self.k {
            out += self.beta[h] * relu(self.preactivation(h, x));
        }
        for (wv, xv) in self.w0.iter().zip(x) {
            out += wv * xv;
        }
        out + self.b0
    }

    /// Evaluates the network on every row of `x`.
    pub fn forward(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.d {
            return Err(shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.d
            )));
        }
        Ok(x.row_iter().map(|row| self.eval(row)).collect())
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Draws `W, b ~ U(−1/√d, 1/√d)` and `beta ~ U(−1/k, 1/k)`; `w0` and `b0` start at zero.
pub fn init(k: usize, d: usize, rng: &mut SeededRng) -> ShallowReluNet {
    let mut net = ShallowReluNet::zeros(k, d);
    let hidden = 1.0 / (d.max(1) as f64).sqrt();
    for x in net.w.iter_mut() {
        *x = rng.uniform(-hidden, hidden);
    }
    for x in net.b.iter_mut() {
        *x = rng.uniform(-hidden, hidden);
    }
    if k > 0 {
        let out = 1.0 / k as f64;
        for x in net.beta.iter_mut() {
            *x = rng.uniform(-out, out);
        }
    }
    net
}

/// Negative minibatch semi-dual objective and its exact parameter gradient.
///
/// With `a_ij = (f(X_i) − ½‖X_i − Y_j‖²)/ε` and `p_ij = softmax_i(a_ij)`,
/// the objective's sensitivity to `f(X_i)` is `1/nb − (1/mb) Σ_j p_ij`.
/// It is chained through the network with ReLU subgradient 0 at the kink.
pub fn loss_and_grad(
    net: &ShallowReluNet,
    xb: &RealMatrix,
    yb: &RealMatrix,
    eps: f64,
) -> Result<(f64, NetGradient)> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    let (nb, mb) = (xb.rows(), yb.rows());
    if nb == 0 || mb == 0 {
        return Err(domain("minibatches must be nonempty"));
    }
    if xb.cols() != net.d || yb.cols() != net.d {
        return Err(shape(format!(
            "batches have {} and {} columns, network expects {}",
            xb.cols(),
            yb.cols(),
            net.d
        )));
    }
    let (k, d) = (net.k, net.d);

    let mut pre = vec![0.0; nb * k];
    let mut f = Vec::with_capacity(nb);
    for (i, x) in xb.row_iter().enumerate() {
        for h in 0..k {
            pre[i * k + h] = net.preactivation(h, x);
        }
        f.push(net.eval(x));
    }

    let inv_nb = 1.0 / nb as f64;
    let inv_mb = 1.0 / mb as f64;
    let log_nb = (nb as f64).ln();
    let mut col_mass = vec![0.0; nb];
    let mut logits = vec![0.0; nb];
    let mut inner = 0.0;
    for y in yb.row_iter() {
        for (i, x) in xb.row_iter().enumerate() {
            logits[i] = (f[i] - half_sqdist(x, y)) / eps;
        }
        let lse = logsumexp(&logits)?;
        inner += lse - log_nb;
        for (m, a) in col_mass.iter_mut().zip(&logits) {
            *m += (a - lse).exp();
        }
    }
    let mut outer = 0.0;
    for fi in &f {
        outer += fi;
    }
    let objective = outer * inv_nb - eps * inv_mb * inner;

    let mut grad = NetGradient::zeros(k, d);
    for (i, x) in xb.row_iter().enumerate() {
        // d(loss)/d f(X_i) = −(1/nb − (1/mb) Σ_j p_ij)
        let g = -(inv_nb - inv_mb * col_mass[i]);
        if g == 0.0 {
            continue;
        }
        for h in 0..k {
            let z = pre[i * k + h];
            if z > 0.0 {
                grad.beta[h] += g * z;
                let gb = g * net.beta[h];
                grad.b[h] += gb;
                for (gw, xv) in grad.w[h * d..(h + 1) * d].iter_mut().zip(x) {
                    *gw += gb * xv;
                }
            }
        }
        for (gw, xv) in grad.w0.iter_mut().zip(x) {
            *gw += g * xv;
        }
        grad.b0 += g;
    }
    Ok((-objective, grad))
}

/// Projects onto the bounded class: `‖w_h‖₁ ≤ 1`, `|b_h| ≤ 1`,
/// `|β_h| ≤ 2a/k`, `|b₀| ≤ a`, `‖w₀‖₁ ≤ a`.
pub fn project(net: &ShallowReluNet, a: f64) -> Result<ShallowReluNet> {
    if !(a >= 0.0) {
        return Err(domain(format!("projection radius must be nonnegative, got {a}")));
    }
    let mut out = net.clone();
    let d = out.d;
    for h in 0..out.k {
        shrink_l1(&mut out.w[h * d..(h + 1) * d], 1.0);
    }
    for b in out.b.iter_mut() {
        *b = b.clamp(-1.0, 1.0);
    }
    if out.k > 0 {
        let bound = 2.0 * a / out.k as f64;
        for beta in out.beta.iter_mut() {
            *beta = beta.clamp(-bound, bound);
        }
    }
    out.b0 = out.b0.clamp(-a, a);
    shrink_l1(&mut out.w0, a);
    Ok(out)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Rescales `v` so that `‖v‖₁ ≤ bound`, exactly (rounding included).
fn shrink_l1(v: &mut [f64], bound: f64) {
    let norm = l1(v);
    if norm <= bound {
        return;
    }
    let scale = bound / norm;
    v.iter_mut().for_each(|x| *x *= scale);
    while l1(v) > bound {
        v.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
    }
}
