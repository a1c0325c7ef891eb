//! Adam with bias correction over the parameter blocks of a network.

use serde::{Deserialize, Serialize};

use crate::net::{NetGradient, ParamBlocks, ShallowReluNet};
use crate::{domain, shape, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(domain(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(domain(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.delta > 0.0) {
            return Err(domain(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Moment accumulators and step count for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: NetGradient,
    pub v: NetGradient,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(net: &ShallowReluNet, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            m: NetGradient::zeros(net.k, net.d),
            v: NetGradient::zeros(net.k, net.d),
            t: 0,
            config,
        })
    }

    /// One update in place:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `θ ← θ − lr · m̂ / (√v̂ + δ)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn step(&mut self, net: &mut ShallowReluNet, grad: &NetGradient) -> Result<()> {
        if !grad.same_shape(net) || !self.m.same_shape(net) {
            return Err(shape("gradient, optimizer state and network disagree in shape"));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            delta,
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let params = net.blocks_mut();
        let grads = grad.blocks();
        let ms = self.m.blocks_mut();
        let vs = self.v.blocks_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + delta);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    net: &ShallowReluNet,
    grad: &NetGradient,
) -> Result<(AdamState, ShallowReluNet)> {
    let mut state = state.clone();
    let mut net = net.clone();
    state.step(&mut net, grad)?;
    Ok((state, net))
}
