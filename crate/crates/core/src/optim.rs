//! Lion (sign momentum) and AdamW.
//!
//! Lion keeps one momentum buffer per parameter. Each step:
//!
//! ```text
//! c = β1·m + (1-β1)·g
//! p = p - lr·(sign(c) + λ·p)
//! m = β2·m + (1-β2)·g
//! ```
//!
//! with `sign(0) = 0`. AdamW keeps first and second moments with bias
//! correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::ParamStore;

pub const LION_BETA1: f64 = 0.9;
pub const LION_BETA2: f64 = 0.99;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Lion,
    #[serde(rename = "adamw")]
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lion" => Ok(Self::Lion),
            "adamw" => Ok(Self::AdamW),
            other => Err(Error::Config(format!("unknown optimizer {other:?} (expected lion|adamw)"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lion => "lion",
            Self::AdamW => "adamw",
        })
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_shapes(param: &Tensor, grad: &Tensor, buffers: &[&Tensor]) -> Result<()> {
    let bad = param.shape() != grad.shape() || buffers.iter().any(|b| b.shape() != param.shape());
    if bad {
        return Err(Error::Dimension(format!(
            "optimizer step: param {:?}, grad {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            buffers.iter().map(|b| b.shape().to_vec()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

fn check_hyper(lr: f64, betas: &[f64]) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
        return Err(Error::Config(format!("betas must be in [0, 1), got {betas:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LionState {
    pub momentum: Tensor,
}

impl LionState {
    pub fn zeros_like(param: &Tensor) -> Self {
        Self {
            momentum: Tensor::zeros(param.shape()),
        }
    }
}

pub fn lion_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut LionState,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
) -> Result<()> {
    check_hyper(lr, &[beta1, beta2])?;
    check_shapes(param, grad, &[&state.momentum])?;
    let m = state.momentum.data_mut();
    let p = param.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i];
        let c = beta1 * m[i] + (1.0 - beta1) * g;
        p[i] -= lr * (sign(c) + weight_decay * p[i]);
        m[i] = beta2 * m[i] + (1.0 - beta2) * g;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub first: Tensor,
    pub second: Tensor,
    pub step: u64,
}

impl AdamWState {
    pub fn zeros_like(param: &Tensor) -> Self {
        Self {
            first: Tensor::zeros(param.shape()),
            second: Tensor::zeros(param.shape()),
            step: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn adamw_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamWState,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    check_hyper(lr, &[beta1, beta2])?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be > 0, got {eps}")));
    }
    check_shapes(param, grad, &[&state.first, &state.second])?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let m = state.first.data_mut();
    let v = state.second.data_mut();
    let p = param.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p[i]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn lion(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Lion,
            lr,
            weight_decay,
            beta1: LION_BETA1,
            beta2: LION_BETA2,
            eps: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            lr,
            weight_decay,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        match kind {
            OptimizerKind::Lion => Self::lion(lr, weight_decay),
            OptimizerKind::AdamW => Self::adamw(lr, weight_decay),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "buffers", rename_all = "lowercase")]
pub enum OptimizerState {
    Lion(Vec<LionState>),
    #[serde(rename = "adamw")]
    AdamW(Vec<AdamWState>),
}

/// Optimizer over every tensor of a [`ParamStore`]; weight decay applies only
/// to parameters flagged for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Self {
        let state = match config.kind {
            OptimizerKind::Lion => {
                OptimizerState::Lion(params.tensors().iter().map(LionState::zeros_like).collect())
            }
            OptimizerKind::AdamW => {
                OptimizerState::AdamW(params.tensors().iter().map(AdamWState::zeros_like).collect())
            }
        };
        Self { config, state }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        let c = self.config;
        let decay: Vec<bool> = params.info().iter().map(|i| i.decay).collect();
        let tensors = params.tensors_mut();
        match &mut self.state {
            OptimizerState::Lion(states) => {
                for (i, (p, s)) in tensors.iter_mut().zip(states.iter_mut()).enumerate() {
                    let wd = if decay[i] { c.weight_decay } else { 0.0 };
                    lion_step(p, &grads[i], s, c.lr, wd, c.beta1, c.beta2)?;
                }
            }
            OptimizerState::AdamW(states) => {
                for (i, (p, s)) in tensors.iter_mut().zip(states.iter_mut()).enumerate() {
                    let wd = if decay[i] { c.weight_decay } else { 0.0 };
                    adamw_step(p, &grads[i], s, c.lr, wd, c.beta1, c.beta2, c.eps)?;
                }
            }
        }
        Ok(())
    }

    /// Number of scalars held in optimizer state buffers.
    pub fn state_numel(&self) -> usize {
        match &self.state {
            OptimizerState::Lion(s) => s.iter().map(|s| s.momentum.len()).sum(),
            OptimizerState::AdamW(s) => s.iter().map(|s| s.first.len() + s.second.len()).sum(),
        }
    }

    /// Check that the state buffers line up with `params`.
    pub fn check_compatible(&self, params: &ParamStore) -> Result<()> {
        let shapes: Vec<Vec<usize>> = match &self.state {
            OptimizerState::Lion(s) => s.iter().map(|s| s.momentum.shape().to_vec()).collect(),
            OptimizerState::AdamW(s) => s.iter().map(|s| s.first.shape().to_vec()).collect(),
        };
        let expected: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
        if shapes != expected {
            return Err(Error::Compatibility("optimizer state does not match parameters".into()));
        }
        Ok(())
    }
}
