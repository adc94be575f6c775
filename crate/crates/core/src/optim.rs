//! SGD, RMSProp and Adam over [`NetworkParams`].

use crate::error::{dim_mismatch, Error, Result};
use crate::grad::GradientSet;
use crate::lstm::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// RMSProp decay ρ.
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Denominator offset for RMSProp and Adam.
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::RmsProp,
            ..Self::sgd(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

/// Optimizer state: one first/second moment buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &NetworkParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.as_slice().len()).collect();
        let zeros = |need: bool| -> Vec<Vec<f64>> {
            if need {
                shapes.iter().map(|&n| vec![0.0; n]).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            cfg,
            m: zeros(cfg.kind == OptimizerKind::Adam),
            v: zeros(cfg.kind != OptimizerKind::Sgd),
            step: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients are rejected before anything changes.
    pub fn apply(&mut self, params: &mut NetworkParams, grads: &GradientSet) -> Result<()> {
        if !params.same_shape(grads) {
            return Err(dim_mismatch("Optimizer::apply", params.dims(), grads.dims()));
        }
        for (name, t) in NetworkParams::tensor_names().iter().zip(grads.tensors()) {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("gradient {name}")));
            }
        }
        self.step += 1;
        let cfg = self.cfg;
        let grads = grads.tensors();
        match cfg.kind {
            OptimizerKind::Sgd => {
                for (w, g) in params.tensors_mut().into_iter().zip(grads) {
                    for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *wi -= cfg.lr * gi;
                    }
                }
            }
            OptimizerKind::RmsProp => {
                for ((w, g), v) in params.tensors_mut().into_iter().zip(grads).zip(self.v.iter_mut()) {
                    for ((wi, &gi), vi) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(v.iter_mut()) {
                        *vi = cfg.rho * *vi + (1.0 - cfg.rho) * gi * gi;
                        *wi -= cfg.lr * gi / (vi.sqrt() + cfg.eps);
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - cfg.beta1.powi(t);
                let c2 = 1.0 - cfg.beta2.powi(t);
                for (((w, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    for (((wi, &gi), mi), vi) in w
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *wi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
