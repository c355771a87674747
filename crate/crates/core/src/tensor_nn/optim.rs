use serde::{Deserialize, Serialize};

use super::mlp::{Grads, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimKind {
    pub fn adam(lr: f64) -> Self {
        OptimKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimKind::Sgd { lr } | OptimKind::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub struct OptimState {
    kind: OptimKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimState {
    pub fn new(kind: OptimKind, params: &MlpParams) -> Result<Self> {
        let lr = kind.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Ok(OptimState {
            kind,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients abort without touching the
    /// parameters.
    pub fn step(&mut self, params: &mut MlpParams, grads: &Grads) -> Result<()> {
        if !grads.congruent_with(params) {
            return Err(Error::Shape("gradients do not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Optimizer(format!(
                "non-finite gradient at step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let grad_tensors = grads.tensors();
        match self.kind {
            OptimKind::Sgd { lr } => {
                for (p, g) in params.tensors_mut().into_iter().zip(grad_tensors) {
                    for (pv, gv) in p.iter_mut().zip(g) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grad_tensors)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    for (((pv, gv), mv), vv) in
                        p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let m_hat = *mv / c1;
                        let v_hat = *vv / c2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::Optimizer(format!(
                "parameters diverged at step {}",
                self.step
            )));
        }
        Ok(())
    }
}
