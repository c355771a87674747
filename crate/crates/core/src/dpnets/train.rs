use serde::{Deserialize, Serialize};

use super::{episode_loss, sample_episode, DPNetModel};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::synthetic_data::DomainData;
use crate::tensor_nn::{OptimKind, OptimState};

const EPISODE_STREAM: u64 = 0xE915;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub n_b: usize,
    pub optim: OptimKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub loss: f64,
    pub query_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DPNetModel,
    pub losses: Vec<f64>,
    pub query_accuracy: Vec<f64>,
}

/// Episodic training over consecutive source-domain pairs. `sources` must
/// not contain the target domain.
pub fn train(
    mut model: DPNetModel,
    sources: &[DomainData],
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(StepInfo)>,
) -> Result<TrainOutcome> {
    let mut rng = rng_from(cfg.seed, &[EPISODE_STREAM]);
    let mut opt_phi = OptimState::new(cfg.optim, model.f_phi())?;
    let mut opt_psi = OptimState::new(cfg.optim, model.f_psi())?;
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut accs = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample_episode(sources, cfg.n_b, &mut rng)?;
        let out = episode_loss(&model, &batch)?;
        if !out.loss.is_finite() {
            return Err(Error::Optimizer(format!(
                "step {step}: non-finite episode loss {}",
                out.loss
            )));
        }
        let wrap = |e: Error| Error::Optimizer(format!("step {step}: {e}"));
        opt_phi
            .step(model.f_phi_mut(), &out.grad_phi)
            .map_err(wrap)?;
        opt_psi
            .step(model.f_psi_mut(), &out.grad_psi)
            .map_err(wrap)?;
        losses.push(out.loss);
        accs.push(out.query_accuracy);
        if let Some(cb) = progress.as_mut() {
            cb(StepInfo {
                step,
                loss: out.loss,
                query_accuracy: out.query_accuracy,
            });
        }
    }
    Ok(TrainOutcome {
        model,
        losses,
        query_accuracy: accs,
    })
}
