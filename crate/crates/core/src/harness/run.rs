use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, Environment, HParams, TRAIN_RATIO};
use crate::baselines::{
    predict_erm, train_erm, train_proto_vanilla, ErmConfig, ErmModel, IndexMode, TargetIndex,
};
use crate::dpnets::{self, pair_accuracy, DPNetModel, StepInfo, TrainConfig};
use crate::error::{Error, Result};
use crate::synthetic_data::{split_train_val, DomainData};
use crate::tensor_nn::{sidecar_path, Mat, OptimKind};

/// Fraction of `domain` whose predicted label matches.
pub fn evaluate_accuracy<F>(predict: F, domain: &DomainData) -> Result<f64>
where
    F: Fn(&Mat) -> Result<Vec<usize>>,
{
    let pred = predict(&domain.features())?;
    if pred.len() != domain.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} samples",
            pred.len(),
            domain.len()
        )));
    }
    let hits = pred
        .iter()
        .zip(domain.samples())
        .filter(|(p, s)| **p == s.y)
        .count();
    Ok(hits as f64 / domain.len() as f64)
}

/// A trained model of any supported algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Prototype(DPNetModel),
    Erm(ErmModel),
}

impl TrainedModel {
    /// Target-domain labels. Prototype models build prototypes from
    /// `last_source`; ERM models use the declared target index policy.
    pub fn predict_target(&self, last_source: &DomainData, x: &Mat) -> Result<Vec<usize>> {
        match self {
            TrainedModel::Prototype(m) => dpnets::predict_target(m, last_source, x),
            TrainedModel::Erm(m) => predict_erm(m, x, TargetIndex::Target),
        }
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        match self {
            TrainedModel::Prototype(m) => m.save(path, seed),
            TrainedModel::Erm(m) => m.save(path, seed),
        }
    }

    /// Reads either checkpoint kind, dispatching on the sidecar's `model` tag.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            model: String,
        }
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let tag: Tag = serde_json::from_str(&text)?;
        match tag.model.as_str() {
            "dpnets" => Ok(TrainedModel::Prototype(DPNetModel::load(path)?.0)),
            "erm" => Ok(TrainedModel::Erm(ErmModel::load(path)?)),
            other => Err(Error::Checkpoint(format!(
                "unknown model kind `{other}` in {}",
                side.display()
            ))),
        }
    }
}

/// Per-seed result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub target_accuracy: f64,
    pub validation_accuracy: f64,
    pub final_loss: f64,
    /// Mean loss over consecutive windows, at most 50 points.
    pub loss_trace: Vec<f64>,
}

fn downsample(losses: &[f64], points: usize) -> Vec<f64> {
    if losses.is_empty() {
        return vec![];
    }
    let w = losses.len().div_ceil(points);
    losses
        .chunks(w)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Splits {
    train: Vec<DomainData>,
    val: Vec<DomainData>,
}

fn split_sources(sources: &[DomainData], seed: u64) -> Result<Splits> {
    let mut train = Vec::with_capacity(sources.len());
    let mut val = Vec::with_capacity(sources.len());
    for d in sources {
        let (a, b) = split_train_val(d, TRAIN_RATIO, seed)?;
        train.push(a);
        val.push(b);
    }
    Ok(Splits { train, val })
}

/// Trains `algorithm` on the training splits of the sources. Returns the
/// model, its loss trace and its validation accuracy on the held-out splits.
pub fn train_model(
    algorithm: Algorithm,
    hp: &HParams,
    env: &Environment,
    seed: u64,
    progress: Option<&mut dyn FnMut(StepInfo)>,
) -> Result<(TrainedModel, Vec<f64>, f64)> {
    let sources = env.sources();
    let s = split_sources(&sources, seed)?;
    let k = env.num_classes();
    let optim = OptimKind::adam(hp.lr);
    let proto_cfg = TrainConfig {
        steps: hp.steps,
        n_b: hp.n_b,
        optim,
        seed,
    };
    match algorithm {
        Algorithm::DPNets => {
            let model = DPNetModel::init(env.feature_dim(), &hp.proto_backbone(), k, seed)?;
            let out = dpnets::train(model, &s.train, &proto_cfg, progress)?;
            // prototypes from domain i-1, queries from the held-out part of domain i
            let accs = (1..s.train.len())
                .map(|i| pair_accuracy(&out.model, &s.train[i - 1], &s.val[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok((TrainedModel::Prototype(out.model), out.losses, mean(&accs)))
        }
        Algorithm::ProtoVanilla => {
            let out = train_proto_vanilla(&s.train, &hp.proto_backbone(), &proto_cfg, progress)?;
            let accs = (0..s.train.len())
                .map(|i| pair_accuracy(&out.model, &s.train[i], &s.val[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok((TrainedModel::Prototype(out.model), out.losses, mean(&accs)))
        }
        Algorithm::Erm | Algorithm::ErmRecent(_) | Algorithm::ErmIndex(_) => {
            let (mode, last_k) = match algorithm {
                Algorithm::ErmRecent(k) => (IndexMode::None, Some(k)),
                Algorithm::ErmIndex(m) => (m, None),
                _ => (IndexMode::None, None),
            };
            let cfg = ErmConfig {
                steps: hp.steps,
                batch_size: hp.erm_batch_size(k),
                optim,
                seed,
            };
            let out = train_erm(&s.train, hp.erm_hidden(), &cfg, mode, last_k)?;
            let used = s.val.len() - out.model.num_domains_seen;
            let (mut hits, mut total) = (0usize, 0usize);
            for (j, v) in s.val[used..].iter().enumerate() {
                let pred = predict_erm(&out.model, &v.features(), TargetIndex::Seen(j))?;
                hits += pred
                    .iter()
                    .zip(v.samples())
                    .filter(|(p, x)| **p == x.y)
                    .count();
                total += v.len();
            }
            let losses = out.losses;
            if let Some(cb) = progress {
                for (step, &loss) in losses.iter().enumerate() {
                    cb(StepInfo {
                        step,
                        loss,
                        query_accuracy: f64::NAN,
                    });
                }
            }
            Ok((
                TrainedModel::Erm(out.model),
                losses,
                hits as f64 / total as f64,
            ))
        }
    }
}

/// Trains one seed and scores it on the validation splits and the target.
pub fn run_single(
    algorithm: Algorithm,
    hp: &HParams,
    env: &Environment,
    seed: u64,
) -> Result<RunOutcome> {
    let (model, losses, val) = train_model(algorithm, hp, env, seed, None)?;
    let sources = env.sources();
    let last = sources.last().expect("at least two sources");
    let target = evaluate_accuracy(|x| model.predict_target(last, x), env.target())?;
    Ok(RunOutcome {
        seed,
        target_accuracy: target,
        validation_accuracy: val,
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
        loss_trace: downsample(&losses, 50),
    })
}
