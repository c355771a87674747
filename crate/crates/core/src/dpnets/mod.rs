//! Directional prototypical networks.
//!
//! Two encoders of identical architecture: `f_phi` embeds support samples
//! from domain `i` into class prototypes, `f_psi` embeds query samples from
//! domain `i + 1`. Training pulls each query towards the prototype of its
//! class computed one domain earlier, so at test time prototypes from the
//! last source domain classify the unseen target.

mod episode;
mod loss;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::synthetic_data::{DomainData, Sample};
use crate::tensor_nn::{
    argmax, load_model, log_softmax_from_neg_dists, save_model, sq_euclidean, Backbone, Mat,
    MlpParams,
};

pub use episode::{sample_episode, EpisodeBatch};
pub use loss::{episode_loss, proto_loss, EpisodeLoss, ProtoLoss};
pub use train::{train, StepInfo, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPNetModel {
    f_phi: MlpParams,
    f_psi: MlpParams,
    num_classes: usize,
}

impl DPNetModel {
    pub fn new(f_phi: MlpParams, f_psi: MlpParams, num_classes: usize) -> Result<Self> {
        if f_phi.dims() != f_psi.dims() {
            return Err(Error::Shape(format!(
                "encoders differ: f_phi {:?} vs f_psi {:?}",
                f_phi.dims(),
                f_psi.dims()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        Ok(DPNetModel {
            f_phi,
            f_psi,
            num_classes,
        })
    }

    /// Independent Kaiming initialization of both encoders.
    pub fn init(
        input_dim: usize,
        backbone: &Backbone,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let dims = backbone.dims(input_dim);
        let f_phi = MlpParams::kaiming(&dims, &mut rng_from(seed, &[1]))?;
        let f_psi = MlpParams::kaiming(&dims, &mut rng_from(seed, &[2]))?;
        DPNetModel::new(f_phi, f_psi, num_classes)
    }

    pub fn f_phi(&self) -> &MlpParams {
        &self.f_phi
    }

    pub fn f_psi(&self) -> &MlpParams {
        &self.f_psi
    }

    pub fn f_phi_mut(&mut self) -> &mut MlpParams {
        &mut self.f_phi
    }

    pub fn f_psi_mut(&mut self) -> &mut MlpParams {
        &mut self.f_psi
    }

    pub fn embed_dim(&self) -> usize {
        self.f_phi.out_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.f_phi.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = ModelMeta {
            model: "dpnets".into(),
            dims: self.f_phi.dims(),
            num_classes: self.num_classes,
            embed_dim: self.embed_dim(),
            seed,
        };
        save_model(path, &[&self.f_phi, &self.f_psi], &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, ModelMeta)> {
        let (mut nets, meta): (_, ModelMeta) = load_model(path)?;
        if nets.len() != 2 || meta.model != "dpnets" {
            return Err(Error::Checkpoint(format!(
                "{} does not hold a dpnets model",
                path.display()
            )));
        }
        let f_psi = nets.pop().unwrap();
        let f_phi = nets.pop().unwrap();
        Ok((DPNetModel::new(f_phi, f_psi, meta.num_classes)?, meta))
    }
}

/// Checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: String,
    pub dims: Vec<usize>,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    centers: Vec<Vec<f64>>,
}

impl Prototypes {
    pub fn new(centers: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = centers.first() else {
            return Err(Error::Shape("no prototypes".into()));
        };
        let d = first.len();
        if centers
            .iter()
            .any(|c| c.len() != d || c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Shape(
                "prototypes must share a finite embedding dimension".into(),
            ));
        }
        Ok(Prototypes { centers })
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k]
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Squared distances from `e` to every prototype.
    pub fn distances(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.centers.iter().map(|c| sq_euclidean(e, c)).collect()
    }
}

/// Class means of `embeddings` rows grouped by `labels`.
pub(crate) fn class_means(embeddings: &Mat, labels: &[usize], k: usize) -> Result<Vec<Vec<f64>>> {
    let d = embeddings.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(embeddings.row(r)) {
            *s += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InsufficientSamples(format!(
            "class {c} has no support samples"
        )));
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= *n as f64;
        }
    }
    Ok(sums)
}

fn stack(samples: &[&Sample]) -> Result<(Mat, Vec<usize>)> {
    let x = Mat::from_rows(&samples.iter().map(|s| s.x.as_slice()).collect::<Vec<_>>())?;
    Ok((x, samples.iter().map(|s| s.y).collect()))
}

/// `c[k]` = mean of `f_phi(x)` over the class-`k` support list.
pub fn compute_prototypes(model: &DPNetModel, support: &[Vec<Sample>]) -> Result<Prototypes> {
    if support.len() != model.num_classes {
        return Err(Error::Shape(format!(
            "support has {} classes, model has {}",
            support.len(),
            model.num_classes
        )));
    }
    if let Some(k) = support.iter().position(Vec::is_empty) {
        return Err(Error::InsufficientSamples(format!(
            "class {k} has no support samples"
        )));
    }
    let flat: Vec<&Sample> = support
        .iter()
        .enumerate()
        .flat_map(|(k, v)| v.iter().map(move |s| (k, s)))
        .map(|(k, s)| {
            debug_assert_eq!(s.y, k);
            s
        })
        .collect();
    let (x, _) = stack(&flat)?;
    let labels: Vec<usize> = support
        .iter()
        .enumerate()
        .flat_map(|(k, v)| std::iter::repeat_n(k, v.len()))
        .collect();
    let e = model.f_phi.forward(&x)?;
    Prototypes::new(class_means(&e, &labels, model.num_classes)?)
}

/// Prototypes from every sample of a domain.
pub fn domain_prototypes(model: &DPNetModel, domain: &DomainData) -> Result<Prototypes> {
    let e = model.f_phi.forward(&domain.features())?;
    Prototypes::new(class_means(&e, &domain.labels(), model.num_classes)?)
}

/// Softmax over negative squared distances from `f_psi(x)` to the prototypes.
pub fn predictive_distribution(
    model: &DPNetModel,
    prototypes: &Prototypes,
    x: &[f64],
) -> Result<Vec<f64>> {
    let e = model
        .f_psi
        .forward(&Mat::from_vec(1, x.len(), x.to_vec())?)?;
    let neg: Vec<f64> = prototypes.distances(e.row(0))?.iter().map(|d| -d).collect();
    Ok(log_softmax_from_neg_dists(&neg)
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// Nearest-prototype labels (ties to the lowest class) for the rows of `queries`.
pub fn classify(model: &DPNetModel, prototypes: &Prototypes, queries: &Mat) -> Result<Vec<usize>> {
    let e = model.f_psi.forward(queries)?;
    (0..e.rows())
        .map(|r| {
            let neg: Vec<f64> = prototypes.distances(e.row(r))?.iter().map(|d| -d).collect();
            Ok(argmax(&neg))
        })
        .collect()
}

/// Target-domain inference: prototypes from the last source domain via
/// `f_phi`, queries via `f_psi`.
pub fn predict_target(
    model: &DPNetModel,
    last_source: &DomainData,
    queries: &Mat,
) -> Result<Vec<usize>> {
    classify(model, &domain_prototypes(model, last_source)?, queries)
}

/// Fraction of `query_domain` classified correctly with prototypes from
/// `support_domain`.
pub fn pair_accuracy(
    model: &DPNetModel,
    support_domain: &DomainData,
    query_domain: &DomainData,
) -> Result<f64> {
    let pred = predict_target(model, support_domain, &query_domain.features())?;
    let hits = pred
        .iter()
        .zip(query_domain.samples())
        .filter(|(p, s)| **p == s.y)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}
