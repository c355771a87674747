use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{augment_unchecked, IndexMode};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::synthetic_data::{DomainData, Sample};
use crate::tensor_nn::{
    argmax, load_model, log_softmax_from_neg_dists, mlp_backward, mlp_forward, save_model, Grads,
    Mat, MlpParams, OptimKind, OptimState,
};

const BATCH_STREAM: u64 = 0xB47C;
const INIT_STREAM: u64 = 0x1417;

/// Classifier whose network ends in `num_classes` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmModel {
    pub net: MlpParams,
    pub index_mode: IndexMode,
    pub num_domains_seen: usize,
    pub num_classes: usize,
}

/// Which domain index the model is given at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetIndex {
    /// The unseen next domain: the scalar mode extrapolates to `m / (m - 1)`,
    /// one-hot and outer-product reuse the last seen slot `m - 1`.
    Target,
    /// A seen domain `i < m`.
    Seen(usize),
}

impl ErmModel {
    pub fn new(
        net: MlpParams,
        index_mode: IndexMode,
        num_domains_seen: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if net.out_dim() != num_classes {
            return Err(Error::Shape(format!(
                "network emits {} logits for {num_classes} classes",
                net.out_dim()
            )));
        }
        if num_domains_seen == 0 {
            return Err(Error::Config("ERM needs at least one seen domain".into()));
        }
        Ok(ErmModel {
            net,
            index_mode,
            num_domains_seen,
            num_classes,
        })
    }

    /// Raw feature width before index augmentation.
    pub fn feature_dim(&self) -> usize {
        let d = self.net.in_dim();
        let m = self.num_domains_seen;
        match self.index_mode {
            IndexMode::None => d,
            IndexMode::ScalarConcat => d - 1,
            IndexMode::OneHotConcat => d - m,
            IndexMode::OuterProduct => d / m,
        }
    }

    pub fn augment(&self, x: &[f64], at: TargetIndex) -> Result<Vec<f64>> {
        let m = self.num_domains_seen;
        if x.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.feature_dim(),
                x.len()
            )));
        }
        Ok(match at {
            TargetIndex::Target => augment_unchecked(x, m as f64, m - 1, self.index_mode, m),
            TargetIndex::Seen(i) if i < m => augment_unchecked(x, i as f64, i, self.index_mode, m),
            TargetIndex::Seen(i) => {
                return Err(Error::Config(format!(
                    "domain index {i} >= {m} seen domains"
                )))
            }
        })
    }

    pub fn logits(&self, x: &Mat, at: TargetIndex) -> Result<Mat> {
        let rows = (0..x.rows())
            .map(|r| self.augment(x.row(r), at))
            .collect::<Result<Vec<_>>>()?;
        self.net.forward(&Mat::from_rows(&rows)?)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let meta = ErmMeta {
            model: "erm".into(),
            dims: self.net.dims(),
            index_mode: self.index_mode,
            num_domains_seen: self.num_domains_seen,
            num_classes: self.num_classes,
            seed,
        };
        save_model(path, &[&self.net], &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut nets, meta): (Vec<MlpParams>, ErmMeta) = load_model(path)?;
        if nets.len() != 1 || meta.model != "erm" {
            return Err(Error::Checkpoint(format!(
                "{} does not hold an ERM model",
                path.display()
            )));
        }
        ErmModel::new(
            nets.pop().unwrap(),
            meta.index_mode,
            meta.num_domains_seen,
            meta.num_classes,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ErmMeta {
    model: String,
    dims: Vec<usize>,
    index_mode: IndexMode,
    num_domains_seen: usize,
    num_classes: usize,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub optim: OptimKind,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ErmOutcome {
    pub model: ErmModel,
    pub losses: Vec<f64>,
}

/// Mean cross-entropy of `labels` under `logits`, and its gradient with
/// respect to the logits.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> Result<(f64, Mat)> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("logits and labels disagree".into()));
    }
    let n = labels.len() as f64;
    let mut grad = Mat::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let lp = log_softmax_from_neg_dists(logits.row(r));
        loss -= lp[y];
        for (k, (g, l)) in grad.row_mut(r).iter_mut().zip(&lp).enumerate() {
            *g = (l.exp() - f64::from(u8::from(k == y))) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Pooled, index-augmented samples of the given domains; domain `j` of the
/// slice gets index `j`.
pub fn pool_sources(sources: &[DomainData], mode: IndexMode) -> Vec<Sample> {
    let m = sources.len();
    sources
        .iter()
        .enumerate()
        .flat_map(|(j, d)| {
            d.samples()
                .iter()
                .map(move |s| Sample::new(augment_unchecked(&s.x, j as f64, j, mode, m), s.y))
        })
        .collect()
}

/// Mini-batch cross-entropy training on an already pooled sample list.
/// Batches are drawn uniformly with replacement from `pool`.
pub fn train_erm_on_pool(
    pool: &[Sample],
    hidden: &[usize],
    num_classes: usize,
    index_mode: IndexMode,
    num_domains_seen: usize,
    cfg: &ErmConfig,
) -> Result<ErmOutcome> {
    if pool.is_empty() {
        return Err(Error::InsufficientSamples("empty training pool".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut dims = vec![pool[0].x.len()];
    dims.extend_from_slice(hidden);
    dims.push(num_classes);
    let net = MlpParams::kaiming(&dims, &mut rng_from(cfg.seed, &[INIT_STREAM]))?;
    let mut model = ErmModel::new(net, index_mode, num_domains_seen, num_classes)?;
    let mut opt = OptimState::new(cfg.optim, &model.net)?;
    let mut rng = rng_from(cfg.seed, &[BATCH_STREAM]);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let picks: Vec<&Sample> = (0..cfg.batch_size)
            .map(|_| &pool[rng.random_range(0..pool.len())])
            .collect();
        let x = Mat::from_rows(&picks.iter().map(|s| s.x.as_slice()).collect::<Vec<_>>())?;
        let y: Vec<usize> = picks.iter().map(|s| s.y).collect();
        let (logits, cache) = mlp_forward(&model.net, &x)?;
        let (loss, g) = cross_entropy(&logits, &y)?;
        if !loss.is_finite() {
            return Err(Error::Optimizer(format!(
                "step {step}: non-finite loss {loss}"
            )));
        }
        let (grads, _): (Grads, Mat) = mlp_backward(&model.net, &cache, &g)?;
        opt.step(&mut model.net, &grads)
            .map_err(|e| Error::Optimizer(format!("step {step}: {e}")))?;
        losses.push(loss);
    }
    Ok(ErmOutcome { model, losses })
}

/// ERM over the pooled sources, or only the final `last_k` of them.
pub fn train_erm(
    sources: &[DomainData],
    hidden: &[usize],
    cfg: &ErmConfig,
    index_mode: IndexMode,
    last_k: Option<usize>,
) -> Result<ErmOutcome> {
    if sources.is_empty() {
        return Err(Error::InsufficientSamples(
            "ERM needs at least one source domain".into(),
        ));
    }
    let used = match last_k {
        Some(0) => return Err(Error::Config("last_k must be positive".into())),
        Some(k) => &sources[sources.len().saturating_sub(k)..],
        None => sources,
    };
    let pool = pool_sources(used, index_mode);
    train_erm_on_pool(
        &pool,
        hidden,
        sources[0].num_classes(),
        index_mode,
        used.len(),
        cfg,
    )
}

/// Argmax logits, ties to the lowest class.
pub fn predict_erm(model: &ErmModel, x: &Mat, at: TargetIndex) -> Result<Vec<usize>> {
    let logits = model.logits(x, at)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}
