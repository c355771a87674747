use rand::seq::index;
use rand::Rng;

use crate::dpnets::{proto_loss, DPNetModel, StepInfo, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::synthetic_data::DomainData;
use crate::tensor_nn::{Backbone, Mat, MlpParams, OptimState};

const EPISODE_STREAM: u64 = 0x7A1E;

/// Prototypical network with one shared encoder. Each episode picks a source
/// domain uniformly and draws disjoint support and query sets from it,
/// `n_b` per class (fewer if a class cannot supply `2 * n_b`).
pub fn train_proto_vanilla(
    sources: &[DomainData],
    backbone: &Backbone,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(StepInfo)>,
) -> Result<TrainOutcome> {
    let Some(first) = sources.first() else {
        return Err(Error::InsufficientSamples("no source domains".into()));
    };
    let k = first.num_classes();
    let mut net = MlpParams::kaiming(
        &backbone.dims(first.feature_dim()),
        &mut rng_from(cfg.seed, &[1]),
    )?;
    let mut opt = OptimState::new(cfg.optim, &net)?;
    let mut rng = rng_from(cfg.seed, &[EPISODE_STREAM]);
    let class_idx: Vec<Vec<Vec<usize>>> = sources.iter().map(DomainData::class_indices).collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut accs = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let j = rng.random_range(0..sources.len());
        let smallest = class_idx[j].iter().map(Vec::len).min().unwrap_or(0);
        let n = cfg.n_b.min(smallest / 2);
        if n == 0 {
            return Err(Error::InsufficientSamples(format!(
                "domain {} cannot supply a support and a query sample per class",
                sources[j].index()
            )));
        }
        let (mut srows, mut slab, mut qrows, mut qlab) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (c, idx) in class_idx[j].iter().enumerate() {
            let pick = index::sample(&mut rng, idx.len(), 2 * n).into_vec();
            for (t, p) in pick.into_iter().enumerate() {
                let x = sources[j].samples()[idx[p]].x.as_slice();
                if t < n {
                    srows.push(x);
                    slab.push(c);
                } else {
                    qrows.push(x);
                    qlab.push(c);
                }
            }
        }
        let out = proto_loss(
            &net,
            &net,
            &Mat::from_rows(&srows)?,
            &slab,
            &Mat::from_rows(&qrows)?,
            &qlab,
            k,
        )?;
        let mut g = out.grad_support;
        g.add_assign(&out.grad_query)?;
        if !out.loss.is_finite() {
            return Err(Error::Optimizer(format!(
                "step {step}: non-finite episode loss"
            )));
        }
        opt.step(&mut net, &g)
            .map_err(|e| Error::Optimizer(format!("step {step}: {e}")))?;
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
        model: DPNetModel::new(net.clone(), net, k)?,
        losses,
        query_accuracy: accs,
    })
}
