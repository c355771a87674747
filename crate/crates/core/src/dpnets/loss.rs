use super::{class_means, DPNetModel, EpisodeBatch};
use crate::error::{Error, Result};
use crate::synthetic_data::Sample;
use crate::tensor_nn::{mlp_backward, mlp_forward, Grads, Mat, MlpParams};

/// Loss value and gradients for one prototype episode.
#[derive(Debug, Clone)]
pub struct ProtoLoss {
    pub loss: f64,
    /// Fraction of queries whose nearest prototype is their own class.
    pub query_accuracy: f64,
    pub grad_support: Grads,
    pub grad_query: Grads,
}

/// Mean negative log-probability of the query labels under the softmax over
/// negative squared distances to the support prototypes, with exact
/// gradients for the support encoder (through the prototypes) and the query
/// encoder.
pub fn proto_loss(
    support_net: &MlpParams,
    query_net: &MlpParams,
    support: &Mat,
    support_labels: &[usize],
    query: &Mat,
    query_labels: &[usize],
    num_classes: usize,
) -> Result<ProtoLoss> {
    if support.rows() != support_labels.len() || query.rows() != query_labels.len() {
        return Err(Error::Shape("labels do not match batch rows".into()));
    }
    if query.rows() == 0 {
        return Err(Error::InsufficientSamples("empty query set".into()));
    }
    if let Some(&y) = query_labels
        .iter()
        .chain(support_labels)
        .find(|&&y| y >= num_classes)
    {
        return Err(Error::Shape(format!("label {y} >= {num_classes}")));
    }
    let (es, cache_s) = mlp_forward(support_net, support)?;
    let (eq, cache_q) = mlp_forward(query_net, query)?;
    let protos = class_means(&es, support_labels, num_classes)?;
    let mut counts = vec![0usize; num_classes];
    for &y in support_labels {
        counts[y] += 1;
    }

    let n_q = query.rows();
    let dim = eq.cols();
    let inv_n = 1.0 / n_q as f64;
    let mut loss = 0.0;
    let mut hits = 0usize;
    let mut grad_eq = Mat::zeros(n_q, dim);
    let mut grad_c = vec![vec![0.0; dim]; num_classes];
    let mut d = vec![0.0; num_classes];
    for j in 0..n_q {
        let e = eq.row(j);
        for (k, c) in protos.iter().enumerate() {
            d[k] = e.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        let y = query_labels[j];
        // log-sum-exp of -d, shifted by the smallest distance
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let lse = -dmin + d.iter().map(|dk| (dmin - dk).exp()).sum::<f64>().ln();
        loss += d[y] + lse;
        let nearest = (0..num_classes).fold(0, |b, k| if d[k] < d[b] { k } else { b });
        hits += usize::from(nearest == y);
        let g_row = grad_eq.row_mut(j);
        for k in 0..num_classes {
            let p = (-d[k] - lse).exp();
            let g = inv_n * (f64::from(u8::from(k == y)) - p);
            for ((gr, gc), (ev, cv)) in g_row
                .iter_mut()
                .zip(grad_c[k].iter_mut())
                .zip(e.iter().zip(&protos[k]))
            {
                let t = 2.0 * g * (ev - cv);
                *gr += t;
                *gc -= t;
            }
        }
    }

    let mut grad_es = Mat::zeros(support.rows(), dim);
    for (r, &y) in support_labels.iter().enumerate() {
        let scale = 1.0 / counts[y] as f64;
        for (o, g) in grad_es.row_mut(r).iter_mut().zip(&grad_c[y]) {
            *o = g * scale;
        }
    }
    let (grad_support, _) = mlp_backward(support_net, &cache_s, &grad_es)?;
    let (grad_query, _) = mlp_backward(query_net, &cache_q, &grad_eq)?;
    Ok(ProtoLoss {
        loss: loss * inv_n,
        query_accuracy: hits as f64 * inv_n,
        grad_support,
        grad_query,
    })
}

#[derive(Debug, Clone)]
pub struct EpisodeLoss {
    pub loss: f64,
    pub query_accuracy: f64,
    pub grad_phi: Grads,
    pub grad_psi: Grads,
}

fn flatten(per_class: &[Vec<Sample>]) -> Result<(Mat, Vec<usize>)> {
    let rows: Vec<&[f64]> = per_class.iter().flatten().map(|s| s.x.as_slice()).collect();
    let labels = per_class
        .iter()
        .enumerate()
        .flat_map(|(k, v)| std::iter::repeat_n(k, v.len()))
        .collect();
    Ok((Mat::from_rows(&rows)?, labels))
}

/// `J = (1/(K N_B)) sum_k sum_{x in Q^k} [d(f_psi(x), c^k) + log sum_k' exp(-d(f_psi(x), c^k'))]`
/// with prototypes from the support set through `f_phi`.
pub fn episode_loss(model: &DPNetModel, batch: &EpisodeBatch) -> Result<EpisodeLoss> {
    if batch.support.len() != model.num_classes() {
        return Err(Error::Shape(format!(
            "episode has {} classes, model has {}",
            batch.support.len(),
            model.num_classes()
        )));
    }
    let (xs, ys) = flatten(&batch.support)?;
    let (xq, yq) = flatten(&batch.query)?;
    let out = proto_loss(
        model.f_phi(),
        model.f_psi(),
        &xs,
        &ys,
        &xq,
        &yq,
        model.num_classes(),
    )?;
    Ok(EpisodeLoss {
        loss: out.loss,
        query_accuracy: out.query_accuracy,
        grad_phi: out.grad_support,
        grad_psi: out.grad_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpnets::{compute_prototypes, predictive_distribution};
    use crate::seed::rng_from;
    use crate::tensor_nn::{Backbone, Layer};
    use rand::Rng;

    fn random_batch(seed: u64, dim: usize, k: usize, n_b: usize) -> EpisodeBatch {
        let mut rng = rng_from(seed, &[]);
        let mut draw = |k| {
            (0..k)
                .map(|c| {
                    (0..n_b)
                        .map(|_| {
                            Sample::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(), c)
                        })
                        .collect()
                })
                .collect::<Vec<Vec<Sample>>>()
        };
        let support = draw(k);
        let query = draw(k);
        EpisodeBatch::new(support, query, 0).unwrap()
    }

    #[test]
    fn symmetric_prototypes_give_ln2() {
        let id = MlpParams::new(vec![Layer::new(Mat::identity(1), vec![0.0]).unwrap()]).unwrap();
        let m = DPNetModel::new(id.clone(), id, 2).unwrap();
        let support = vec![
            vec![Sample::new(vec![-1.0], 0)],
            vec![Sample::new(vec![1.0], 1)],
        ];
        let query = vec![
            vec![Sample::new(vec![0.0], 0)],
            vec![Sample::new(vec![0.0], 1)],
        ];
        let b = EpisodeBatch::new(support, query, 0).unwrap();
        assert!((episode_loss(&m, &b).unwrap().loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_is_mean_negative_log_probability() {
        for seed in 0..20 {
            let m = DPNetModel::init(3, &Backbone::new(vec![7], 4), 3, seed).unwrap();
            let b = random_batch(seed + 100, 3, 3, 5);
            let j = episode_loss(&m, &b).unwrap().loss;
            let p = compute_prototypes(&m, &b.support).unwrap();
            let mut nll = 0.0;
            let mut n = 0.0;
            for s in b.query.iter().flatten() {
                nll -= predictive_distribution(&m, &p, &s.x).unwrap()[s.y].ln();
                n += 1.0;
            }
            assert!(
                (j - nll / n).abs() <= 1e-10,
                "seed {seed}: {j} vs {}",
                nll / n
            );
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..3 {
            let model = DPNetModel::init(3, &Backbone::new(vec![6], 4), 3, seed).unwrap();
            let b = random_batch(seed + 7, 3, 3, 4);
            let out = episode_loss(&model, &b).unwrap();
            for (which, analytic) in [(0, out.grad_phi.flat()), (1, out.grad_psi.flat())] {
                let base = if which == 0 {
                    model.f_phi().flat()
                } else {
                    model.f_psi().flat()
                };
                for (i, &g) in analytic.iter().enumerate() {
                    let eval = |delta: f64| {
                        let mut m = model.clone();
                        let mut v = base.clone();
                        v[i] += delta;
                        let net = if which == 0 {
                            m.f_phi_mut()
                        } else {
                            m.f_psi_mut()
                        };
                        net.set_flat(&v).unwrap();
                        episode_loss(&m, &b).unwrap().loss
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    if g.abs() < 1e-9 && fd.abs() < 1e-9 {
                        continue;
                    }
                    assert!(rel_err(g, fd) < 1e-4, "net {which} param {i}: {g} vs {fd}");
                }
            }
        }
    }
}
