//! Randomized certification runs. Instance `k` of suite `s` is generated
//! from its own seed path `(seed, s, k)`, so summaries are independent of the
//! worker count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bounds::{
    js_decomposition_gap, verify_change_of_measure, verify_corollary1, verify_lemma1,
    verify_theorem1, BoundConstant, SLACK_TOLERANCE,
};
use super::consistency::{candidate_family, find_g_star};
use super::{apply_map, DiscreteEnv, DiscreteJoint, LossSpec, MappingFn};
use crate::error::Result;
use crate::parallel::map_indexed;
use crate::seed::rng_from;

const SUITE_LEMMA: u64 = 1;
const SUITE_THEOREM: u64 = 2;
const SUITE_DECOMP: u64 = 3;
const SUITE_COM: u64 = 4;
const FAMILY_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    pub seed: u64,
    pub instances: usize,
    pub decomposition_instances: usize,
    pub max_nx: usize,
    pub max_ny: usize,
    pub max_sources: usize,
    pub workers: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            seed: 0,
            instances: 1000,
            decomposition_instances: 10_000,
            max_nx: 6,
            max_ny: 3,
            max_sources: 5,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub instances: usize,
    pub min_slack: f64,
    pub violations: usize,
    /// Instance index with the smallest slack.
    pub worst_instance: Option<usize>,
}

impl SuiteSummary {
    fn from_slacks(slacks: impl IntoIterator<Item = f64>) -> Self {
        let mut s = SuiteSummary {
            instances: 0,
            min_slack: f64::INFINITY,
            violations: 0,
            worst_instance: None,
        };
        for (i, v) in slacks.into_iter().enumerate() {
            s.instances += 1;
            if v < s.min_slack || v.is_nan() {
                s.min_slack = v;
                s.worst_instance = Some(i);
            }
            if !(v >= -SLACK_TOLERANCE) {
                s.violations += 1;
            }
        }
        s
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationSummary {
    pub constant: BoundConstant,
    pub lemma1: SuiteSummary,
    pub theorem1: SuiteSummary,
    pub corollary1: SuiteSummary,
    pub js_decomposition: SuiteSummary,
    pub change_of_measure: SuiteSummary,
    /// Largest `|slack|` at the optimal witness.
    pub attainment_max_abs: f64,
    pub attainment_instances: usize,
    /// Instances where the decomposed bound is below the joint one.
    pub relaxation_violations: usize,
    /// Smallest `corollary bound - theorem bound`.
    pub relaxation_min_gap: f64,
}

impl CertificationSummary {
    pub fn all_passed(&self) -> bool {
        self.lemma1.passed()
            && self.theorem1.passed()
            && self.corollary1.passed()
            && self.js_decomposition.passed()
            && self.change_of_measure.passed()
            && self.attainment_max_abs <= SLACK_TOLERANCE
            && self.relaxation_violations == 0
    }
}

fn weights<R: Rng + ?Sized>(rng: &mut R, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < zero_prob {
                    0.0
                } else {
                    -(1.0 - rng.random::<f64>()).ln()
                }
            })
            .collect();
        if w.iter().sum::<f64>() > 0.0 {
            return w;
        }
    }
}

/// Exponential weights with roughly a quarter of the cells zeroed.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, nx: usize, ny: usize) -> DiscreteJoint {
    DiscreteJoint::normalized(nx, ny, weights(rng, nx * ny, 0.25)).expect("positive weights")
}

/// Half of the environments are unstructured; the other half drift by a
/// fixed hidden map plus a random perturbation of random strength.
pub fn random_env<R: Rng + ?Sized>(rng: &mut R, cfg: &CertifyConfig) -> DiscreteEnv {
    let nx = rng.random_range(2..=cfg.max_nx.max(2));
    let ny = rng.random_range(2..=cfg.max_ny.max(2));
    let m = rng.random_range(2..=cfg.max_sources.max(2));
    let family = candidate_family(nx, FAMILY_LIMIT, rng);
    let domains = if rng.random::<bool>() {
        (0..=m).map(|_| random_joint(rng, nx, ny)).collect()
    } else {
        let hidden = family[rng.random_range(0..family.len())].clone();
        let eps: f64 = rng.random::<f64>() * 0.5;
        let mut cur = random_joint(rng, nx, ny);
        let mut out = vec![cur.clone()];
        for _ in 0..m {
            let moved = apply_map(&cur, &hidden).expect("shapes agree");
            let noise = random_joint(rng, nx, ny);
            let mix = moved
                .probabilities()
                .iter()
                .zip(noise.probabilities())
                .map(|(a, b)| (1.0 - eps) * a + eps * b)
                .collect();
            cur = DiscreteJoint::normalized(nx, ny, mix).expect("convex mixture");
            out.push(cur.clone());
        }
        out
    };
    DiscreteEnv::new(domains, family).expect("consistent shapes")
}

/// Random classifier with either a 0-1 loss or a random loss table.
pub fn random_loss<R: Rng + ?Sized>(rng: &mut R, nx: usize, ny: usize) -> LossSpec {
    let h = (0..nx).map(|_| rng.random_range(0..ny)).collect();
    if rng.random::<bool>() {
        LossSpec::zero_one(h, ny).expect("valid table")
    } else {
        let scale = rng.random_range(0.5..3.0);
        let loss = (0..ny)
            .map(|_| (0..ny).map(|_| rng.random::<f64>() * scale).collect())
            .collect();
        LossSpec::new(h, loss).expect("finite table")
    }
}

struct EnvOutcome {
    theorem: f64,
    corollary: f64,
    relax_gap: f64,
}

/// Runs all five suites with the given bound constant.
pub fn certify(cfg: &CertifyConfig, constant: BoundConstant) -> Result<CertificationSummary> {
    let w = cfg.workers;
    let lemma: Vec<Result<f64>> = map_indexed(cfg.instances, w, |k| {
        let mut rng = rng_from(cfg.seed, &[SUITE_LEMMA, k as u64]);
        let env = random_env(&mut rng, cfg);
        let g: MappingFn =
            env.candidate_maps()[rng.random_range(0..env.candidate_maps().len())].clone();
        let h = random_loss(&mut rng, env.nx(), env.ny());
        Ok(verify_lemma1(&env, &g, &h, constant)?.slack)
    });
    let env_runs: Vec<Result<EnvOutcome>> = map_indexed(cfg.instances, w, |k| {
        let mut rng = rng_from(cfg.seed, &[SUITE_THEOREM, k as u64]);
        let env = random_env(&mut rng, cfg);
        let h = random_loss(&mut rng, env.nx(), env.ny());
        let rep = find_g_star(&env)?;
        let thm = verify_theorem1(&env, &rep, &h, constant)?;
        let cor = verify_corollary1(&env, &rep, &h, constant)?;
        Ok(EnvOutcome {
            theorem: thm.slack,
            corollary: cor.slack.slack,
            relax_gap: cor.slack.bound - cor.theorem_bound,
        })
    });
    let decomp: Vec<Result<f64>> = map_indexed(cfg.decomposition_instances, w, |k| {
        let mut rng = rng_from(cfg.seed, &[SUITE_DECOMP, k as u64]);
        let nx = rng.random_range(1..=cfg.max_nx.max(1));
        let ny = rng.random_range(2..=cfg.max_ny.max(2));
        js_decomposition_gap(
            &random_joint(&mut rng, nx, ny),
            &random_joint(&mut rng, nx, ny),
        )
    });
    let com: Vec<Result<(f64, Option<f64>)>> = map_indexed(cfg.instances, w, |k| {
        let mut rng = rng_from(cfg.seed, &[SUITE_COM, k as u64]);
        let n = rng.random_range(1..=cfg.max_nx.max(1) * cfg.max_ny.max(1));
        let p = DiscreteJoint::normalized(1, n, weights(&mut rng, n, 0.2)).expect("weights");
        let p = p.probabilities().to_vec();
        // q lives on the support of p; every other instance shares it exactly
        let full = k % 2 == 0;
        let q_w: Vec<f64> = loop {
            let w: Vec<f64> = p
                .iter()
                .map(|a| {
                    if *a == 0.0 || (!full && rng.random::<f64>() < 0.2) {
                        0.0
                    } else {
                        -(1.0 - rng.random::<f64>()).ln()
                    }
                })
                .collect();
            if w.iter().sum::<f64>() > 0.0 {
                break w;
            }
        };
        let s: f64 = q_w.iter().sum();
        let q: Vec<f64> = q_w.iter().map(|v| v / s).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lambda = if k % 10 == 1 {
            0.0
        } else {
            rng.random_range(-4.0..4.0)
        };
        let r = verify_change_of_measure(&p, &q, &f, lambda)?;
        Ok((r.slack, r.attainment_slack))
    });

    let lemma = lemma.into_iter().collect::<Result<Vec<_>>>()?;
    let env_runs = env_runs.into_iter().collect::<Result<Vec<_>>>()?;
    let decomp = decomp.into_iter().collect::<Result<Vec<_>>>()?;
    let com = com.into_iter().collect::<Result<Vec<_>>>()?;
    let attain: Vec<f64> = com.iter().filter_map(|c| c.1).collect();
    Ok(CertificationSummary {
        constant,
        lemma1: SuiteSummary::from_slacks(lemma),
        theorem1: SuiteSummary::from_slacks(env_runs.iter().map(|e| e.theorem)),
        corollary1: SuiteSummary::from_slacks(env_runs.iter().map(|e| e.corollary)),
        js_decomposition: SuiteSummary::from_slacks(decomp),
        change_of_measure: SuiteSummary::from_slacks(com.iter().map(|c| c.0)),
        attainment_max_abs: attain.iter().map(|v| v.abs()).fold(0.0, f64::max),
        attainment_instances: attain.len(),
        relaxation_violations: env_runs
            .iter()
            .filter(|e| !(e.relax_gap >= -SLACK_TOLERANCE))
            .count(),
        relaxation_min_gap: env_runs
            .iter()
            .map(|e| e.relax_gap)
            .fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CertifyConfig {
        CertifyConfig {
            instances: 60,
            decomposition_instances: 300,
            ..CertifyConfig::default()
        }
    }

    #[test]
    fn corrected_constant_certifies() {
        let s = certify(&small(), BoundConstant::Corrected).unwrap();
        assert!(s.all_passed(), "{s:#?}");
        assert!(s.attainment_instances > 0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let a = certify(&small(), BoundConstant::Published).unwrap();
        let b = certify(
            &CertifyConfig {
                workers: 3,
                ..small()
            },
            BoundConstant::Published,
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
