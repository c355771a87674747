//! Bound checkers. Each returns both sides of an inequality so callers can
//! inspect the slack instead of getting a bare boolean.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use super::{
    apply_map, js, js_vec, kl_vec, risk, ConsistencyReport, DiscreteEnv, DiscreteJoint, LossSpec,
    MappingFn,
};
use crate::error::{Error, Result};

/// A bound holds on an instance when its slack is at least `-SLACK_TOLERANCE`.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// Multiplier `c` in `R_t <= R_s + G c sqrt(js)`.
///
/// `Published` is `1/sqrt(2)`. `Corrected` is `sqrt(2)`, which is what
/// Pinsker's inequality applied to both halves of the mixture actually
/// yields: `TV(P, Q) <= sqrt(2 js(P, Q))`. Two point masses with a 0-1 loss
/// have a risk gap of 1 and `js = ln 2`, which the smaller constant bounds
/// by only `sqrt(ln 2 / 2) = 0.589`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundConstant {
    Published,
    Corrected,
}

impl BoundConstant {
    pub fn factor(self) -> f64 {
        match self {
            BoundConstant::Published => FRAC_1_SQRT_2,
            BoundConstant::Corrected => SQRT_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundConstant::Published => "published",
            BoundConstant::Corrected => "corrected",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(BoundConstant::Published),
            "corrected" => Ok(BoundConstant::Corrected),
            other => Err(Error::Config(format!("unknown bound constant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub bound: f64,
    /// The true target risk.
    pub risk: f64,
    /// `bound - risk`.
    pub slack: f64,
}

impl SlackReport {
    fn new(bound: f64, risk: f64) -> Self {
        SlackReport {
            bound,
            risk,
            slack: bound - risk,
        }
    }

    pub fn holds(&self) -> bool {
        self.slack >= -SLACK_TOLERANCE
    }
}

/// `R_s + G c sqrt(js)`.
pub fn lemma1_bound(synthetic_risk: f64, g_range: f64, js: f64, constant: BoundConstant) -> f64 {
    synthetic_risk + g_range * constant.factor() * js.max(0.0).sqrt()
}

/// `R_s + G c / sqrt(n) (sqrt(sum d) + sqrt(n lambda))` over `n = m - 1`
/// source-pair divergences.
pub fn theorem1_bound(
    synthetic_risk: f64,
    g_range: f64,
    divergences: &[f64],
    lambda: f64,
    constant: BoundConstant,
) -> f64 {
    let n = divergences.len() as f64;
    let sum: f64 = divergences.iter().sum();
    synthetic_risk
        + g_range * constant.factor() / n.sqrt()
            * (sum.max(0.0).sqrt() + (n * lambda).max(0.0).sqrt())
}

fn synthetic_target(env: &DiscreteEnv, g: &MappingFn) -> Result<DiscreteJoint> {
    apply_map(&env.sources()[env.num_sources() - 1], g)
}

/// Target risk against the single-step bound through `g(D_m)`.
pub fn verify_lemma1(
    env: &DiscreteEnv,
    g: &MappingFn,
    h: &LossSpec,
    constant: BoundConstant,
) -> Result<SlackReport> {
    let synth = synthetic_target(env, g)?;
    let bound = lemma1_bound(
        risk(h, &synth)?,
        h.g_range(),
        js(&synth, env.target())?,
        constant,
    );
    Ok(SlackReport::new(bound, risk(h, env.target())?))
}

/// Target risk against the multi-domain bound, using `lambda_full` so the
/// consistency premise holds by construction.
pub fn verify_theorem1(
    env: &DiscreteEnv,
    report: &ConsistencyReport,
    h: &LossSpec,
    constant: BoundConstant,
) -> Result<SlackReport> {
    let synth = synthetic_target(env, &report.g_star)?;
    let bound = theorem1_bound(
        risk(h, &synth)?,
        h.g_range(),
        &report.divergences,
        report.lambda_full,
        constant,
    );
    Ok(SlackReport::new(bound, risk(h, env.target())?))
}

/// Label-marginal divergence, and the conditional divergences averaged under
/// each side's label marginal. Labels without mass on either side are skipped.
fn decomposition_terms(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<(f64, f64, f64)> {
    let (py, qy) = (p.label_marginal(), q.label_marginal());
    let term_i = js_vec(&py, &qy)?;
    let (mut ii, mut iii) = (0.0, 0.0);
    for y in 0..p.ny() {
        if let (Some(pc), Some(qc)) = (p.conditional_given_label(y), q.conditional_given_label(y)) {
            let d = js_vec(&pc, &qc)?;
            ii += py[y] * d;
            iii += qy[y] * d;
        }
    }
    Ok((term_i, ii, iii))
}

/// `[js(P(y)||Q(y)) + E_P(y) js(P(x|y)||Q(x|y)) + E_Q(y) js(P(x|y)||Q(x|y))] - js(P||Q)`.
pub fn js_decomposition_gap(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    let (a, b, c) = decomposition_terms(p, q)?;
    Ok(a + b + c - js(p, q)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub slack: SlackReport,
    pub theorem_bound: f64,
    /// Sums over source pairs of the label, `E_{D^g(y)}` conditional and
    /// `E_{D(y)}` conditional divergences.
    pub term_i: f64,
    pub term_ii: f64,
    pub term_iii: f64,
}

impl CorollaryReport {
    /// The decomposed bound is never tighter than the joint one.
    pub fn relaxation_holds(&self) -> bool {
        self.slack.bound >= self.theorem_bound - SLACK_TOLERANCE
    }
}

pub fn verify_corollary1(
    env: &DiscreteEnv,
    report: &ConsistencyReport,
    h: &LossSpec,
    constant: BoundConstant,
) -> Result<CorollaryReport> {
    let (mut ti, mut tii, mut tiii) = (0.0, 0.0, 0.0);
    for w in env.sources().windows(2) {
        let synth = apply_map(&w[0], &report.g_star)?;
        let (a, b, c) = decomposition_terms(&synth, &w[1])?;
        ti += a;
        tii += b;
        tiii += c;
    }
    let n = report.divergences.len() as f64;
    let synth = synthetic_target(env, &report.g_star)?;
    let rs = risk(h, &synth)?;
    let g = h.g_range();
    let bound = rs
        + g * constant.factor() / n.sqrt()
            * (ti.max(0.0).sqrt()
                + (n * report.lambda_full).max(0.0).sqrt()
                + tii.max(0.0).sqrt()
                + tiii.max(0.0).sqrt());
    Ok(CorollaryReport {
        slack: SlackReport::new(bound, risk(h, env.target())?),
        theorem_bound: theorem1_bound(rs, g, &report.divergences, report.lambda_full, constant),
        term_i: ti,
        term_ii: tii,
        term_iii: tiii,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfMeasure {
    /// `KL(Q||P) + log E_P exp(l (f - E_P f)) - l (E_Q f - E_P f)`.
    pub slack: f64,
    /// Slack at the optimal `f = (1/l) log(Q/P)`; `None` when `l = 0` or the
    /// supports differ.
    pub attainment_slack: Option<f64>,
}

fn com_slack(p: &[f64], q: &[f64], f: &[f64], lambda: f64) -> Result<f64> {
    let kl = kl_vec(q, p)?;
    let ep: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
    let eq: f64 = q.iter().zip(f).map(|(a, b)| a * b).sum();
    let terms: Vec<f64> = p
        .iter()
        .zip(f)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a.ln() + lambda * (b - ep))
        .collect();
    let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_mgf = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
    Ok(kl + log_mgf - lambda * (eq - ep))
}

/// Donsker-Varadhan style change of measure for `f: X -> R` and scale `lambda`.
pub fn verify_change_of_measure(
    p: &[f64],
    q: &[f64],
    f: &[f64],
    lambda: f64,
) -> Result<ChangeOfMeasure> {
    if p.len() != q.len() || p.len() != f.len() {
        return Err(Error::Shape("p, q and f must have equal length".into()));
    }
    let slack = com_slack(p, q, f, lambda)?;
    let same_support = p.iter().zip(q).all(|(a, b)| (*a > 0.0) == (*b > 0.0));
    let attainment_slack = if lambda != 0.0 && same_support {
        let witness: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(a, b)| if *a > 0.0 { (b / a).ln() / lambda } else { 0.0 })
            .collect();
        Some(com_slack(p, q, &witness, lambda)?)
    } else {
        None
    };
    Ok(ChangeOfMeasure {
        slack,
        attainment_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence_lab::{candidate_family, find_g_star};
    use crate::seed::rng_from;

    fn j(rows: &[&[f64]]) -> DiscreteJoint {
        DiscreteJoint::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn iid_env(m: usize) -> DiscreteEnv {
        let d = j(&[&[0.125, 0.25], &[0.375, 0.0], &[0.0625, 0.1875]]);
        DiscreteEnv::new(
            vec![d; m + 1],
            candidate_family(3, 256, &mut rng_from(0, &[])),
        )
        .unwrap()
    }

    #[test]
    fn exact_map_has_zero_slack() {
        let a = j(&[&[0.4, 0.1], &[0.2, 0.3]]);
        let s = MappingFn::shift(2, 1);
        let b = apply_map(&a, &s).unwrap();
        let env = DiscreteEnv::new(vec![a.clone(), b.clone(), a], vec![s.clone()]).unwrap();
        let h = LossSpec::zero_one(vec![1, 0], 2).unwrap();
        for c in [BoundConstant::Published, BoundConstant::Corrected] {
            assert_eq!(verify_lemma1(&env, &s, &h, c).unwrap().slack, 0.0);
        }
        let r = verify_lemma1(
            &iid_env(3),
            &MappingFn::identity(3),
            &h_three(),
            BoundConstant::Published,
        )
        .unwrap();
        assert_eq!(r.slack, 0.0);
    }

    fn h_three() -> LossSpec {
        LossSpec::zero_one(vec![1, 0, 1], 2).unwrap()
    }

    #[test]
    fn point_masses_break_the_published_constant() {
        let a = j(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b = j(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let env =
            DiscreteEnv::new(vec![a.clone(), a.clone(), b], vec![MappingFn::identity(2)]).unwrap();
        // h is right on D_m = a and wrong on the target
        let h = LossSpec::zero_one(vec![0, 0], 2).unwrap();
        let g = MappingFn::identity(2);
        let published = verify_lemma1(&env, &g, &h, BoundConstant::Published).unwrap();
        assert!((published.bound - (2f64.ln() / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(published.risk, 1.0);
        assert!(!published.holds());
        assert!(verify_lemma1(&env, &g, &h, BoundConstant::Corrected)
            .unwrap()
            .holds());
    }

    #[test]
    fn zero_divergence_theorem_and_corollary() {
        let env = iid_env(4);
        let rep = find_g_star(&env).unwrap();
        let h = h_three();
        let t = verify_theorem1(&env, &rep, &h, BoundConstant::Published).unwrap();
        assert_eq!(t.bound, risk(&h, env.target()).unwrap());
        assert_eq!(t.slack, 0.0);
        let c = verify_corollary1(&env, &rep, &h, BoundConstant::Published).unwrap();
        assert_eq!((c.term_i, c.term_ii, c.term_iii), (0.0, 0.0, 0.0));
        assert!(c.relaxation_holds());
    }

    #[test]
    fn two_sources_reduce_to_one_pair() {
        let a = j(&[&[0.3, 0.2], &[0.1, 0.4]]);
        let b = j(&[&[0.25, 0.25], &[0.2, 0.3]]);
        let t = j(&[&[0.1, 0.3], &[0.3, 0.3]]);
        let env = DiscreteEnv::new(
            vec![a, b.clone(), t],
            candidate_family(2, 256, &mut rng_from(0, &[])),
        )
        .unwrap();
        let rep = find_g_star(&env).unwrap();
        assert_eq!(rep.divergences.len(), 1);
        let h = LossSpec::zero_one(vec![0, 1], 2).unwrap();
        for c in [BoundConstant::Published, BoundConstant::Corrected] {
            let thm = verify_theorem1(&env, &rep, &h, c).unwrap();
            let rs = risk(&h, &apply_map(&b, &rep.g_star).unwrap()).unwrap();
            let by_hand = rs
                + h.g_range() * c.factor() * (rep.divergences[0].sqrt() + rep.lambda_full.sqrt());
            assert!((thm.bound - by_hand).abs() < 1e-15);
            // the lemma through g* with js <= d_2 + lambda_full is never looser
            let lem = verify_lemma1(&env, &rep.g_star, &h, c).unwrap();
            assert!(lem.bound <= thm.bound + 1e-15);
        }
    }

    #[test]
    fn label_preserving_map_zeroes_term_i() {
        // dyadic entries keep every marginal sum exact
        let a = j(&[&[0.25, 0.125], &[0.125, 0.0], &[0.125, 0.375]]);
        let b = j(&[&[0.0, 0.25], &[0.375, 0.125], &[0.125, 0.125]]);
        let c = j(&[&[0.125, 0.0], &[0.25, 0.25], &[0.125, 0.25]]);
        let env = DiscreteEnv::new(
            vec![a, b, c.clone(), c],
            candidate_family(3, 256, &mut rng_from(0, &[])),
        )
        .unwrap();
        let rep = find_g_star(&env).unwrap();
        let cor = verify_corollary1(
            &env,
            &rep,
            &LossSpec::zero_one(vec![0, 1, 1], 2).unwrap(),
            BoundConstant::Published,
        )
        .unwrap();
        assert_eq!(cor.term_i, 0.0);
        assert!(cor.relaxation_holds());
    }

    #[test]
    fn theorem_bound_is_flat_in_m() {
        let d = 0.07;
        let lambda = 0.01;
        let mut prev = f64::INFINITY;
        for m in 2..40 {
            let b = theorem1_bound(0.2, 1.0, &vec![d; m - 1], lambda, BoundConstant::Published);
            assert!(b <= prev + 1e-12, "m = {m}");
            prev = b;
        }
    }

    #[test]
    fn decomposition_examples() {
        let p = j(&[&[0.1, 0.2], &[0.3, 0.4]]);
        assert_eq!(js_decomposition_gap(&p, &p).unwrap(), 0.0);
        let q = j(&[&[0.25, 0.1], &[0.15, 0.5]]);
        assert!(js_decomposition_gap(&p, &q).unwrap() >= -1e-12);
    }

    #[test]
    fn change_of_measure_examples() {
        let p = [0.2, 0.5, 0.3];
        let q = [0.1, 0.6, 0.3];
        let f = [1.0, -2.0, 0.5];
        let zero = verify_change_of_measure(&p, &q, &f, 0.0).unwrap();
        assert!((zero.slack - kl_vec(&q, &p).unwrap()).abs() < 1e-15);
        assert!(zero.attainment_slack.is_none());
        let same = verify_change_of_measure(&p, &p, &f, 1.7).unwrap();
        assert!(same.slack >= 0.0);
        assert!(same.attainment_slack.unwrap().abs() < 1e-12);
        let r = verify_change_of_measure(&p, &q, &f, -0.8).unwrap();
        assert!(r.slack >= 0.0);
        assert!(r.attainment_slack.unwrap().abs() <= 1e-9);
        assert!(matches!(
            verify_change_of_measure(&[1.0, 0.0], &[0.5, 0.5], &[0.0, 0.0], 1.0),
            Err(Error::AbsoluteContinuity { .. })
        ));
    }
}
