//! Exact finite-distribution laboratory.
//!
//! Joint distributions over a finite feature set `X = {0..nx}` and label set
//! `Y = {0..ny}`, deterministic feature maps, KL/JS divergences (nats), and
//! checkers that evaluate both sides of the target-risk bounds on concrete
//! instances.

mod bounds;
mod certify;
mod consistency;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bounds::{
    js_decomposition_gap, lemma1_bound, theorem1_bound, verify_change_of_measure,
    verify_corollary1, verify_lemma1, verify_theorem1, BoundConstant, ChangeOfMeasure,
    CorollaryReport, SlackReport, SLACK_TOLERANCE,
};
pub use certify::{
    certify, random_env, random_joint, random_loss, CertificationSummary, CertifyConfig,
    SuiteSummary,
};
pub use consistency::{candidate_family, find_g_star, pair_divergences, ConsistencyReport};

const SUM_TOLERANCE: f64 = 1e-12;

/// `p[x][y]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct DiscreteJoint {
    nx: usize,
    ny: usize,
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    p: Vec<Vec<f64>>,
}

impl TryFrom<JointRepr> for DiscreteJoint {
    type Error = Error;
    fn try_from(r: JointRepr) -> Result<Self> {
        DiscreteJoint::from_rows(r.p)
    }
}

impl From<DiscreteJoint> for JointRepr {
    fn from(d: DiscreteJoint) -> Self {
        JointRepr {
            p: d.p.chunks(d.ny).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl DiscreteJoint {
    pub fn new(nx: usize, ny: usize, p: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || p.len() != nx * ny {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for a {nx}x{ny} joint",
                p.len()
            )));
        }
        check_probabilities(&p)?;
        Ok(DiscreteJoint { nx, ny, p })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ny) {
            return Err(Error::InvalidDistribution(
                "ragged probability matrix".into(),
            ));
        }
        DiscreteJoint::new(nx, ny, rows.concat())
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(nx: usize, ny: usize, mut w: Vec<f64>) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) || w.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be non-negative with a positive finite sum".into(),
            ));
        }
        w.iter_mut().for_each(|v| *v /= s);
        DiscreteJoint::new(nx, ny, w)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.ny + y]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn label_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ny];
        for row in self.p.chunks(self.ny) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn feature_marginal(&self) -> Vec<f64> {
        self.p.chunks(self.ny).map(|r| r.iter().sum()).collect()
    }

    /// `p(x | y)`, or `None` when label `y` has no mass.
    pub fn conditional_given_label(&self, y: usize) -> Option<Vec<f64>> {
        let col: Vec<f64> = (0..self.nx).map(|x| self.get(x, y)).collect();
        let mass: f64 = col.iter().sum();
        (mass > 0.0).then(|| col.into_iter().map(|v| v / mass).collect())
    }

    fn same_shape(&self, other: &DiscreteJoint) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(Error::Shape(format!(
                "joints of shape {}x{} and {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "entry {v} is not a probability"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {s}"
        )));
    }
    Ok(())
}

/// Deterministic map on `X`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MappingFn {
    table: Vec<usize>,
}

impl MappingFn {
    pub fn new(table: Vec<usize>) -> Result<Self> {
        let n = table.len();
        if let Some(v) = table.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidDistribution(format!(
                "map sends a point to {v} outside 0..{n}"
            )));
        }
        Ok(MappingFn { table })
    }

    pub fn identity(nx: usize) -> Self {
        MappingFn {
            table: (0..nx).collect(),
        }
    }

    pub fn constant(nx: usize, to: usize) -> Result<Self> {
        MappingFn::new(vec![to; nx])
    }

    /// `x -> (x + k) mod nx`.
    pub fn shift(nx: usize, k: usize) -> Self {
        MappingFn {
            table: (0..nx).map(|x| (x + k) % nx).collect(),
        }
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    pub fn domain_size(&self) -> usize {
        self.table.len()
    }
}

/// Ordered sources followed by one target, plus the candidate map family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEnv {
    domains: Vec<DiscreteJoint>,
    candidate_maps: Vec<MappingFn>,
}

impl DiscreteEnv {
    pub fn new(domains: Vec<DiscreteJoint>, candidate_maps: Vec<MappingFn>) -> Result<Self> {
        if domains.len() < 3 {
            return Err(Error::Config(format!(
                "an environment needs at least two sources and a target, got {} domains",
                domains.len()
            )));
        }
        let (nx, ny) = (domains[0].nx, domains[0].ny);
        if domains.iter().any(|d| d.nx != nx || d.ny != ny) {
            return Err(Error::Shape("all domains must share nx and ny".into()));
        }
        if candidate_maps.iter().any(|g| g.domain_size() != nx) {
            return Err(Error::Shape(format!(
                "candidate maps must be defined on {nx} points"
            )));
        }
        Ok(DiscreteEnv {
            domains,
            candidate_maps,
        })
    }

    pub fn domains(&self) -> &[DiscreteJoint] {
        &self.domains
    }

    /// `D_1..D_m`.
    pub fn sources(&self) -> &[DiscreteJoint] {
        &self.domains[..self.domains.len() - 1]
    }

    pub fn target(&self) -> &DiscreteJoint {
        self.domains.last().expect("validated non-empty")
    }

    /// Number of source domains `m`.
    pub fn num_sources(&self) -> usize {
        self.domains.len() - 1
    }

    pub fn candidate_maps(&self) -> &[MappingFn] {
        &self.candidate_maps
    }

    pub fn nx(&self) -> usize {
        self.domains[0].nx
    }

    pub fn ny(&self) -> usize {
        self.domains[0].ny
    }

    /// Re-validates after deserialization.
    pub fn validated(self) -> Result<Self> {
        DiscreteEnv::new(self.domains, self.candidate_maps)
    }
}

/// Classifier table `h: X -> Y` and loss matrix `loss[prediction][label]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub h: Vec<usize>,
    pub loss: Vec<Vec<f64>>,
}

impl LossSpec {
    pub fn new(h: Vec<usize>, loss: Vec<Vec<f64>>) -> Result<Self> {
        let ny = loss.len();
        if ny == 0 || loss.iter().any(|r| r.len() != ny) {
            return Err(Error::Shape(
                "loss must be a square label-by-label matrix".into(),
            ));
        }
        if loss.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution(
                "loss values must be finite".into(),
            ));
        }
        if h.iter().any(|&y| y >= ny) {
            return Err(Error::Shape(format!("classifier predicts outside 0..{ny}")));
        }
        Ok(LossSpec { h, loss })
    }

    pub fn zero_one(h: Vec<usize>, ny: usize) -> Result<Self> {
        let loss = (0..ny)
            .map(|a| (0..ny).map(|b| if a == b { 0.0 } else { 1.0 }).collect())
            .collect();
        LossSpec::new(h, loss)
    }

    /// `G = max(loss) - min(loss)`.
    pub fn g_range(&self) -> f64 {
        let it = self.loss.iter().flatten();
        let max = it.clone().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = it.copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    fn check(&self, d: &DiscreteJoint) -> Result<()> {
        if self.h.len() != d.nx || self.loss.len() != d.ny {
            return Err(Error::Shape(format!(
                "loss spec covers {}x{}, joint is {}x{}",
                self.h.len(),
                self.loss.len(),
                d.nx,
                d.ny
            )));
        }
        Ok(())
    }
}

/// `sum p log(p / q)` over vectors; `0 log 0 = 0`.
pub fn kl_vec(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let mut s = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::AbsoluteContinuity { index: i, p: a });
            }
            s += a * (a / b).ln();
        }
    }
    Ok(s)
}

/// `0.5 KL(p || m) + 0.5 KL(q || m)` with `m = (p + q) / 2`.
pub fn js_vec(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(0.5 * kl_vec(p, &m)? + 0.5 * kl_vec(q, &m)?)
}

pub fn kl(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    p.same_shape(q)?;
    kl_vec(&p.p, &q.p)
}

pub fn js(p: &DiscreteJoint, q: &DiscreteJoint) -> Result<f64> {
    p.same_shape(q)?;
    js_vec(&p.p, &q.p)
}

/// Pushforward on the feature: `p'[g(x)][y] += p[x][y]`.
pub fn apply_map(d: &DiscreteJoint, g: &MappingFn) -> Result<DiscreteJoint> {
    if g.domain_size() != d.nx {
        return Err(Error::Shape(format!(
            "map on {} points applied to nx = {}",
            g.domain_size(),
            d.nx
        )));
    }
    let mut p = vec![0.0; d.p.len()];
    for x in 0..d.nx {
        let to = g.apply(x);
        for y in 0..d.ny {
            p[to * d.ny + y] += d.get(x, y);
        }
    }
    Ok(DiscreteJoint {
        nx: d.nx,
        ny: d.ny,
        p,
    })
}

/// `sum_{x,y} p[x][y] loss(h(x), y)`.
pub fn risk(spec: &LossSpec, d: &DiscreteJoint) -> Result<f64> {
    spec.check(d)?;
    let mut r = 0.0;
    for x in 0..d.nx {
        let row = &spec.loss[spec.h[x]];
        for y in 0..d.ny {
            r += d.get(x, y) * row[y];
        }
    }
    Ok(r)
}
