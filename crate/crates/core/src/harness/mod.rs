//! Experiment orchestration: hyperparameter search over seeded trials,
//! model selection, domain-count/distance sweeps, the interpolation study,
//! and Markdown/CSV/JSON reports.

mod report;
mod run;
mod search;
mod sweep;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::IndexMode;
use crate::error::{Error, Result};
use crate::synthetic_data::{DatasetKind, DomainData, EnvironmentSpec};
use crate::tensor_nn::Backbone;

pub use report::{
    emit_report, mean, parse_csv, render_csv, render_markdown, sample_std, Cell, CsvRow, Report,
    ReportFiles, Summary,
};
pub use run::{evaluate_accuracy, run_single, train_model, RunOutcome, TrainedModel};
pub use search::{random_search, select, SearchConfig, SearchResult, SelectionStrategy, Trial};
pub use sweep::{
    run_interpolation_study, run_sweep, search_report, Series, SweepAxis, SweepConfig,
    TargetPosition,
};

/// Train/validation ratio applied to every source domain.
pub const TRAIN_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    DPNets,
    Erm,
    /// ERM on the final `k` source domains only.
    ErmRecent(usize),
    /// ERM with the domain index as input.
    ErmIndex(IndexMode),
    /// Prototypical network with support and query from the same domain.
    ProtoVanilla,
}

impl Algorithm {
    pub fn id(self) -> String {
        match self {
            Algorithm::DPNets => "dpnets".into(),
            Algorithm::Erm => "erm".into(),
            Algorithm::ErmRecent(k) => format!("erm-{k}"),
            Algorithm::ErmIndex(IndexMode::ScalarConcat) => "erm-scalar".into(),
            Algorithm::ErmIndex(IndexMode::OneHotConcat) => "erm-onehot".into(),
            Algorithm::ErmIndex(IndexMode::OuterProduct) => "erm-outer".into(),
            Algorithm::ErmIndex(IndexMode::None) => "erm".into(),
            Algorithm::ProtoVanilla => "proto".into(),
        }
    }

    /// Row label for tables.
    pub fn label(self) -> String {
        match self {
            Algorithm::DPNets => "DPNets".into(),
            Algorithm::Erm | Algorithm::ErmIndex(IndexMode::None) => "ERM".into(),
            Algorithm::ErmRecent(k) => format!("ERM-{k}"),
            Algorithm::ErmIndex(IndexMode::ScalarConcat) => "ERM + scalar index".into(),
            Algorithm::ErmIndex(IndexMode::OneHotConcat) => "ERM + one-hot index".into(),
            Algorithm::ErmIndex(IndexMode::OuterProduct) => "ERM + outer-product index".into(),
            Algorithm::ProtoVanilla => "Prototypical".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "dpnets" => Algorithm::DPNets,
            "erm" => Algorithm::Erm,
            "proto" | "prototypical" => Algorithm::ProtoVanilla,
            "erm-scalar" => Algorithm::ErmIndex(IndexMode::ScalarConcat),
            "erm-onehot" => Algorithm::ErmIndex(IndexMode::OneHotConcat),
            "erm-outer" => Algorithm::ErmIndex(IndexMode::OuterProduct),
            other => match other.strip_prefix("erm-").and_then(|k| k.parse().ok()) {
                Some(k) if k > 0 => Algorithm::ErmRecent(k),
                _ => return Err(Error::Config(format!("unknown algorithm `{other}`"))),
            },
        })
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Algorithm::parse)
            .collect()
    }

    pub fn is_prototype_based(self) -> bool {
        matches!(self, Algorithm::DPNets | Algorithm::ProtoVanilla)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Algorithm::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One draw from the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HParams {
    pub lr: f64,
    pub steps: usize,
    pub n_b: usize,
    /// Feature extractor widths. Empty means a single linear layer.
    pub hidden: Vec<usize>,
    /// Embedding width used by prototype models when `hidden` is empty.
    pub linear_embed_dim: usize,
}

impl HParams {
    /// Prototype encoders: the feature extractor itself, whose last width is
    /// the embedding.
    pub fn proto_backbone(&self) -> Backbone {
        match self.hidden.split_last() {
            Some((last, rest)) => Backbone::new(rest.to_vec(), *last),
            None => Backbone::new(vec![], self.linear_embed_dim),
        }
    }

    /// ERM: feature extractor followed by a linear classifier.
    pub fn erm_hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// `2 K N_B`, the number of samples one prototype episode sees.
    pub fn erm_batch_size(&self, num_classes: usize) -> usize {
        2 * num_classes * self.n_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HParamSpace {
    pub lr_min: f64,
    pub lr_max: f64,
    pub steps: Vec<usize>,
    pub n_b: Vec<usize>,
    pub hidden: Vec<Vec<usize>>,
    pub linear_embed_dim: usize,
}

impl HParamSpace {
    pub fn for_dataset(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::RotatedMnist => HParamSpace {
                lr_min: 1e-4,
                lr_max: 1e-2,
                steps: vec![500, 1000, 2000],
                n_b: vec![5, 10, 16],
                hidden: vec![vec![128], vec![256, 128]],
                linear_embed_dim: 64,
            },
            _ => HParamSpace {
                lr_min: 1e-4,
                lr_max: 1e-1,
                steps: vec![500, 1000, 2000],
                n_b: vec![8, 16, 32],
                hidden: vec![vec![]],
                linear_embed_dim: 8,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::Config(format!(
                "bad learning-rate range [{}, {}]",
                self.lr_min, self.lr_max
            )));
        }
        if self.steps.is_empty() || self.n_b.is_empty() || self.hidden.is_empty() {
            return Err(Error::Config(
                "every hyperparameter needs at least one choice".into(),
            ));
        }
        if self.n_b.contains(&0)
            || self.linear_embed_dim == 0
            || self.hidden.iter().flatten().any(|&w| w == 0)
        {
            return Err(Error::Config("widths and N_B must be positive".into()));
        }
        Ok(())
    }

    /// Log-uniform learning rate, uniform choices elsewhere.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HParams {
        let (a, b) = (self.lr_min.ln(), self.lr_max.ln());
        let lr = if a == b {
            self.lr_min
        } else {
            rng.random_range(a..b).exp()
        };
        HParams {
            lr,
            steps: self.steps[rng.random_range(0..self.steps.len())],
            n_b: self.n_b[rng.random_range(0..self.n_b.len())],
            hidden: self.hidden[rng.random_range(0..self.hidden.len())].clone(),
            linear_embed_dim: self.linear_embed_dim,
        }
    }
}

/// A generated domain sequence with a designated target.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub spec: EnvironmentSpec,
    domains: Vec<DomainData>,
    target: usize,
}

impl Environment {
    /// The last domain is the target.
    pub fn new(spec: EnvironmentSpec, domains: Vec<DomainData>) -> Result<Self> {
        if domains.len() < 3 {
            return Err(Error::Config(format!(
                "need at least 3 domains, got {}",
                domains.len()
            )));
        }
        let target = domains.len() - 1;
        Ok(Environment {
            spec,
            domains,
            target,
        })
    }

    pub fn generate(spec: &EnvironmentSpec, cache_dir: Option<&std::path::Path>) -> Result<Self> {
        Environment::new(
            spec.clone(),
            crate::synthetic_data::generate_cached(spec, cache_dir)?,
        )
    }

    /// Moves the target to the middle domain (lower median for even counts).
    pub fn with_middle_target(mut self) -> Self {
        self.target = (self.domains.len() - 1) / 2;
        self
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &DomainData {
        &self.domains[self.target]
    }

    pub fn domains(&self) -> &[DomainData] {
        &self.domains
    }

    /// Every non-target domain, in sequence order.
    pub fn sources(&self) -> Vec<DomainData> {
        self.domains
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.target)
            .map(|(_, d)| d.clone())
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.domains[0].num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.domains[0].feature_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn algorithm_ids_round_trip() {
        for a in [
            Algorithm::DPNets,
            Algorithm::Erm,
            Algorithm::ErmRecent(2),
            Algorithm::ErmIndex(IndexMode::ScalarConcat),
            Algorithm::ErmIndex(IndexMode::OneHotConcat),
            Algorithm::ErmIndex(IndexMode::OuterProduct),
            Algorithm::ProtoVanilla,
        ] {
            assert_eq!(Algorithm::parse(&a.id()).unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<Algorithm>(&json).unwrap(), a);
        }
        assert!(Algorithm::parse("erm-0").is_err());
        assert!(Algorithm::parse("mldg").is_err());
        assert_eq!(Algorithm::parse_list("dpnets, erm").unwrap().len(), 2);
    }

    #[test]
    fn space_draws_are_valid() {
        for kind in [DatasetKind::EvolCircle, DatasetKind::RotatedMnist] {
            let space = HParamSpace::for_dataset(kind);
            space.validate().unwrap();
            let mut rng = rng_from(0, &[]);
            for _ in 0..500 {
                let h = space.sample(&mut rng);
                assert!(h.lr >= space.lr_min && h.lr <= space.lr_max);
                assert!(space.steps.contains(&h.steps));
                assert!(space.n_b.contains(&h.n_b));
                assert!(space.hidden.contains(&h.hidden));
            }
        }
    }

    #[test]
    fn backbones_from_hparams() {
        let mut h = HParamSpace::for_dataset(DatasetKind::EvolCircle).sample(&mut rng_from(1, &[]));
        assert_eq!(h.proto_backbone(), Backbone::new(vec![], 8));
        h.hidden = vec![256, 128];
        assert_eq!(h.proto_backbone(), Backbone::new(vec![256], 128));
        assert_eq!(h.erm_batch_size(10), 20 * h.n_b);
    }

    #[test]
    fn middle_target() {
        let mut spec = EnvironmentSpec::new(DatasetKind::RotatedCloud, 0);
        spec.num_domains = 9;
        spec.samples_per_domain = 10;
        let env = Environment::generate(&spec, None).unwrap();
        assert_eq!(env.target_index(), 8);
        let mid = env.with_middle_target();
        assert_eq!(mid.target_index(), 4);
        assert_eq!(mid.sources().len(), 8);
        assert!(mid.sources().iter().all(|d| d.index() != 4));
    }
}
