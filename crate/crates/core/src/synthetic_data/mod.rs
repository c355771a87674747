//! Evolving-domain datasets.
//!
//! Every generator returns the full ordered sequence of domains; by
//! convention the last domain is the held-out target and is never used for
//! training.

mod cache;
mod generators;
mod idx;
mod rotate;
mod split;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_nn::Mat;

pub use cache::{cache_key, generate_cached, read_jsonl, write_jsonl};
pub use generators::{
    gen_evolcircle, gen_rotated_cloud, gen_rplate, generate, load_rmnist, rotate_2d, rplate_label,
};
pub use idx::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use rotate::rotate_image;
pub use split::split_train_val;

/// Smallest per-class count a domain must be able to hold.
pub const MIN_SUPPORT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Sample { x, y }
    }
}

/// Labeled samples from one domain of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainData {
    index: usize,
    num_classes: usize,
    samples: Vec<Sample>,
}

impl DomainData {
    /// Validates non-emptiness, label range, class coverage, a shared feature
    /// dimension and finite features.
    pub fn new(index: usize, samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config(format!("domain {index} has no samples")));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let dim = samples[0].x.len();
        let mut seen = vec![false; num_classes];
        for (j, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::Shape(format!(
                    "domain {index} sample {j} has {} features, expected {dim}",
                    s.x.len()
                )));
            }
            if s.y >= num_classes {
                return Err(Error::Config(format!(
                    "domain {index} sample {j} has label {} >= {num_classes}",
                    s.y
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "domain {index} sample {j} has a non-finite feature"
                )));
            }
            seen[s.y] = true;
        }
        if let Some(k) = seen.iter().position(|&s| !s) {
            return Err(Error::Config(format!(
                "domain {index} has no sample of class {k}"
            )));
        }
        Ok(DomainData {
            index,
            num_classes,
            samples,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].x.len()
    }

    /// Sample positions grouped by label.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (j, s) in self.samples.iter().enumerate() {
            out[s.y].push(j);
        }
        out
    }

    pub fn features(&self) -> Mat {
        Mat::from_rows(
            &self
                .samples
                .iter()
                .map(|s| s.x.as_slice())
                .collect::<Vec<_>>(),
        )
        .expect("validated feature dimension")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    #[serde(alias = "evolcircle")]
    EvolCircle,
    #[serde(alias = "rplate")]
    RPlate,
    RotatedCloud,
    #[serde(alias = "rmnist")]
    RotatedMnist,
}

impl DatasetKind {
    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::RotatedMnist => 10,
            _ => 2,
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            DatasetKind::RotatedMnist => 28 * 28,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::EvolCircle => "evolcircle",
            DatasetKind::RPlate => "rplate",
            DatasetKind::RotatedCloud => "rotated-cloud",
            DatasetKind::RotatedMnist => "rmnist",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "evolcircle" | "evol-circle" => Ok(DatasetKind::EvolCircle),
            "rplate" | "r-plate" => Ok(DatasetKind::RPlate),
            "rotated-cloud" | "rotatedcloud" | "cloud" => Ok(DatasetKind::RotatedCloud),
            "rmnist" | "rotated-mnist" | "rotatedmnist" => Ok(DatasetKind::RotatedMnist),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

/// Kind-specific generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtraParams {
    /// EvolCircle: radius of the half circle carrying the domain centers.
    pub radius: f64,
    /// EvolCircle: class centers sit at `radius -/+ radial_offset`.
    pub radial_offset: f64,
    /// EvolCircle: isotropic standard deviation of each class.
    pub sigma: f64,
    /// RPlate: rotation of the labeling boundary between domains (degrees).
    pub boundary_step_deg: f64,
    /// RotatedCloud: class `k` blob center is `(cloud_center[0], +/- cloud_center[1])`.
    pub cloud_center: [f64; 2],
    pub cloud_sigma: f64,
    /// Rotated MNIST: source IDX files.
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
}

impl Default for ExtraParams {
    fn default() -> Self {
        ExtraParams {
            radius: 2.0,
            radial_offset: 0.5,
            sigma: 0.35,
            boundary_step_deg: 12.0,
            cloud_center: [1.5, 0.8],
            cloud_sigma: 0.4,
            mnist_images: None,
            mnist_labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub kind: DatasetKind,
    /// Source domains plus the target.
    pub num_domains: usize,
    pub samples_per_domain: usize,
    /// Degrees between consecutive domains (RotatedCloud, rotated MNIST).
    pub domain_distance: f64,
    pub seed: u64,
    #[serde(default)]
    pub extra: ExtraParams,
}

impl EnvironmentSpec {
    pub fn new(kind: DatasetKind, seed: u64) -> Self {
        let (num_domains, samples_per_domain) = match kind {
            DatasetKind::EvolCircle | DatasetKind::RPlate => (30, 220),
            DatasetKind::RotatedCloud | DatasetKind::RotatedMnist => (12, 200),
        };
        EnvironmentSpec {
            kind,
            num_domains,
            samples_per_domain,
            domain_distance: 10.0,
            seed,
            extra: ExtraParams::default(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.kind.num_classes()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 3 {
            return Err(Error::Config(format!(
                "need at least 3 domains (two sources and a target), got {}",
                self.num_domains
            )));
        }
        let min = self.num_classes() * MIN_SUPPORT;
        if self.samples_per_domain < min {
            return Err(Error::Config(format!(
                "samples_per_domain = {} is below {min} ({} classes x {MIN_SUPPORT})",
                self.samples_per_domain,
                self.num_classes()
            )));
        }
        if !self.domain_distance.is_finite() {
            return Err(Error::Config("domain_distance must be finite".into()));
        }
        let e = &self.extra;
        if !(e.sigma >= 0.0 && e.cloud_sigma >= 0.0 && e.radius.is_finite()) {
            return Err(Error::Config(
                "generator parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}
