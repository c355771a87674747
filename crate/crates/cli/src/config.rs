//! Layered run configuration: defaults, then a JSON config file, then
//! `--set key=value` overrides and dedicated flags.

use std::path::{Path, PathBuf};

use edg_core::divergence_lab::BoundConstant;
use edg_core::harness::{Algorithm, HParamSpace, HParams, SelectionStrategy};
use edg_core::synthetic_data::{DatasetKind, EnvironmentSpec};
use edg_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Environment variable naming the default dataset cache directory.
pub const CACHE_ENV: &str = "EDG_CACHE_DIR";
/// Environment variable naming the directory holding the MNIST IDX files.
pub const MNIST_ENV: &str = "EDG_MNIST_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed for training, search and (unless `data_seed` is set) data.
    pub seed: u64,
    pub data_seed: Option<u64>,
    pub workers: usize,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub dataset: Option<DatasetKind>,
    pub num_domains: Option<usize>,
    pub samples_per_domain: Option<usize>,
    pub domain_distance: Option<f64>,
    pub mnist_dir: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub seeds: usize,
    pub selection: SelectionStrategy,
    /// Replaces the dataset's default search space.
    pub search_space: Option<HParamSpace>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub n_b: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub bound_constant: BoundConstant,
    pub instances: usize,
    pub decomposition_instances: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            data_seed: None,
            workers: 1,
            out: PathBuf::from("out"),
            cache_dir: None,
            dataset: None,
            num_domains: None,
            samples_per_domain: None,
            domain_distance: None,
            mnist_dir: None,
            algorithms: vec![Algorithm::DPNets, Algorithm::Erm],
            trials: 20,
            seeds: 5,
            selection: SelectionStrategy::OracleMaxQuery,
            search_space: None,
            lr: None,
            steps: None,
            n_b: None,
            hidden: None,
            bound_constant: BoundConstant::Corrected,
            instances: 1000,
            decomposition_instances: 10000,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted `key` inside `root`, creating objects on the way.
fn set_path(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad override key `{key}`")));
        }
        let part = part.replace('-', "_");
        if parts.peek().is_none() {
            cur.insert(part, value);
            return Ok(());
        }
        let slot = cur.entry(part).or_insert_with(|| Value::Object(Map::new()));
        if slot.is_null() {
            *slot = Value::Object(Map::new());
        }
        cur = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name an object field")))?;
    }
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

impl Config {
    /// Defaults, overlaid by `file`, then by each `key=value` in `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut value = serde_json::to_value(Config::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let parsed: Value = serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("config {} is not valid JSON: {e}", path.display()))
            })?;
            if !parsed.is_object() {
                return Err(Error::Config(format!(
                    "config {} must be a JSON object",
                    path.display()
                )));
            }
            merge(&mut value, parsed);
        }
        let mut layer = Map::new();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_path(&mut layer, k.trim(), parse_value(v.trim()))?;
        }
        merge(&mut value, Value::Object(layer));
        serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn dataset_or(&self, fallback: DatasetKind) -> DatasetKind {
        self.dataset.unwrap_or(fallback)
    }

    pub fn mnist_dir(&self) -> PathBuf {
        self.mnist_dir
            .clone()
            .or_else(|| std::env::var_os(MNIST_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    pub fn environment_spec(&self, kind: DatasetKind) -> Result<EnvironmentSpec> {
        let mut spec = EnvironmentSpec::new(kind, self.data_seed.unwrap_or(self.seed));
        if let Some(m) = self.num_domains {
            spec.num_domains = m;
        }
        if let Some(n) = self.samples_per_domain {
            spec.samples_per_domain = n;
        }
        if let Some(d) = self.domain_distance {
            spec.domain_distance = d;
        }
        if kind == DatasetKind::RotatedMnist {
            let dir = self.mnist_dir();
            spec.extra.mnist_images = Some(dir.join("train-images-idx3-ubyte"));
            spec.extra.mnist_labels = Some(dir.join("train-labels-idx1-ubyte"));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn search_space(&self, kind: DatasetKind) -> Result<HParamSpace> {
        let space = self
            .search_space
            .clone()
            .unwrap_or_else(|| HParamSpace::for_dataset(kind));
        space.validate()?;
        Ok(space)
    }

    /// Single-run hyperparameters: per-dataset defaults with overrides.
    pub fn hparams(&self, kind: DatasetKind) -> Result<HParams> {
        let space = HParamSpace::for_dataset(kind);
        let mut hp = match kind {
            DatasetKind::RotatedMnist => HParams {
                lr: 1e-3,
                steps: 1000,
                n_b: 10,
                hidden: vec![128],
                linear_embed_dim: space.linear_embed_dim,
            },
            _ => HParams {
                lr: 1e-2,
                steps: 1000,
                n_b: 16,
                hidden: vec![],
                linear_embed_dim: space.linear_embed_dim,
            },
        };
        if let Some(v) = self.lr {
            hp.lr = v;
        }
        if let Some(v) = self.steps {
            hp.steps = v;
        }
        if let Some(v) = self.n_b {
            hp.n_b = v;
        }
        if let Some(v) = &self.hidden {
            hp.hidden = v.clone();
        }
        if !(hp.lr > 0.0 && hp.lr.is_finite()) || hp.n_b == 0 || hp.hidden.contains(&0) {
            return Err(Error::Config(
                "lr must be positive and widths/N_B nonzero".into(),
            ));
        }
        Ok(hp)
    }
}
