use serde::{Deserialize, Serialize};

use super::report::Summary;
use super::run::{run_single, RunOutcome};
use super::{Algorithm, Environment, HParamSpace, HParams};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::seed::{derive_seed, rng_from};

const HPARAM_STREAM: u64 = 0x4850;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    /// Highest mean accuracy on held-out splits of the source domains.
    TrainingDomainValidation,
    /// Highest mean target accuracy. Peeks at the target; reported as such.
    OracleMaxQuery,
}

impl SelectionStrategy {
    pub fn label(self) -> &'static str {
        match self {
            SelectionStrategy::TrainingDomainValidation => "training-domain validation",
            SelectionStrategy::OracleMaxQuery => "oracle (max target accuracy)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "training-domain-validation" | "validation" | "tdv" => {
                Ok(SelectionStrategy::TrainingDomainValidation)
            }
            "oracle-max-query" | "oracle" => Ok(SelectionStrategy::OracleMaxQuery),
            other => Err(Error::Config(format!(
                "unknown selection strategy `{other}`"
            ))),
        }
    }
}

/// One hyperparameter draw evaluated over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub algorithm: Algorithm,
    pub index: usize,
    pub hparams: HParams,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
    /// First failure among the seeds; such trials are never selected.
    pub error: Option<String>,
}

impl Trial {
    pub fn completed(&self) -> bool {
        self.error.is_none() && !self.runs.is_empty()
    }

    pub fn target_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.target_accuracy).collect()
    }

    pub fn validation_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.validation_accuracy).collect()
    }

    fn score(&self, strategy: SelectionStrategy) -> f64 {
        let v = match strategy {
            SelectionStrategy::TrainingDomainValidation => self.validation_accuracies(),
            SelectionStrategy::OracleMaxQuery => self.target_accuracies(),
        };
        super::report::mean(&v)
    }
}

/// Best completed trial under `strategy`; ties go to the earlier trial.
pub fn select(trials: &[Trial], strategy: SelectionStrategy) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate().filter(|(_, t)| t.completed()) {
        let s = t.score(strategy);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_trials: 20,
            n_seeds: 5,
            master_seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub algorithm: Algorithm,
    pub trials: Vec<Trial>,
}

impl SearchResult {
    pub fn selected(&self, strategy: SelectionStrategy) -> Option<&Trial> {
        select(&self.trials, strategy).map(|i| &self.trials[i])
    }

    /// Target accuracy of the selected trial, mean and sample std over seeds.
    pub fn summary(&self, strategy: SelectionStrategy) -> Option<Summary> {
        self.selected(strategy)
            .map(|t| Summary::from_values(t.index, t.target_accuracies()))
    }
}

/// `n_trials` draws from `space`, each trained with `n_seeds` seeds. Trial
/// `t` uses the same hyperparameters and seeds for every algorithm.
pub fn random_search(
    space: &HParamSpace,
    algorithm: Algorithm,
    env: &Environment,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    space.validate()?;
    if cfg.n_trials == 0 || cfg.n_seeds == 0 {
        return Err(Error::Config(
            "n_trials and n_seeds must be positive".into(),
        ));
    }
    let hparams: Vec<HParams> = (0..cfg.n_trials)
        .map(|t| space.sample(&mut rng_from(cfg.master_seed, &[HPARAM_STREAM, t as u64])))
        .collect();
    let seed_of = |t: usize, s: usize| derive_seed(cfg.master_seed, &[t as u64, s as u64]);
    let jobs = cfg.n_trials * cfg.n_seeds;
    let results = map_indexed(jobs, cfg.workers, |j| {
        let (t, s) = (j / cfg.n_seeds, j % cfg.n_seeds);
        let out = run_single(algorithm, &hparams[t], env, seed_of(t, s));
        match &out {
            Ok(r) => log::info!(
                target: "run",
                "algorithm={algorithm} trial={t} seed_index={s} target_acc={:.4} val_acc={:.4}",
                r.target_accuracy,
                r.validation_accuracy
            ),
            Err(e) => {
                log::warn!(target: "run", "algorithm={algorithm} trial={t} seed_index={s} failed: {e}")
            }
        }
        out
    });
    let mut it = results.into_iter();
    let trials = hparams
        .into_iter()
        .enumerate()
        .map(|(t, hp)| {
            let mut runs = Vec::with_capacity(cfg.n_seeds);
            let mut error = None;
            for r in it.by_ref().take(cfg.n_seeds) {
                match r {
                    Ok(r) => runs.push(r),
                    Err(e) => {
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            Trial {
                algorithm,
                index: t,
                hparams: hp,
                seeds: (0..cfg.n_seeds).map(|s| seed_of(t, s)).collect(),
                runs,
                error,
            }
        })
        .collect();
    Ok(SearchResult { algorithm, trials })
}
