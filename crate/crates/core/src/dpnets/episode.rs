use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::synthetic_data::{DomainData, Sample};

/// Per-class support samples from domain `i` and query samples from `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub support: Vec<Vec<Sample>>,
    pub query: Vec<Vec<Sample>>,
    pub source_index: usize,
}

impl EpisodeBatch {
    /// Requires the same non-zero count in every support and query class.
    pub fn new(
        support: Vec<Vec<Sample>>,
        query: Vec<Vec<Sample>>,
        source_index: usize,
    ) -> Result<Self> {
        if support.len() != query.len() || support.is_empty() {
            return Err(Error::Shape("support and query class counts differ".into()));
        }
        let n_b = support[0].len();
        if n_b == 0 || support.iter().chain(&query).any(|c| c.len() != n_b) {
            return Err(Error::Shape(
                "every class needs exactly N_B support and query samples".into(),
            ));
        }
        for (k, s) in support
            .iter()
            .chain(&query)
            .flat_map(|c| c.iter())
            .enumerate()
        {
            let class = (k / n_b) % support.len();
            if s.y != class {
                return Err(Error::Shape(format!(
                    "sample labeled {} listed under class {class}",
                    s.y
                )));
            }
        }
        Ok(EpisodeBatch {
            support,
            query,
            source_index,
        })
    }

    pub fn n_b(&self) -> usize {
        self.support[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.support.len()
    }
}

fn draw_per_class<R: Rng + ?Sized>(
    domain: &DomainData,
    n_b: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Sample>>> {
    domain
        .class_indices()
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            if idx.len() < n_b {
                return Err(Error::InsufficientSamples(format!(
                    "domain {} class {k} has {} samples, episode needs {n_b}",
                    domain.index(),
                    idx.len()
                )));
            }
            Ok(index::sample(rng, idx.len(), n_b)
                .into_iter()
                .map(|j| domain.samples()[idx[j]].clone())
                .collect())
        })
        .collect()
}

/// Draws `i` uniformly from `0..=m-2` over the `m` source domains, then
/// `n_b` samples per class without replacement from domains `i` and `i + 1`.
pub fn sample_episode<R: Rng + ?Sized>(
    sources: &[DomainData],
    n_b: usize,
    rng: &mut R,
) -> Result<EpisodeBatch> {
    if sources.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "episodes need two consecutive source domains, got {}",
            sources.len()
        )));
    }
    if n_b == 0 {
        return Err(Error::Config("N_B must be positive".into()));
    }
    let i = rng.random_range(0..sources.len() - 1);
    let support = draw_per_class(&sources[i], n_b, rng)?;
    let query = draw_per_class(&sources[i + 1], n_b, rng)?;
    EpisodeBatch::new(support, query, i)
}
