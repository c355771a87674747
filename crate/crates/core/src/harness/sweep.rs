use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{Cell, Report};
use super::search::{random_search, SearchConfig, SearchResult, SelectionStrategy};
use super::{Algorithm, Environment, HParamSpace};
use crate::error::{Error, Result};
use crate::synthetic_data::EnvironmentSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    DomainCount(Vec<usize>),
    /// Degrees between consecutive domains.
    DomainDistance(Vec<f64>),
}

impl SweepAxis {
    /// `count`/`domains` or `distance` with comma-separated values.
    pub fn parse(axis: &str, values: &str) -> Result<Self> {
        let bad = |v: &str| Error::Config(format!("bad {axis} value `{v}`"));
        let parts = values.split(',').map(str::trim).filter(|v| !v.is_empty());
        match axis {
            "count" | "domains" | "domain-count" => Ok(SweepAxis::DomainCount(
                parts
                    .map(|v| v.parse().map_err(|_| bad(v)))
                    .collect::<Result<_>>()?,
            )),
            "distance" | "domain-distance" => Ok(SweepAxis::DomainDistance(
                parts
                    .map(|v| v.parse().map_err(|_| bad(v)))
                    .collect::<Result<_>>()?,
            )),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::DomainCount(v) => v.len(),
            SweepAxis::DomainDistance(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn header(&self) -> &'static str {
        match self {
            SweepAxis::DomainCount(_) => "Domains",
            SweepAxis::DomainDistance(_) => "Distance (deg)",
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            SweepAxis::DomainCount(v) => v.iter().map(|x| x.to_string()).collect(),
            SweepAxis::DomainDistance(v) => v.iter().map(|x| x.to_string()).collect(),
        }
    }

    /// `base` with the `i`-th axis value applied.
    pub fn apply(&self, base: &EnvironmentSpec, i: usize) -> EnvironmentSpec {
        let mut spec = base.clone();
        match self {
            SweepAxis::DomainCount(v) => spec.num_domains = v[i],
            SweepAxis::DomainDistance(v) => spec.domain_distance = v[i],
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub base: EnvironmentSpec,
    pub algorithms: Vec<Algorithm>,
}

impl SweepConfig {
    /// A sweep proper: at least two axis values.
    pub fn validate(&self) -> Result<()> {
        if self.axis.len() < 2 {
            return Err(Error::Config(
                "a sweep needs at least two axis values".into(),
            ));
        }
        self.check_cells()
    }

    fn check_cells(&self) -> Result<()> {
        if self.axis.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Config(
                "sweep needs axis values and algorithms".into(),
            ));
        }
        for i in 0..self.axis.len() {
            self.axis.apply(&self.base, i).validate()?;
        }
        Ok(())
    }
}

/// Single-column report from finished searches.
pub fn search_report(
    title: &str,
    column: &str,
    results: &[SearchResult],
    strategy: SelectionStrategy,
) -> Report {
    let rows: Vec<String> = results.iter().map(|r| r.algorithm.label()).collect();
    let cells = results
        .iter()
        .map(|r| {
            Cell::from_trials(
                r.algorithm.label(),
                column.to_string(),
                r.trials.clone(),
                strategy,
            )
        })
        .collect();
    Report {
        title: title.to_string(),
        selection: strategy,
        column_header: "Algorithm".into(),
        columns: vec![column.to_string()],
        rows,
        cells,
    }
}

fn search_cell(
    row: String,
    column: String,
    env: &Result<Environment>,
    space: &HParamSpace,
    algorithm: Algorithm,
    cfg: &SearchConfig,
    strategy: SelectionStrategy,
) -> Cell {
    let result = env
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|env| random_search(space, algorithm, env, cfg).map_err(|e| e.to_string()));
    match result {
        Ok(r) => Cell::from_trials(row, column, r.trials, strategy),
        Err(e) => {
            log::warn!(target: "sweep", "cell {row} / {column} failed: {e}");
            Cell::failed(row, column, e, vec![])
        }
    }
}

/// One random search per (axis value, algorithm). Every cell uses the same
/// master seed, so a one-cell sweep equals the bare search.
pub fn run_sweep(
    sweep: &SweepConfig,
    space: &HParamSpace,
    cfg: &SearchConfig,
    strategy: SelectionStrategy,
    cache_dir: Option<&Path>,
) -> Result<Report> {
    sweep.check_cells()?;
    let columns = sweep.axis.labels();
    let mut cells = Vec::new();
    for (i, column) in columns.iter().enumerate() {
        let env = Environment::generate(&sweep.axis.apply(&sweep.base, i), cache_dir);
        for &algo in &sweep.algorithms {
            cells.push(search_cell(
                algo.label(),
                column.clone(),
                &env,
                space,
                algo,
                cfg,
                strategy,
            ));
        }
    }
    Ok(Report {
        title: format!(
            "{} sweep on {}",
            sweep.axis.header(),
            sweep.base.kind.name()
        ),
        selection: strategy,
        column_header: "Algorithm".into(),
        columns,
        rows: sweep.algorithms.iter().map(|a| a.label()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPosition {
    /// Last domain is the target.
    Extrapolation,
    /// Middle domain is the target.
    Interpolation,
}

/// One curve of the interpolation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Series {
    pub algorithm: Algorithm,
    pub target: TargetPosition,
}

impl Series {
    pub fn label(&self) -> String {
        let pos = match self.target {
            TargetPosition::Extrapolation => "Extrapolation",
            TargetPosition::Interpolation => "Interpolation",
        };
        format!("{}-{pos}", self.algorithm.label())
    }

    /// Extrapolation for every algorithm, then interpolation for those that
    /// do not depend on the target following the last source.
    pub fn for_algorithms(algorithms: &[Algorithm]) -> Vec<Series> {
        let extra = algorithms.iter().map(|&algorithm| Series {
            algorithm,
            target: TargetPosition::Extrapolation,
        });
        let inter = algorithms
            .iter()
            .filter(|a| !a.is_prototype_based())
            .map(|&algorithm| Series {
                algorithm,
                target: TargetPosition::Interpolation,
            });
        extra.chain(inter).collect()
    }
}

/// Extrapolation against interpolation along `sweep.axis`. With DPNets and
/// ERM this yields the three curves DPNets-Extrapolation,
/// ERM-Extrapolation and ERM-Interpolation.
pub fn run_interpolation_study(
    sweep: &SweepConfig,
    space: &HParamSpace,
    cfg: &SearchConfig,
    strategy: SelectionStrategy,
    cache_dir: Option<&Path>,
) -> Result<Report> {
    sweep.check_cells()?;
    let series = Series::for_algorithms(&sweep.algorithms);
    let columns = sweep.axis.labels();
    let mut cells = Vec::new();
    for (i, column) in columns.iter().enumerate() {
        let spec = sweep.axis.apply(&sweep.base, i);
        if spec.num_domains.is_multiple_of(2) {
            log::info!(target: "sweep", "even domain count {}: middle target is the lower median", spec.num_domains);
        }
        let extra = Environment::generate(&spec, cache_dir);
        let inter = extra
            .as_ref()
            .map(|e| e.clone().with_middle_target())
            .map_err(|e| Error::Config(e.to_string()));
        for s in &series {
            let env = match s.target {
                TargetPosition::Extrapolation => &extra,
                TargetPosition::Interpolation => &inter,
            };
            cells.push(search_cell(
                s.label(),
                column.clone(),
                env,
                space,
                s.algorithm,
                cfg,
                strategy,
            ));
        }
    }
    Ok(Report {
        title: format!(
            "Interpolation vs extrapolation on {} by {}",
            sweep.base.kind.name(),
            sweep.axis.header()
        ),
        selection: strategy,
        column_header: "Series".into(),
        columns,
        rows: series.iter().map(Series::label).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic_data::DatasetKind;

    fn base() -> EnvironmentSpec {
        let mut spec = EnvironmentSpec::new(DatasetKind::RotatedCloud, 3);
        spec.num_domains = 5;
        spec.samples_per_domain = 60;
        spec
    }

    fn space() -> HParamSpace {
        let mut s = HParamSpace::for_dataset(DatasetKind::RotatedCloud);
        s.steps = vec![40];
        s.n_b = vec![4];
        s
    }

    fn cfg() -> SearchConfig {
        SearchConfig {
            n_trials: 2,
            n_seeds: 2,
            master_seed: 9,
            workers: 1,
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!(
            SweepAxis::parse("distance", "3,5,7").unwrap(),
            SweepAxis::DomainDistance(vec![3.0, 5.0, 7.0])
        );
        assert_eq!(
            SweepAxis::parse("count", "5, 9").unwrap(),
            SweepAxis::DomainCount(vec![5, 9])
        );
        assert!(SweepAxis::parse("angle", "1").is_err());
        assert!(SweepAxis::parse("count", "x").is_err());
        let one = SweepConfig {
            axis: SweepAxis::DomainDistance(vec![3.0]),
            base: base(),
            algorithms: vec![Algorithm::Erm],
        };
        assert!(one.validate().is_err());
    }

    #[test]
    fn one_cell_sweep_equals_bare_search() {
        let sweep = SweepConfig {
            axis: SweepAxis::DomainDistance(vec![7.0]),
            base: base(),
            algorithms: vec![Algorithm::DPNets],
        };
        let s = SelectionStrategy::OracleMaxQuery;
        let report = run_sweep(&sweep, &space(), &cfg(), s, None).unwrap();
        let mut spec = base();
        spec.domain_distance = 7.0;
        let env = Environment::generate(&spec, None).unwrap();
        let bare = random_search(&space(), Algorithm::DPNets, &env, &cfg()).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].trials, bare.trials);
        assert_eq!(report.cells[0].summary, bare.summary(s));
    }

    #[test]
    fn grid_shape_and_reproducibility() {
        let sweep = SweepConfig {
            axis: SweepAxis::DomainDistance(vec![3.0, 20.0]),
            base: base(),
            algorithms: vec![Algorithm::DPNets, Algorithm::Erm],
        };
        sweep.validate().unwrap();
        let s = SelectionStrategy::TrainingDomainValidation;
        let a = run_sweep(&sweep, &space(), &cfg(), s, None).unwrap();
        assert_eq!((a.rows.len(), a.columns.len(), a.cells.len()), (2, 2, 4));
        let b = run_sweep(
            &sweep,
            &space(),
            &SearchConfig {
                workers: 3,
                ..cfg()
            },
            s,
            None,
        )
        .unwrap();
        assert_eq!(
            super::super::render_csv(&a).unwrap(),
            super::super::render_csv(&b).unwrap()
        );
    }

    #[test]
    fn interpolation_study_has_three_curves() {
        let sweep = SweepConfig {
            axis: SweepAxis::DomainCount(vec![5]),
            base: base(),
            algorithms: vec![Algorithm::DPNets, Algorithm::Erm],
        };
        let r = run_interpolation_study(
            &sweep,
            &space(),
            &cfg(),
            SelectionStrategy::OracleMaxQuery,
            None,
        )
        .unwrap();
        assert_eq!(
            r.rows,
            vec![
                "DPNets-Extrapolation",
                "ERM-Extrapolation",
                "ERM-Interpolation"
            ]
        );
        assert_eq!(r.failed_cells(), 0);
    }
}
