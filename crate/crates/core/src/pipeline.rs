//! Runs sampling methods over a split dataset and turns the results into
//! score tables, aggregates and timing.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::copula::{estimate_rho, series_seed, CopulaParams};
use crate::copula_module::CopulaNet;
use crate::data_io::{AggregateReport, MethodAggregate, MethodTiming, ScoreRow, TimeSeries, TimingReport};
use crate::error::{Error, Result};
use crate::forecasters::{seasonal_naive_point, ForecasterHandle};
use crate::num::median;
use crate::pathgen::{run_method, Method, PathOptions, SamplePaths};
use crate::scoring::{normalize_and_aggregate, pct_improvement_by_horizon, SeriesScores};

/// Name of the seasonal-naive baseline in score tables.
pub const BASELINE: &str = "seasonal_naive";

/// Where copula parameters come from.
#[derive(Debug, Clone)]
pub enum CopulaSource {
    /// Lag-one autocorrelation of the context.
    Auto,
    Fixed(f64),
    Module(Arc<CopulaNet>),
}

impl CopulaSource {
    pub fn params(&self, context: &[f64], horizon: usize) -> Result<CopulaParams<f64>> {
        match self {
            CopulaSource::Auto => CopulaParams::ar1(estimate_rho(context)?, horizon),
            CopulaSource::Fixed(rho) => CopulaParams::ar1(*rho, horizon),
            CopulaSource::Module(net) => net.predict_params(context, horizon),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub methods: Vec<Method>,
    pub n_paths: usize,
    pub seed: u64,
    pub nonneg: bool,
    pub levels: Vec<f64>,
    pub copula: CopulaSource,
    /// Season length of the baseline.
    pub seasonality: usize,
}

/// Everything produced for one series.
#[derive(Debug, Clone)]
pub struct SeriesRun {
    pub series_id: String,
    pub paths: Vec<SamplePaths<f64>>,
    pub scores: BTreeMap<Method, SeriesScores>,
    pub baseline: SeriesScores,
}

/// Samples every configured method for one series id and context. All
/// methods share the per-series seed.
pub fn sample_series(
    handle: &ForecasterHandle,
    series_id: &str,
    context: &[f64],
    horizon: usize,
    config: &PipelineConfig,
) -> Result<Vec<SamplePaths<f64>>> {
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let mut opts = PathOptions::new(config.n_paths, series_seed(config.seed, series_id));
    opts.nonneg = config.nonneg;
    let copula = if config.methods.contains(&Method::Copula) {
        Some(config.copula.params(context, horizon)?)
    } else {
        None
    };
    config
        .methods
        .iter()
        .map(|&m| run_method(handle, m, series_id, context, horizon, &config.levels, copula.as_ref(), &opts))
        .collect()
}

/// Samples and scores every configured method on one split series.
pub fn run_series(handle: &ForecasterHandle, series: &TimeSeries, config: &PipelineConfig) -> Result<SeriesRun> {
    let context = series.context();
    let holdout = series.holdout();
    let paths = sample_series(handle, &series.id, context, holdout.len(), config)?;
    let mut scores = BTreeMap::new();
    for p in &paths {
        scores.insert(p.method, SeriesScores::from_paths(&p.paths, holdout)?);
    }
    let base = seasonal_naive_point(context, holdout.len(), config.seasonality)?;
    Ok(SeriesRun {
        series_id: series.id.clone(),
        paths,
        scores,
        baseline: SeriesScores::from_point(&base, holdout)?,
    })
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub rows: Vec<ScoreRow>,
    pub aggregates: AggregateReport,
    pub timing: TimingReport,
}

/// Median over series of `100 (a - b) / a` for the variogram score.
fn vs_pct_improvement(runs: &[&SeriesRun], reference: Method, challenger: Method) -> Option<f64> {
    let cells: Vec<f64> = runs
        .iter()
        .filter_map(|r| match (r.scores.get(&reference), r.scores.get(&challenger)) {
            (Some(a), Some(b)) if a.vs_total != 0.0 => Some(100.0 * (a.vs_total - b.vs_total) / a.vs_total),
            _ => None,
        })
        .collect();
    median(&cells)
}

pub fn summarize(runs: &[SeriesRun]) -> Result<Summary> {
    let mut runs: Vec<&SeriesRun> = runs.iter().collect();
    runs.sort_by(|a, b| a.series_id.cmp(&b.series_id));
    let baseline: BTreeMap<String, SeriesScores> =
        runs.iter().map(|r| (r.series_id.clone(), r.baseline.clone())).collect();
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| runs.iter().any(|r| r.scores.contains_key(m)))
        .collect();

    let mut summary = Summary::default();
    let mut by_horizon: BTreeMap<Method, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for &method in &methods {
        let scores: BTreeMap<String, SeriesScores> = runs
            .iter()
            .filter_map(|r| r.scores.get(&method).map(|s| (r.series_id.clone(), s.clone())))
            .collect();
        let agg = match normalize_and_aggregate(&scores, &baseline) {
            Ok(a) => Some(a),
            Err(Error::NoComparableSeries) => None,
            Err(e) => return Err(e),
        };
        let h = scores.values().map(|s| s.crps_by_horizon.len()).max().unwrap_or(0);
        let median_crps_by_horizon = (0..h)
            .map(|i| {
                let col: Vec<f64> = scores.values().filter_map(|s| s.crps_by_horizon.get(i).copied()).collect();
                median(&col)
            })
            .collect();
        for (id, s) in &scores {
            let norm = agg.as_ref().and_then(|a| a.normalized.get(id));
            summary.rows.push(ScoreRow {
                series_id: id.clone(),
                method: method.to_string(),
                crps_total: s.crps_total,
                vs_total: s.vs_total,
                normalized_crps: norm.and_then(|n| n.crps),
                normalized_vs: norm.and_then(|n| n.vs),
                crps_by_horizon: s.crps_by_horizon.clone(),
            });
        }
        summary.aggregates.methods.insert(
            method.to_string(),
            MethodAggregate {
                n_series: scores.len(),
                median_normalized_crps: agg.as_ref().and_then(|a| a.median_normalized_crps),
                median_normalized_vs: agg.as_ref().and_then(|a| a.median_normalized_vs),
                n_excluded_crps: agg.as_ref().map_or(0, |a| a.n_excluded_crps),
                n_excluded_vs: agg.as_ref().map_or(0, |a| a.n_excluded_vs),
                median_crps_by_horizon,
            },
        );
        by_horizon.insert(method, scores.into_iter().map(|(id, s)| (id, s.crps_by_horizon)).collect());

        let passes: u64 = runs
            .iter()
            .flat_map(|r| r.paths.iter().filter(|p| p.method == method))
            .map(|p| p.forward_passes)
            .sum();
        let wall: Duration = runs
            .iter()
            .flat_map(|r| r.paths.iter().filter(|p| p.method == method))
            .map(|p| p.wall_time)
            .sum();
        summary.timing.methods.insert(
            method.to_string(),
            MethodTiming {
                wall_time_secs: wall.as_secs_f64(),
                forward_passes: passes,
                n_series: by_horizon[&method].len(),
            },
        );
    }
    for (id, b) in &baseline {
        summary.rows.push(ScoreRow {
            series_id: id.clone(),
            method: BASELINE.to_string(),
            crps_total: b.crps_total,
            vs_total: b.vs_total,
            normalized_crps: None,
            normalized_vs: None,
            crps_by_horizon: b.crps_by_horizon.clone(),
        });
    }
    summary.rows.sort_by(|a, b| (&a.series_id, &a.method).cmp(&(&b.series_id, &b.method)));

    if let (Some(ar), Some(cop)) = (by_horizon.get(&Method::Autoregressive), by_horizon.get(&Method::Copula)) {
        summary.aggregates.crps_pct_improvement_by_horizon = Some(pct_improvement_by_horizon(ar, cop)?);
        summary.aggregates.vs_pct_improvement = vs_pct_improvement(&runs, Method::Autoregressive, Method::Copula);
    }
    summary.timing.compute_speedups();
    Ok(summary)
}

/// One row per horizon of the copula-over-autoregressive CRPS improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowballRow {
    pub horizon: usize,
    pub median_pct_improvement: Option<f64>,
}

pub fn snowball_rows(summary: &Summary) -> Result<Vec<SnowballRow>> {
    let imp = summary
        .aggregates
        .crps_pct_improvement_by_horizon
        .as_ref()
        .ok_or_else(|| Error::Config("snowball needs both copula and autoregressive results".into()))?;
    Ok(imp
        .iter()
        .enumerate()
        .map(|(i, v)| SnowballRow {
            horizon: i + 1,
            median_pct_improvement: *v,
        })
        .collect())
}
