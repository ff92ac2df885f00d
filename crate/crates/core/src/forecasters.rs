//! Multi-step quantile forecasters and the external forecast store.
//!
//! Every call to [`ForecasterHandle::forecast`] is one forward pass and bumps
//! the handle's shared counter by exactly one, whatever the horizon.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::copula::estimate_rho;
use crate::error::{Error, Result};
use crate::iqf::QuantileKnots;
use crate::normal::norm_inv_cdf;
use crate::num::Scalar;

/// Inputs to one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRequest<'a> {
    pub series_id: &'a str,
    pub context: &'a [f64],
    pub horizon: usize,
    pub levels: &'a [f64],
    /// Sample path being extended, for replaying autoregressive traces.
    pub path_index: Option<usize>,
}

impl<'a> ForecastRequest<'a> {
    pub fn new(series_id: &'a str, context: &'a [f64], horizon: usize, levels: &'a [f64]) -> Self {
        Self {
            series_id,
            context,
            horizon,
            levels,
            path_index: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.context.is_empty() {
            return Err(Error::ContextTooShort { needed: 1, got: 0 });
        }
        if self.horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        Ok(())
    }
}

/// Per-horizon quantile knots produced by one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStepForecast<T> {
    per_horizon: Vec<QuantileKnots<T>>,
    forward_passes_consumed: u64,
}

impl<T: Scalar> MultiStepForecast<T> {
    pub fn new(per_horizon: Vec<QuantileKnots<T>>) -> Result<Self> {
        if per_horizon.is_empty() {
            return Err(Error::EmptyHorizon);
        }
        Ok(Self {
            per_horizon,
            forward_passes_consumed: 1,
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_horizon.len()
    }

    pub fn per_horizon(&self) -> &[QuantileKnots<T>] {
        &self.per_horizon
    }

    pub fn forward_passes_consumed(&self) -> u64 {
        self.forward_passes_consumed
    }

    pub fn cast<U: Scalar>(&self) -> MultiStepForecast<U> {
        MultiStepForecast {
            per_horizon: self.per_horizon.iter().map(QuantileKnots::cast).collect(),
            forward_passes_consumed: self.forward_passes_consumed,
        }
    }
}

/// Shared forward-pass accumulator.
#[derive(Debug, Clone, Default)]
pub struct PassCounter(Arc<AtomicU64>);

impl PassCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// AR(1) process `x_t - mu = phi (x_{t-1} - mu) + sigma e_t`.
///
/// Unset parameters are estimated from the context on every call: `phi` by
/// lag-one autocorrelation, `mu` by the context mean, `sigma` by the residual
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ar1Spec {
    pub phi: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
}

impl Ar1Spec {
    pub fn fixed(phi: f64, sigma: f64, mu: f64) -> Self {
        Self {
            phi: Some(phi),
            sigma: Some(sigma),
            mu: Some(mu),
        }
    }

    fn resolve(&self, context: &[f64]) -> (f64, f64, f64) {
        let n = context.len() as f64;
        let mu = self.mu.unwrap_or_else(|| context.iter().sum::<f64>() / n);
        let phi = self
            .phi
            .unwrap_or_else(|| estimate_rho(context).unwrap_or(0.0));
        let sigma = self.sigma.unwrap_or_else(|| {
            if context.len() < 2 {
                return 0.0;
            }
            let resid: Vec<f64> = context
                .windows(2)
                .map(|w| (w[1] - mu) - phi * (w[0] - mu))
                .collect();
            let m = resid.iter().sum::<f64>() / resid.len() as f64;
            (resid.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / resid.len() as f64).sqrt()
        });
        (phi, sigma, mu)
    }

    /// Mean and standard deviation of `x_{T+i}` given the context.
    pub fn marginal(&self, context: &[f64], i: usize) -> (f64, f64) {
        let (phi, sigma, mu) = self.resolve(context);
        let last = *context.last().expect("non-empty context");
        let decay = phi.powi(i as i32);
        let var = if (1.0 - phi * phi).abs() < 1e-12 {
            sigma * sigma * i as f64
        } else {
            sigma * sigma * (1.0 - decay * decay) / (1.0 - phi * phi)
        };
        (mu + decay * (last - mu), var.sqrt())
    }
}

#[derive(Debug, Clone)]
pub enum ForecasterKind {
    GaussianAr1(Ar1Spec),
    /// Repeats the last observed season of length `season`.
    SeasonalNaive { season: usize },
    /// Multiplies every knot value of the inner forecaster by `bias`.
    BiasedDrift { bias: f64, inner: Box<ForecasterKind> },
    ExternalFile(Arc<ForecastStore>),
}

impl ForecasterKind {
    fn forecast(&self, req: &ForecastRequest<'_>) -> Result<MultiStepForecast<f64>> {
        match self {
            ForecasterKind::GaussianAr1(spec) => {
                let z: Vec<f64> = req
                    .levels
                    .iter()
                    .map(|&a| norm_inv_cdf(a))
                    .collect::<Result<_>>()?;
                let per_horizon = (1..=req.horizon)
                    .map(|i| {
                        let (mean, sd) = spec.marginal(req.context, i);
                        QuantileKnots::new(req.levels.to_vec(), z.iter().map(|z| mean + sd * z).collect())
                    })
                    .collect::<Result<_>>()?;
                MultiStepForecast::new(per_horizon)
            }
            ForecasterKind::SeasonalNaive { season } => {
                let m = (*season).max(1);
                let t = req.context.len();
                if t < m {
                    return Err(Error::ContextTooShort { needed: m, got: t });
                }
                let per_horizon = (1..=req.horizon)
                    .map(|i| {
                        let v = req.context[t - m + (i - 1) % m];
                        QuantileKnots::new(req.levels.to_vec(), vec![v; req.levels.len()])
                    })
                    .collect::<Result<_>>()?;
                MultiStepForecast::new(per_horizon)
            }
            ForecasterKind::BiasedDrift { bias, inner } => {
                let base = inner.forecast(req)?;
                MultiStepForecast::new(base.per_horizon.iter().map(|k| k.scaled(*bias)).collect())
            }
            ForecasterKind::ExternalFile(store) => store.forecast(req),
        }
    }

    fn one_step(&self, context: &[f64]) -> Option<(f64, f64)> {
        match self {
            ForecasterKind::GaussianAr1(spec) => Some(spec.marginal(context, 1)),
            ForecasterKind::BiasedDrift { bias, inner } => inner
                .one_step(context)
                .map(|(m, s)| (m * bias, s * bias.abs())),
            _ => None,
        }
    }
}

/// Point forecast repeating the last season; the scoring baseline. Falls
/// back to the last value when the context is shorter than `season`.
pub fn seasonal_naive_point(context: &[f64], horizon: usize, season: usize) -> Result<Vec<f64>> {
    let t = context.len();
    if t == 0 {
        return Err(Error::ContextTooShort { needed: 1, got: 0 });
    }
    let m = if season == 0 || season > t { 1 } else { season };
    Ok((0..horizon).map(|i| context[t - m + i % m]).collect())
}

/// A forecaster plus the forward-pass counter it reports to.
#[derive(Debug, Clone)]
pub struct ForecasterHandle {
    kind: ForecasterKind,
    passes: PassCounter,
}

impl ForecasterHandle {
    pub fn new(kind: ForecasterKind) -> Self {
        Self {
            kind,
            passes: PassCounter::default(),
        }
    }

    pub fn gaussian_ar1(phi: f64, sigma: f64, mu: f64) -> Self {
        Self::new(ForecasterKind::GaussianAr1(Ar1Spec::fixed(phi, sigma, mu)))
    }

    pub fn seasonal_naive(season: usize) -> Self {
        Self::new(ForecasterKind::SeasonalNaive { season })
    }

    pub fn biased_drift(bias: f64, inner: ForecasterKind) -> Self {
        Self::new(ForecasterKind::BiasedDrift {
            bias,
            inner: Box::new(inner),
        })
    }

    pub fn external(store: ForecastStore) -> Self {
        Self::new(ForecasterKind::ExternalFile(Arc::new(store)))
    }

    /// Same forecaster, reporting to `counter`.
    pub fn with_counter(mut self, counter: PassCounter) -> Self {
        self.passes = counter;
        self
    }

    pub fn kind(&self) -> &ForecasterKind {
        &self.kind
    }

    pub fn counter(&self) -> &PassCounter {
        &self.passes
    }

    pub fn forward_passes(&self) -> u64 {
        self.passes.get()
    }

    /// One forward pass: quantile knots for horizons `1..=req.horizon`.
    pub fn forecast(&self, req: &ForecastRequest<'_>) -> Result<MultiStepForecast<f64>> {
        req.validate()?;
        self.passes.bump();
        self.kind.forecast(req)
    }

    /// Exact Gaussian one-step conditional `(mean, sd)` where the forecaster
    /// has one. Counts as a forward pass when available.
    pub fn one_step_conditional(&self, context: &[f64]) -> Option<(f64, f64)> {
        if context.is_empty() {
            return None;
        }
        let out = self.kind.one_step(context);
        if out.is_some() {
            self.passes.bump();
        }
        out
    }
}

/// One line of the QF-JSONL wire format. `values` is levels-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QfRecord {
    pub series_id: String,
    pub context_length: usize,
    pub levels: Vec<f64>,
    pub horizons: usize,
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_index: Option<usize>,
}

impl QfRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.values.len() != self.levels.len() {
            return Err(format!(
                "{} levels but {} value rows",
                self.levels.len(),
                self.values.len()
            ));
        }
        if self.horizons == 0 {
            return Err("horizons must be at least 1".into());
        }
        if let Some(row) = self.values.iter().position(|r| r.len() != self.horizons) {
            return Err(format!(
                "value row {row} has length {}, expected {}",
                self.values[row].len(),
                self.horizons
            ));
        }
        QuantileKnots::new(self.levels.clone(), vec![0.0; self.levels.len()])
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    fn to_forecast(&self, horizon: usize) -> Result<MultiStepForecast<f64>> {
        if horizon > self.horizons {
            return Err(Error::HorizonMismatch {
                expected: self.horizons,
                got: horizon,
            });
        }
        let per_horizon = (0..horizon)
            .map(|i| {
                QuantileKnots::new(
                    self.levels.clone(),
                    self.values.iter().map(|row| row[i]).collect(),
                )
            })
            .collect::<Result<_>>()?;
        MultiStepForecast::new(per_horizon)
    }

    /// Record for a multi-step forecast made at `context_length`.
    pub fn from_forecast(
        series_id: &str,
        context_length: usize,
        forecast: &MultiStepForecast<f64>,
        path_index: Option<usize>,
    ) -> Self {
        let levels = forecast.per_horizon[0].levels().to_vec();
        let values = (0..levels.len())
            .map(|k| forecast.per_horizon.iter().map(|q| q.values()[k]).collect())
            .collect();
        Self {
            series_id: series_id.to_string(),
            context_length,
            levels,
            horizons: forecast.horizon(),
            values,
            path_index,
        }
    }
}

type StoreKey = (String, usize, Option<usize>);

/// In-memory forecasts keyed by `(series_id, context_length[, path_index])`.
#[derive(Debug, Clone, Default)]
pub struct ForecastStore {
    records: HashMap<StoreKey, QfRecord>,
}

impl ForecastStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Inserts a record; returns true if it replaced an existing key.
    pub fn insert(&mut self, record: QfRecord) -> bool {
        let key = (
            record.series_id.clone(),
            record.context_length,
            record.path_index,
        );
        self.records.insert(key, record).is_some()
    }

    pub fn get(&self, series_id: &str, context_length: usize, path_index: Option<usize>) -> Option<&QfRecord> {
        let lookup = |p| self.records.get(&(series_id.to_string(), context_length, p));
        path_index.and_then(|p| lookup(Some(p))).or_else(|| lookup(None))
    }

    fn forecast(&self, req: &ForecastRequest<'_>) -> Result<MultiStepForecast<f64>> {
        let record = self
            .get(req.series_id, req.context.len(), req.path_index)
            .ok_or_else(|| Error::MissingExternalForecast {
                series_id: req.series_id.to_string(),
                context_length: req.context.len(),
            })?;
        record.to_forecast(req.horizon)
    }

    /// Records sorted by key, for deterministic output.
    pub fn sorted_records(&self) -> Vec<&QfRecord> {
        let mut keys: Vec<&StoreKey> = self.records.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| &self.records[k]).collect()
    }
}

/// Reads a QF-JSONL file. Blank lines are skipped; duplicate keys keep the
/// last record.
pub fn load_external_forecasts(path: impl AsRef<Path>) -> Result<ForecastStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_external_forecasts(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_external_forecasts(reader: impl BufRead) -> Result<ForecastStore> {
    let mut store = ForecastStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<qf-jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QfRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate().map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        let (id, len) = (record.series_id.clone(), record.context_length);
        if store.insert(record) {
            log::warn!("duplicate forecast for ({id:?}, {len}) at line {line_no}; keeping the last");
        }
    }
    Ok(store)
}

pub fn write_external_forecasts(records: &[QfRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
