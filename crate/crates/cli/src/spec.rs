//! Parsing of forecaster, method and copula specifications.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use copula_paths::copula_module::CopulaNet;
use copula_paths::data_io::TimeSeries;
use copula_paths::forecasters::{load_external_forecasts, Ar1Spec, ForecastStore, ForecasterHandle, ForecasterKind};
use copula_paths::pathgen::Method;
use copula_paths::pipeline::CopulaSource;
use copula_paths::synthetic::Ar1Truth;

/// An invalid flag value. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn num(s: &str, what: &str) -> Result<f64, ConfigError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| bad(format!("invalid {what} {s:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForecasterSpec {
    Ar1(Ar1Spec),
    Oracle,
    SeasonalNaive(Option<usize>),
    Biased { bias: f64, inner: Box<ForecasterSpec> },
    External(PathBuf),
}

impl ForecasterSpec {
    /// `default_inner` is used by `biased:B` without an explicit inner spec.
    pub fn parse(s: &str, default_inner: &ForecasterSpec) -> Result<Self, ConfigError> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("ar1", None) => Ok(Self::Ar1(Ar1Spec::default())),
            ("ar1", Some(r)) => {
                let parts: Vec<&str> = r.split(':').collect();
                if !(2..=3).contains(&parts.len()) {
                    return Err(bad(format!("expected ar1:PHI:SIGMA[:MU], got {s:?}")));
                }
                let sigma = num(parts[1], "sigma")?;
                if sigma < 0.0 {
                    return Err(bad("sigma must be non-negative"));
                }
                Ok(Self::Ar1(Ar1Spec {
                    phi: Some(num(parts[0], "phi")?),
                    sigma: Some(sigma),
                    mu: parts.get(2).map(|m| num(m, "mu")).transpose()?,
                }))
            }
            ("oracle", None) => Ok(Self::Oracle),
            ("seasonal-naive", None) => Ok(Self::SeasonalNaive(None)),
            ("seasonal-naive", Some(m)) => {
                let m: usize = m.parse().map_err(|_| bad(format!("invalid season {m:?}")))?;
                if m == 0 {
                    return Err(bad("season must be positive"));
                }
                Ok(Self::SeasonalNaive(Some(m)))
            }
            ("biased", Some(r)) => {
                let (b, inner) = match r.split_once(':') {
                    Some((b, inner)) => (b, Some(inner)),
                    None => (r, None),
                };
                let bias = num(b, "bias")?;
                let inner = match inner {
                    Some(i) => Self::parse(i, default_inner)?,
                    None => default_inner.clone(),
                };
                Ok(Self::Biased {
                    bias,
                    inner: Box::new(inner),
                })
            }
            ("external", Some(path)) if !path.is_empty() => Ok(Self::External(PathBuf::from(path))),
            _ => Err(bad(format!("unknown forecaster {s:?}"))),
        }
    }

    fn uses_oracle(&self) -> bool {
        match self {
            Self::Oracle => true,
            Self::Biased { inner, .. } => inner.uses_oracle(),
            _ => false,
        }
    }
}

/// Builds a handle for each series from a parsed spec.
pub struct ForecasterFactory {
    spec: ForecasterSpec,
    truth: HashMap<String, f64>,
    sigma: f64,
    mu: f64,
    season: usize,
    store: Option<Arc<ForecastStore>>,
}

impl ForecasterFactory {
    pub fn new(
        spec: ForecasterSpec,
        truth: Option<&[Ar1Truth]>,
        sigma: f64,
        mu: f64,
        season: usize,
    ) -> anyhow::Result<Self> {
        if spec.uses_oracle() && truth.is_none() {
            return Err(bad("the oracle forecaster needs --dataset synthetic").into());
        }
        let store = find_external(&spec).map(load_external_forecasts).transpose()?.map(Arc::new);
        Ok(Self {
            truth: truth
                .unwrap_or_default()
                .iter()
                .map(|t| (t.id.clone(), t.phi))
                .collect(),
            spec,
            sigma,
            mu,
            season,
            store,
        })
    }

    fn kind(&self, spec: &ForecasterSpec, series: &TimeSeries) -> ForecasterKind {
        match spec {
            ForecasterSpec::Ar1(a) => ForecasterKind::GaussianAr1(*a),
            ForecasterSpec::Oracle => {
                let phi = self.truth.get(&series.id).copied().unwrap_or(0.0);
                ForecasterKind::GaussianAr1(Ar1Spec::fixed(phi, self.sigma, self.mu))
            }
            ForecasterSpec::SeasonalNaive(m) => ForecasterKind::SeasonalNaive {
                season: m.unwrap_or(self.season),
            },
            ForecasterSpec::Biased { bias, inner } => ForecasterKind::BiasedDrift {
                bias: *bias,
                inner: Box::new(self.kind(inner, series)),
            },
            ForecasterSpec::External(_) => {
                ForecasterKind::ExternalFile(self.store.clone().expect("store loaded for external spec"))
            }
        }
    }

    pub fn handle(&self, series: &TimeSeries) -> ForecasterHandle {
        ForecasterHandle::new(self.kind(&self.spec, series))
    }
}

fn find_external(spec: &ForecasterSpec) -> Option<&PathBuf> {
    match spec {
        ForecasterSpec::External(p) => Some(p),
        ForecasterSpec::Biased { inner, .. } => find_external(inner),
        _ => None,
    }
}

pub fn parse_methods(items: &[String]) -> Result<Vec<Method>, ConfigError> {
    let mut out = Vec::new();
    for item in items {
        let m: Method = item.trim().parse().map_err(|_| bad(format!("unknown method {item:?}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(bad("no methods given"));
    }
    Ok(out)
}

pub fn parse_copula(s: &str) -> anyhow::Result<CopulaSource> {
    match s.split_once(':') {
        None if s == "auto" => Ok(CopulaSource::Auto),
        Some(("fixed", rho)) => {
            let rho = num(rho, "rho")?;
            if !(-1.0..=1.0).contains(&rho) {
                return Err(bad(format!("rho {rho} outside [-1, 1]")).into());
            }
            Ok(CopulaSource::Fixed(rho))
        }
        Some(("module", path)) if !path.is_empty() => Ok(CopulaSource::Module(Arc::new(CopulaNet::load(path)?))),
        _ => Err(bad(format!("unknown copula source {s:?}")).into()),
    }
}
