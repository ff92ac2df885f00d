//! Sample-path generation: naive independent, Gaussian copula, autoregressive.
//!
//! All generators consume standard normal noise in the same order (path-major,
//! horizon-minor), so a copula with `rho = 0` reproduces the naive paths bit
//! for bit under the same seed.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::copula::{correlated_uniforms, rng_from_seed, standard_normal_noise, CopulaParams};
use crate::error::{Error, Result};
use crate::forecasters::{ForecastRequest, ForecasterHandle, MultiStepForecast};
use crate::iqf::{fit_iqf, MarginalDistribution};
use crate::normal::{norm_cdf, norm_inv_cdf_unchecked};
use crate::num::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Copula,
    Autoregressive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Naive, Method::Copula, Method::Autoregressive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Copula => "copula",
            Method::Autoregressive => "autoregressive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Method::Naive),
            "copula" => Ok(Method::Copula),
            "autoregressive" | "ar" => Ok(Method::Autoregressive),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Truncate marginals at zero.
    pub nonneg: bool,
}

impl PathOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            nonneg: true,
        }
    }

    pub fn allow_negative(mut self) -> Self {
        self.nonneg = false;
        self
    }
}

/// How the autoregressive generator draws each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepSampling {
    /// From the IQF marginal fitted to the horizon-1 knots.
    #[default]
    Iqf,
    /// From the forecaster's exact Gaussian conditional when it has one,
    /// falling back to the IQF marginal otherwise.
    ExactConditional,
}

/// `N x H` trajectories for one series with generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePaths<T> {
    pub series_id: String,
    pub method: Method,
    pub seed: u64,
    pub paths: Matrix<T>,
    pub forward_passes: u64,
    pub wall_time: Duration,
}

impl<T: Scalar> SamplePaths<T> {
    pub fn n_paths(&self) -> usize {
        self.paths.rows()
    }

    pub fn horizon(&self) -> usize {
        self.paths.cols()
    }

    pub fn path(&self, n: usize) -> &[T] {
        self.paths.row(n)
    }
}

pub fn fit_marginals<T: Scalar>(forecast: &MultiStepForecast<T>, nonneg: bool) -> Result<Vec<MarginalDistribution<T>>> {
    forecast
        .per_horizon()
        .iter()
        .map(|k| fit_iqf(k, nonneg))
        .collect()
}

fn map_through_marginals<T: Scalar>(uniforms: &Matrix<T>, marginals: &[MarginalDistribution<T>]) -> Matrix<T> {
    let mut out = Matrix::zeros(uniforms.rows(), uniforms.cols());
    for n in 0..uniforms.rows() {
        for (i, (dst, u)) in out.row_mut(n).iter_mut().zip(uniforms.row(n)).enumerate() {
            *dst = marginals[i].quantile_unchecked(*u);
        }
    }
    out
}

fn check_options(opts: &PathOptions) -> Result<()> {
    if opts.n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    Ok(())
}

/// Independent draws from each horizon's marginal.
pub fn generate_naive<T: Scalar>(
    series_id: &str,
    forecast: &MultiStepForecast<T>,
    opts: &PathOptions,
) -> Result<SamplePaths<T>> {
    let params = CopulaParams::ar1(T::zero(), forecast.horizon())?;
    let mut out = generate_copula(series_id, forecast, &params, opts)?;
    out.method = Method::Naive;
    Ok(out)
}

/// Correlated uniforms from the Gaussian copula mapped through the marginals.
pub fn generate_copula<T: Scalar>(
    series_id: &str,
    forecast: &MultiStepForecast<T>,
    params: &CopulaParams<T>,
    opts: &PathOptions,
) -> Result<SamplePaths<T>> {
    check_options(opts)?;
    let h = forecast.horizon();
    if params.horizon() != h {
        return Err(Error::HorizonMismatch {
            expected: h,
            got: params.horizon(),
        });
    }
    let start = Instant::now();
    let marginals = fit_marginals(forecast, opts.nonneg)?;
    let noise = standard_normal_noise(opts.n_paths, h, opts.seed);
    let uniforms = correlated_uniforms(&params.factor()?, &noise);
    let paths = map_through_marginals(&uniforms, &marginals);
    Ok(SamplePaths {
        series_id: series_id.to_string(),
        method: Method::Copula,
        seed: opts.seed,
        paths,
        forward_passes: forecast.forward_passes_consumed(),
        wall_time: start.elapsed(),
    })
}

/// Copula paths from a precomputed noise matrix (common random numbers).
pub fn copula_paths_with_noise<T: Scalar>(
    marginals: &[MarginalDistribution<T>],
    params: &CopulaParams<T>,
    noise: &Matrix<T>,
) -> Result<Matrix<T>> {
    if params.horizon() != marginals.len() || noise.cols() != marginals.len() {
        return Err(Error::HorizonMismatch {
            expected: marginals.len(),
            got: params.horizon(),
        });
    }
    let uniforms = correlated_uniforms(&params.factor()?, noise);
    Ok(map_through_marginals(&uniforms, marginals))
}

/// Samples one step at a time and feeds it back as context. Costs exactly
/// `n_paths * horizon` forward passes.
pub fn generate_autoregressive(
    handle: &ForecasterHandle,
    series_id: &str,
    context: &[f64],
    horizon: usize,
    levels: &[f64],
    opts: &PathOptions,
    sampling: StepSampling,
) -> Result<SamplePaths<f64>> {
    check_options(opts)?;
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let start = Instant::now();
    let mut rng = rng_from_seed(opts.seed);
    let lo = f64::MIN_POSITIVE;
    let hi = 1.0 - f64::EPSILON;
    let mut paths = Matrix::zeros(opts.n_paths, horizon);
    let mut ctx = Vec::with_capacity(context.len() + horizon);
    let mut passes = 0u64;
    for n in 0..opts.n_paths {
        ctx.clear();
        ctx.extend_from_slice(context);
        for k in 0..horizon {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let u = norm_cdf(eps).clamp(lo, hi);
            let exact = match sampling {
                StepSampling::ExactConditional => handle.one_step_conditional(&ctx),
                StepSampling::Iqf => None,
            };
            let x = match exact {
                Some((mean, sd)) => {
                    let x = mean + sd * norm_inv_cdf_unchecked(u);
                    if opts.nonneg { x.max(0.0) } else { x }
                }
                None => {
                    let req = ForecastRequest {
                        series_id,
                        context: &ctx,
                        horizon,
                        levels,
                        path_index: Some(n),
                    };
                    let f = handle.forecast(&req)?;
                    fit_iqf(&f.per_horizon()[0], opts.nonneg)?.quantile_unchecked(u)
                }
            };
            passes += 1;
            paths[(n, k)] = x;
            ctx.push(x);
        }
    }
    Ok(SamplePaths {
        series_id: series_id.to_string(),
        method: Method::Autoregressive,
        seed: opts.seed,
        paths,
        forward_passes: passes,
        wall_time: start.elapsed(),
    })
}

/// Runs one method end to end for a series, including the forward pass that
/// produces the multi-step forecast. Timing covers forecasting and sampling.
#[allow(clippy::too_many_arguments)]
pub fn run_method(
    handle: &ForecasterHandle,
    method: Method,
    series_id: &str,
    context: &[f64],
    horizon: usize,
    levels: &[f64],
    copula: Option<&CopulaParams<f64>>,
    opts: &PathOptions,
) -> Result<SamplePaths<f64>> {
    let start = Instant::now();
    let mut out = match method {
        Method::Autoregressive => {
            generate_autoregressive(handle, series_id, context, horizon, levels, opts, StepSampling::Iqf)?
        }
        Method::Naive | Method::Copula => {
            let forecast = handle.forecast(&ForecastRequest::new(series_id, context, horizon, levels))?;
            if method == Method::Naive {
                generate_naive(series_id, &forecast, opts)?
            } else {
                let params = match copula {
                    Some(p) => *p,
                    None => CopulaParams::ar1(0.0, horizon)?,
                };
                generate_copula(series_id, &forecast, &params, opts)?
            }
        }
    };
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Writes paths as CSV: `series_id,method,path_index,h1..hH`.
pub fn write_paths_csv<T: Scalar>(paths: &[SamplePaths<T>], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = paths.iter().map(SamplePaths::horizon).max().unwrap_or(0);
    let mut header = vec!["series_id".to_string(), "method".into(), "path_index".into()];
    header.extend((1..=width).map(|i| format!("h{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for sp in paths {
        for n in 0..sp.n_paths() {
            let mut rec = vec![sp.series_id.clone(), sp.method.to_string(), n.to_string()];
            rec.extend(sp.path(n).iter().map(|v| v.to_string()));
            rec.resize(3 + width, String::new());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<paths.csv>", e))?;
    Ok(())
}

/// Reads paths written by [`write_paths_csv`]. Seed, pass count and timing
/// are not stored in the CSV and come back zeroed.
pub fn read_paths_csv(input: impl std::io::Read) -> Result<Vec<SamplePaths<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let mut grouped: Vec<(String, Method, Vec<Vec<f64>>)> = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse_err = |message: String| Error::Parse { line, message };
        let id = rec.get(0).ok_or_else(|| parse_err("missing series_id".into()))?;
        let method: Method = rec
            .get(1)
            .ok_or_else(|| parse_err("missing method".into()))?
            .parse()
            .map_err(|e: Error| parse_err(e.to_string()))?;
        let values = rec
            .iter()
            .skip(3)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        match grouped.last_mut() {
            Some((gid, gm, rows)) if gid == id && *gm == method => rows.push(values),
            _ => grouped.push((id.to_string(), method, vec![values])),
        }
    }
    grouped
        .into_iter()
        .map(|(series_id, method, rows)| {
            let h = rows[0].len();
            if rows.iter().any(|r| r.len() != h) {
                return Err(Error::HorizonMismatch {
                    expected: h,
                    got: rows.iter().map(Vec::len).find(|l| *l != h).unwrap_or(h),
                });
            }
            Ok(SamplePaths {
                series_id,
                method,
                seed: 0,
                paths: Matrix::from_vec(rows.len(), h, rows.concat()),
                forward_passes: 0,
                wall_time: Duration::ZERO,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}
