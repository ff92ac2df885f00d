//! Correlated multi-step sample paths from per-horizon quantile forecasts.
//!
//! A multi-step forecaster produces quantiles for every horizon in a single
//! call. [`iqf`] turns those quantiles into full marginal distributions,
//! [`copula`] couples them with a Gaussian copula, and [`pathgen`] draws
//! paths. The autoregressive alternative, which re-queries the forecaster one
//! step at a time, lives alongside for comparison. [`scoring`] evaluates
//! paths with CRPS and the variogram score.
//!
//! The numeric core is generic over [`num::Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

pub mod copula;
pub mod copula_module;
pub mod data_io;
pub mod error;
pub mod forecasters;
pub mod iqf;
pub mod normal;
pub mod num;
pub mod pathgen;
pub mod pipeline;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};

pub type QuantileKnotsF64 = iqf::QuantileKnots<f64>;
pub type QuantileKnotsF32 = iqf::QuantileKnots<f32>;
pub type MarginalDistributionF64 = iqf::MarginalDistribution<f64>;
pub type MarginalDistributionF32 = iqf::MarginalDistribution<f32>;
pub type CopulaParamsF64 = copula::CopulaParams<f64>;
pub type CopulaParamsF32 = copula::CopulaParams<f32>;
pub type CholeskyFactorF64 = copula::CholeskyFactor<f64>;
pub type CholeskyFactorF32 = copula::CholeskyFactor<f32>;
pub type MultiStepForecastF64 = forecasters::MultiStepForecast<f64>;
pub type MultiStepForecastF32 = forecasters::MultiStepForecast<f32>;
pub type SamplePathsF64 = pathgen::SamplePaths<f64>;
pub type SamplePathsF32 = pathgen::SamplePaths<f32>;
pub type MatrixF64 = num::Matrix<f64>;
pub type MatrixF32 = num::Matrix<f32>;
