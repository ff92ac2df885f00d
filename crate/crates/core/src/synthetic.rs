//! Synthetic Gaussian AR(1) series for experiments and tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::copula::rng_from_seed;
use crate::data_io::{Dataset, TimeSeries};

/// One AR(1) series started from its stationary distribution.
pub fn ar1_series<R: Rng + ?Sized>(phi: f64, sigma: f64, mu: f64, len: usize, rng: &mut R) -> Vec<f64> {
    let stationary_sd = if phi.abs() < 1.0 {
        sigma / (1.0 - phi * phi).sqrt()
    } else {
        sigma
    };
    let e0: f64 = StandardNormal.sample(rng);
    let mut x = mu + stationary_sd * e0;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(x);
        let e: f64 = StandardNormal.sample(rng);
        x = mu + phi * (x - mu) + sigma * e;
    }
    out
}

/// A synthetic series together with its generating coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Truth {
    pub id: String,
    pub phi: f64,
}

/// `n_series` AR(1) series of length `len`, cycling through `phis`.
pub fn ar1_dataset(
    n_series: usize,
    len: usize,
    phis: &[f64],
    sigma: f64,
    mu: f64,
    horizon: usize,
    seed: u64,
) -> (Dataset, Vec<Ar1Truth>) {
    let mut rng = rng_from_seed(seed);
    let mut series = Vec::with_capacity(n_series);
    let mut truth = Vec::with_capacity(n_series);
    for i in 0..n_series {
        let phi = phis[i % phis.len()];
        let id = format!("ar1_{i:05}");
        series.push(TimeSeries::new(id.clone(), ar1_series(phi, sigma, mu, len, &mut rng)));
        truth.push(Ar1Truth { id, phi });
    }
    let dataset = Dataset {
        name: "synthetic_ar1".into(),
        frequency: None,
        seasonality: Some(1),
        horizon: Some(horizon),
        series,
        excluded_missing: 0,
        excluded_short: 0,
    };
    (dataset, truth)
}

/// Like [`ar1_dataset`] with `phi` drawn uniformly from `[lo, hi)` per series.
pub fn ar1_dataset_uniform_phi(
    n_series: usize,
    len: usize,
    (lo, hi): (f64, f64),
    sigma: f64,
    mu: f64,
    horizon: usize,
    seed: u64,
) -> (Dataset, Vec<Ar1Truth>) {
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let phis: Vec<f64> = (0..n_series).map(|_| rng.random_range(lo..hi)).collect();
    ar1_dataset(n_series, len, &phis, sigma, mu, horizon, seed)
}
