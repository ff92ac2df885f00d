//! Gaussian copula over the forecast horizon.
//!
//! The correlation matrix is AR(1) Toeplitz, optionally mixed with the
//! identity: `S_ij = (1 - beta) rho^|i-j| + beta [i == j]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::norm_cdf;
use crate::num::{Matrix, Scalar};

/// Largest admissible `|rho|`.
pub const RHO_LIMIT: f64 = 0.999;

/// Smallest Cholesky pivot accepted by [`cholesky_dense`].
pub const MIN_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaParams<T> {
    rho: T,
    beta: Option<T>,
    horizon: usize,
}

impl<T: Scalar> CopulaParams<T> {
    /// `rho` is clamped to `[-0.999, 0.999]`; `beta`, when given, must lie in `[0, 1]`.
    pub fn new(rho: T, beta: Option<T>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        if !rho.is_finite() {
            return Err(Error::Config(format!("rho must be finite, got {rho}")));
        }
        if let Some(b) = beta {
            if !(b >= T::zero() && b <= T::one()) {
                return Err(Error::Config(format!("beta must lie in [0, 1], got {b}")));
            }
        }
        Ok(Self {
            rho: clamp_rho(rho),
            beta,
            horizon,
        })
    }

    pub fn ar1(rho: T, horizon: usize) -> Result<Self> {
        Self::new(rho, None, horizon)
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn beta(&self) -> Option<T> {
        self.beta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Cholesky factor of the implied correlation matrix. Pure AR(1) uses the
    /// closed form; the identity mixture goes through the dense factorization.
    pub fn factor(&self) -> Result<CholeskyFactor<T>> {
        match self.beta {
            None => Ok(cholesky_ar1(self.rho, self.horizon)),
            Some(_) => cholesky_dense(&build_covariance(self)?),
        }
    }
}

pub fn clamp_rho<T: Scalar>(rho: T) -> T {
    let limit = T::lit(RHO_LIMIT);
    rho.max(-limit).min(limit)
}

/// Correlation matrix implied by `params`.
pub fn build_covariance<T: Scalar>(params: &CopulaParams<T>) -> Result<Matrix<T>> {
    let h = params.horizon;
    if h == 0 {
        return Err(Error::EmptyHorizon);
    }
    let keep = T::one() - params.beta.unwrap_or(T::zero());
    // rho^k for k = 0..h, shared along each diagonal
    let mut powers = Vec::with_capacity(h);
    let mut p = T::one();
    for _ in 0..h {
        powers.push(p);
        p = p * params.rho;
    }
    let mut sigma = Matrix::zeros(h, h);
    for i in 0..h {
        for j in 0..h {
            sigma[(i, j)] = if i == j {
                T::one()
            } else {
                keep * powers[i.abs_diff(j)]
            };
        }
    }
    Ok(sigma)
}

/// Lower-triangular `L` with `L L^T = S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    lower: Matrix<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.lower.matmul(&self.lower.transpose())
    }

    /// Writes `L * eps` into `out`.
    #[inline]
    pub fn apply(&self, eps: &[T], out: &mut [T]) {
        let h = self.dim();
        for i in 0..h {
            let row = self.lower.row(i);
            out[i] = row[..=i]
                .iter()
                .zip(&eps[..=i])
                .fold(T::zero(), |acc, (l, e)| acc + *l * *e);
        }
    }
}

/// Closed-form factor of the AR(1) correlation matrix:
/// `L[i][0] = rho^i`, `L[i][j] = rho^(i-j) sqrt(1 - rho^2)` for `1 <= j <= i`.
pub fn cholesky_ar1<T: Scalar>(rho: T, horizon: usize) -> CholeskyFactor<T> {
    let rho = clamp_rho(rho);
    let c = (T::one() - rho * rho).sqrt();
    let mut powers = Vec::with_capacity(horizon);
    let mut p = T::one();
    for _ in 0..horizon {
        powers.push(p);
        p = p * rho;
    }
    let mut lower = Matrix::zeros(horizon, horizon);
    for i in 0..horizon {
        lower[(i, 0)] = powers[i];
        for j in 1..=i {
            lower[(i, j)] = powers[i - j] * c;
        }
    }
    CholeskyFactor { lower }
}

/// Standard Cholesky–Banachiewicz factorization of a symmetric matrix.
pub fn cholesky_dense<T: Scalar>(sigma: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    let n = sigma.rows();
    if n == 0 {
        return Err(Error::EmptyHorizon);
    }
    assert_eq!(n, sigma.cols(), "covariance must be square");
    let mut lower = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s = s - lower[(i, k)] * lower[(j, k)];
            }
            if i == j {
                // also rejects NaN pivots
                if s.partial_cmp(&T::lit(MIN_PIVOT)) != Some(std::cmp::Ordering::Greater) {
                    return Err(Error::NotPositiveDefinite {
                        row: i,
                        pivot: s.to_f64_lossy(),
                    });
                }
                lower[(i, i)] = s.sqrt();
            } else {
                lower[(i, j)] = s / lower[(j, j)];
            }
        }
    }
    Ok(CholeskyFactor { lower })
}

/// Seeded RNG used for every random draw in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-series seed: `seed XOR fnv1a64(series_id)`.
pub fn series_seed(seed: u64, series_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let hash = series_id
        .bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME));
    seed ^ hash
}

/// `n_paths x horizon` i.i.d. standard normals, drawn path-major.
pub fn standard_normal_noise<T: Scalar>(n_paths: usize, horizon: usize, seed: u64) -> Matrix<T> {
    let mut rng = rng_from_seed(seed);
    let data = (0..n_paths * horizon)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        })
        .collect();
    Matrix::from_vec(n_paths, horizon, data)
}

/// Maps each noise row `eps` to `Phi(L eps)`, kept strictly inside (0, 1).
pub fn correlated_uniforms<T: Scalar>(factor: &CholeskyFactor<T>, noise: &Matrix<T>) -> Matrix<T> {
    let h = factor.dim();
    assert_eq!(noise.cols(), h, "noise width must equal the factor dimension");
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon();
    let mut out = Matrix::zeros(noise.rows(), h);
    let mut z = vec![T::zero(); h];
    for n in 0..noise.rows() {
        factor.apply(noise.row(n), &mut z);
        for (dst, zi) in out.row_mut(n).iter_mut().zip(&z) {
            *dst = norm_cdf(*zi).max(lo).min(hi);
        }
    }
    out
}

/// Draws `n_paths` rows of correlated uniforms, deterministic in `seed`.
pub fn sample_copula_uniforms<T: Scalar>(factor: &CholeskyFactor<T>, n_paths: usize, seed: u64) -> Matrix<T> {
    let noise = standard_normal_noise(n_paths, factor.dim(), seed);
    correlated_uniforms(factor, &noise)
}

/// Lag-one Pearson autocorrelation `Corr(x[..T-1], x[1..])`, clamped to
/// `[-0.999, 0.999]`; zero when either slice is constant.
pub fn estimate_rho<T: Scalar>(series: &[T]) -> Result<T> {
    let t = series.len();
    if t < 3 {
        return Err(Error::SeriesTooShort { needed: 3, got: t });
    }
    let a = &series[..t - 1];
    let b = &series[1..];
    let n = T::from_usize_lossy(t - 1);
    let mean_a = a.iter().copied().sum::<T>() / n;
    let mean_b = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        let dx = *x - mean_a;
        let dy = *y - mean_b;
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return Ok(T::zero());
    }
    Ok(clamp_rho(sab / (saa.sqrt() * sbb.sqrt())))
}
