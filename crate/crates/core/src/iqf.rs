//! Marginal distributions fitted to predicted quantile knots.
//!
//! Between knots the quantile function is linear. Beyond the outermost knots
//! it extrapolates with exponential tails whose scales match the density of
//! the adjacent linear segment, so the density is continuous at both
//! junctions:
//!
//! ```text
//! q(u) = x_1 + s_l * ln(u / a_1)                     u < a_1
//! q(u) = x_K + s_r * ln((1 - a_K) / (1 - u))         u > a_K
//! s_l  = a_1 (x_2 - x_1) / (a_2 - a_1)
//! s_r  = (1 - a_K)(x_K - x_{K-1}) / (a_K - a_{K-1})
//! ```
//!
//! For non-negative series the left tail is truncated at zero and the
//! remaining left-tail mass `p0 = a_1 exp(-x_1 / s_l)` sits as a point mass
//! at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// The default knot levels `{0.1, 0.2, ..., 0.9}`.
pub fn default_levels<T: Scalar>() -> Vec<T> {
    (1..=9).map(|k| T::lit(k as f64 / 10.0)).collect()
}

/// Quantile levels and the forecast values predicted at them.
///
/// Values may cross on construction; [`fit_iqf`] repairs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileKnots<T> {
    levels: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> QuantileKnots<T> {
    pub fn new(levels: Vec<T>, values: Vec<T>) -> Result<Self> {
        if levels.len() != values.len() {
            return Err(Error::InvalidKnots(format!(
                "{} levels but {} values",
                levels.len(),
                values.len()
            )));
        }
        if levels.len() < 2 {
            return Err(Error::InvalidKnots(format!(
                "need at least 2 knots, got {}",
                levels.len()
            )));
        }
        if levels
            .iter()
            .any(|a| !a.is_finite() || *a <= T::zero() || *a >= T::one())
        {
            return Err(Error::InvalidKnots("levels must lie in (0, 1)".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidKnots(
                "levels must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot value".into()));
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            levels: self.levels.clone(),
            values: self.values.iter().map(|v| *v * factor).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> QuantileKnots<U> {
        QuantileKnots {
            levels: self.levels.iter().map(|a| U::lit(a.to_f64_lossy())).collect(),
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Minimal spacing inserted between tied knot values.
pub fn knot_spacing<T: Scalar>(values: &[T]) -> T {
    let scale = values.iter().fold(T::one(), |m, v| m.max(v.abs()));
    T::lit(1e-9) * scale
}

/// Removes quantile crossing with a running maximum, then separates ties by
/// `1e-9 * max(1, max |v|)` so the result is strictly increasing.
pub fn repair_monotone<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.len() < 2 {
        return Err(Error::InvalidKnots(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidKnots("non-finite knot value".into()));
    }
    let eps = knot_spacing(values);
    let mut out = Vec::with_capacity(values.len());
    out.push(values[0]);
    for &v in &values[1..] {
        let prev = *out.last().expect("non-empty");
        out.push(if v > prev { v } else { prev + eps });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftTail<T> {
    pub scale: T,
    pub point_mass_at_zero: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RightTail<T> {
    pub scale: T,
}

/// Continuous, invertible marginal built from repaired knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDistribution<T> {
    knots: QuantileKnots<T>,
    left_tail: LeftTail<T>,
    right_tail: RightTail<T>,
    nonneg_support: bool,
}

/// Fits the piecewise-linear marginal with exponential tails.
///
/// With `nonneg`, knot values are first clamped at zero and the left tail is
/// truncated there.
pub fn fit_iqf<T: Scalar>(knots: &QuantileKnots<T>, nonneg: bool) -> Result<MarginalDistribution<T>> {
    if knots.len() < 2 {
        return Err(Error::InvalidKnots(format!(
            "need at least 2 knots, got {}",
            knots.len()
        )));
    }
    let raw: Vec<T> = if nonneg {
        knots.values.iter().map(|v| v.max(T::zero())).collect()
    } else {
        knots.values.clone()
    };
    let values = repair_monotone(&raw)?;
    let a = &knots.levels;
    let k = a.len();

    let s_l = a[0] * (values[1] - values[0]) / (a[1] - a[0]);
    let s_r = (T::one() - a[k - 1]) * (values[k - 1] - values[k - 2]) / (a[k - 1] - a[k - 2]);
    let p0 = if nonneg {
        a[0] * (-values[0] / s_l).exp()
    } else {
        T::zero()
    };

    Ok(MarginalDistribution {
        knots: QuantileKnots {
            levels: a.clone(),
            values,
        },
        left_tail: LeftTail {
            scale: s_l,
            point_mass_at_zero: p0,
        },
        right_tail: RightTail { scale: s_r },
        nonneg_support: nonneg,
    })
}

impl<T: Scalar> MarginalDistribution<T> {
    pub fn knots(&self) -> &QuantileKnots<T> {
        &self.knots
    }

    pub fn left_tail(&self) -> LeftTail<T> {
        self.left_tail
    }

    pub fn right_tail(&self) -> RightTail<T> {
        self.right_tail
    }

    pub fn nonneg_support(&self) -> bool {
        self.nonneg_support
    }

    /// Probability mass placed at zero (0 unless the support is truncated).
    pub fn point_mass_at_zero(&self) -> T {
        self.left_tail.point_mass_at_zero
    }

    /// Inverse CDF. `u` must lie strictly inside (0, 1).
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(Error::InvalidProbability(u.to_f64_lossy()));
        }
        Ok(self.quantile_unchecked(u))
    }

    /// Inverse CDF without the domain check, for the sampling hot path.
    pub(crate) fn quantile_unchecked(&self, u: T) -> T {
        let a = &self.knots.levels;
        let x = &self.knots.values;
        let k = a.len();
        if u < a[0] {
            if self.nonneg_support && u <= self.left_tail.point_mass_at_zero {
                return T::zero();
            }
            let q = x[0] + self.left_tail.scale * (u / a[0]).ln();
            return if self.nonneg_support { q.max(T::zero()) } else { q };
        }
        if u > a[k - 1] {
            return x[k - 1] + self.right_tail.scale * ((T::one() - a[k - 1]) / (T::one() - u)).ln();
        }
        // a[j] <= u <= a[j + 1]
        let j = a.partition_point(|&level| level <= u).clamp(1, k - 1) - 1;
        let w = (u - a[j]) / (a[j + 1] - a[j]);
        x[j] + w * (x[j + 1] - x[j])
    }

    /// Right-continuous CDF, total on finite reals.
    pub fn cdf(&self, x: T) -> T {
        let a = &self.knots.levels;
        let v = &self.knots.values;
        let k = a.len();
        if self.nonneg_support && x < T::zero() {
            return T::zero();
        }
        if x < v[0] {
            return a[0] * ((x - v[0]) / self.left_tail.scale).exp();
        }
        if x > v[k - 1] {
            return T::one() - (T::one() - a[k - 1]) * (-(x - v[k - 1]) / self.right_tail.scale).exp();
        }
        let j = v.partition_point(|&value| value <= x).clamp(1, k - 1) - 1;
        let w = (x - v[j]) / (v[j + 1] - v[j]);
        a[j] + w * (a[j + 1] - a[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear_knots() -> QuantileKnots<f64> {
        QuantileKnots::new(
            default_levels(),
            (1..=9).map(|k| 10.0 * k as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn repair_running_max_with_spacing() {
        let eps = 1e-9 * 4.0;
        assert_eq!(
            repair_monotone(&[1.0, 3.0, 2.0, 4.0]).unwrap(),
            vec![1.0, 3.0, 3.0 + eps, 4.0]
        );
        assert_eq!(repair_monotone(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let eps = 1e-9 * 5.0;
        assert_eq!(
            repair_monotone(&[5.0, 5.0, 5.0]).unwrap(),
            vec![5.0, 5.0 + eps, 5.0 + eps + eps]
        );
    }

    #[test]
    fn repair_rejects_non_finite() {
        assert!(matches!(
            repair_monotone(&[1.0, f64::NAN]),
            Err(Error::InvalidKnots(_))
        ));
        assert!(matches!(
            repair_monotone(&[f64::INFINITY, 1.0]),
            Err(Error::InvalidKnots(_))
        ));
    }

    #[test]
    fn knots_validation() {
        assert!(QuantileKnots::new(vec![0.1], vec![1.0]).is_err());
        assert!(QuantileKnots::new(vec![0.1, 0.2], vec![1.0]).is_err());
        assert!(QuantileKnots::new(vec![0.2, 0.1], vec![1.0, 2.0]).is_err());
        assert!(QuantileKnots::new(vec![0.0, 0.5], vec![1.0, 2.0]).is_err());
        assert!(QuantileKnots::new(vec![0.5, 1.0], vec![1.0, 2.0]).is_err());
        // crossing values are accepted, repair happens at fit time
        assert!(QuantileKnots::new(vec![0.1, 0.2], vec![2.0, 1.0]).is_ok());
    }

    #[test]
    fn linear_fixture_tail_scales_and_mass() {
        let d = fit_iqf(&linear_knots(), true).unwrap();
        assert_relative_eq!(d.quantile(0.5).unwrap(), 50.0, epsilon = 1e-12);
        assert_relative_eq!(d.right_tail().scale, 10.0, epsilon = 1e-12);
        assert_relative_eq!(d.left_tail().scale, 10.0, epsilon = 1e-12);
        assert_relative_eq!(d.point_mass_at_zero(), 0.036787944117144235, epsilon = 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let d = fit_iqf(&QuantileKnots::new(vec![0.2, 0.3], vec![20.0, 30.0]).unwrap(), false).unwrap();
        assert_relative_eq!(d.quantile(0.25).unwrap(), 25.0, epsilon = 1e-12);

        let d = fit_iqf(&linear_knots(), true).unwrap();
        assert_eq!(d.quantile(0.9).unwrap(), 90.0);
        assert_relative_eq!(d.quantile(0.99).unwrap(), 113.02585092994046, epsilon = 1e-9);
        assert!(matches!(d.quantile(0.0), Err(Error::InvalidProbability(_))));
        assert!(matches!(d.quantile(1.0), Err(Error::InvalidProbability(_))));
        assert!(d.quantile(f64::NAN).is_err());
    }

    #[test]
    fn cdf_examples() {
        let d = fit_iqf(&linear_knots(), true).unwrap();
        assert_relative_eq!(d.cdf(50.0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(d.cdf(113.02585092994046), 0.99, epsilon = 1e-12);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_relative_eq!(d.cdf(0.0), d.point_mass_at_zero(), epsilon = 1e-15);
        assert_eq!(d.quantile(d.point_mass_at_zero() * 0.5).unwrap(), 0.0);
        assert!(d.cdf(1e300) <= 1.0);
        let free = fit_iqf(&linear_knots(), false).unwrap();
        assert_eq!(free.cdf(-1e300), 0.0);
        assert!(free.quantile(1e-6).unwrap() < 0.0);
    }

    #[test]
    fn nonneg_clamps_negative_knots() {
        let k = QuantileKnots::new(vec![0.1, 0.5, 0.9], vec![-3.0, -1.0, 2.0]).unwrap();
        let d = fit_iqf(&k, true).unwrap();
        assert_eq!(d.knots().values()[0], 0.0);
        assert!(d.quantile(1e-9).unwrap() >= 0.0);
    }

    #[test]
    fn tail_continuity_at_outer_knots() {
        let d = fit_iqf(&linear_knots(), false).unwrap();
        let h = 1e-13;
        assert!((d.quantile(0.1 - h).unwrap() - 10.0).abs() < 1e-9);
        assert!((d.quantile(0.9 + h).unwrap() - 90.0).abs() < 1e-9);
        assert_eq!(d.quantile(0.1).unwrap(), 10.0);
    }

    #[test]
    fn degenerate_knots_fit() {
        let k = QuantileKnots::new(default_levels(), vec![3.0; 9]).unwrap();
        let d = fit_iqf(&k, true).unwrap();
        let q: f64 = d.quantile(0.5).unwrap();
        assert!((q - 3.0).abs() < 1e-7);
    }

    #[test]
    fn f32_instantiation() {
        let k: QuantileKnots<f32> = linear_knots().cast();
        let d = fit_iqf(&k, true).unwrap();
        assert!((d.quantile(0.99).unwrap() - 113.02585).abs() < 1e-3);
    }

    fn arb_knots() -> impl Strategy<Value = QuantileKnots<f64>> {
        prop::collection::vec(0.0f64..100.0, 9).prop_map(|raw| {
            let mut v = raw;
            v.sort_by(|a, b| a.total_cmp(b));
            QuantileKnots::new(default_levels(), v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 2..20)) {
            let once = repair_monotone(&v).unwrap();
            prop_assert_eq!(repair_monotone(&once).unwrap(), once.clone());
            prop_assert!(once.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn cdf_inverts_quantile(k in arb_knots(), nonneg in any::<bool>(), t in 0.0f64..1.0) {
            let d = fit_iqf(&k, nonneg).unwrap();
            let lo = d.point_mass_at_zero() + 1e-6;
            let u = lo + t * (1.0 - 1e-6 - lo);
            let x = d.quantile(u).unwrap();
            prop_assert!((d.cdf(x) - u).abs() < 1e-9, "u={} x={} cdf={}", u, x, d.cdf(x));
        }

        #[test]
        fn quantile_inverts_cdf_inside_knots(k in arb_knots(), t in 0.0f64..1.0) {
            let d = fit_iqf(&k, false).unwrap();
            let v = d.knots().values();
            let x = v[0] + t * (v[8] - v[0]);
            let back = d.quantile(d.cdf(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn monotone(k in arb_knots(), a in -50.0f64..200.0, b in -50.0f64..200.0,
                    u1 in 1e-6f64..0.999999, u2 in 1e-6f64..0.999999) {
            let d = fit_iqf(&k, true).unwrap();
            let (x1, x2) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(d.cdf(x1) <= d.cdf(x2));
            let (p, q) = if u1 < u2 { (u1, u2) } else { (u2, u1) };
            prop_assert!(d.quantile(p).unwrap() <= d.quantile(q).unwrap());
        }
    }
}
