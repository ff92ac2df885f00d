//! Sample-based CRPS and variogram score, baseline normalization and the
//! median-across-series aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{median, Matrix, Scalar};

/// Variogram exponent.
pub const VS_POWER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crps<T> {
    pub total: T,
    pub by_horizon: Vec<T>,
}

fn check_horizon<T: Scalar>(paths: &Matrix<T>, observed: &[T]) -> Result<()> {
    if paths.cols() != observed.len() {
        return Err(Error::HorizonMismatch {
            expected: observed.len(),
            got: paths.cols(),
        });
    }
    Ok(())
}

/// CRPS of an ensemble of `N >= 2` paths, summed over horizons.
///
/// Per horizon: `mean_n |x - y_n| - 1/(2 N (N-1)) sum_{n != m} |y_n - y_m|`.
/// The pair sum is computed from the sorted ensemble as
/// `2 sum_k (2k - N + 1) y_(k)`, O(N log N).
pub fn crps<T: Scalar>(paths: &Matrix<T>, observed: &[T]) -> Result<Crps<T>> {
    check_horizon(paths, observed)?;
    let n = paths.rows();
    if n < 2 {
        return Err(Error::TooFewPaths(n));
    }
    let nf = T::from_usize_lossy(n);
    let mut column = vec![T::zero(); n];
    let by_horizon: Vec<T> = observed
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            for (dst, row) in column.iter_mut().zip(paths.iter_rows()) {
                *dst = row[i];
            }
            let abs_err = column.iter().map(|&y| (x - y).abs()).sum::<T>() / nf;
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let weighted: T = column
                .iter()
                .enumerate()
                .map(|(k, &y)| T::from_usize_lossy(2 * k + 1) * y - nf * y)
                .sum();
            // sum over ordered pairs n != m of |y_n - y_m| = 2 * weighted
            let pair = weighted / (nf * (nf - T::one()));
            (abs_err - pair).max(T::zero())
        })
        .collect();
    Ok(Crps {
        total: by_horizon.iter().copied().sum(),
        by_horizon,
    })
}

/// CRPS of a single deterministic path: the absolute error per horizon.
pub fn crps_point<T: Scalar>(path: &[T], observed: &[T]) -> Result<Crps<T>> {
    if path.len() != observed.len() {
        return Err(Error::HorizonMismatch {
            expected: observed.len(),
            got: path.len(),
        });
    }
    let by_horizon: Vec<T> = path.iter().zip(observed).map(|(y, x)| (*x - *y).abs()).collect();
    Ok(Crps {
        total: by_horizon.iter().copied().sum(),
        by_horizon,
    })
}

/// Variogram score with exponent 0.5 over all ordered pairs `(i, j)`; the
/// expectation is the ensemble mean over paths.
pub fn variogram_score<T: Scalar>(paths: &Matrix<T>, observed: &[T]) -> Result<T> {
    check_horizon(paths, observed)?;
    let n = paths.rows();
    if n == 0 {
        return Err(Error::TooFewPaths(0));
    }
    let h = observed.len();
    let nf = T::from_usize_lossy(n);
    let mut total = T::zero();
    for i in 0..h {
        for j in (i + 1)..h {
            let obs = (observed[i] - observed[j]).abs().sqrt();
            let ens = paths.iter_rows().map(|r| (r[i] - r[j]).abs().sqrt()).sum::<T>() / nf;
            let d = obs - ens;
            total = total + d * d;
        }
    }
    // (i, j) and (j, i) contribute equally; the diagonal contributes zero
    Ok(total + total)
}

/// Scores of one method on one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScores {
    pub crps_total: f64,
    pub vs_total: f64,
    pub crps_by_horizon: Vec<f64>,
}

impl SeriesScores {
    pub fn from_paths(paths: &Matrix<f64>, observed: &[f64]) -> Result<Self> {
        let c = crps(paths, observed)?;
        Ok(Self {
            crps_total: c.total,
            vs_total: variogram_score(paths, observed)?,
            crps_by_horizon: c.by_horizon,
        })
    }

    /// Scores a deterministic forecast as a single-path ensemble.
    pub fn from_point(path: &[f64], observed: &[f64]) -> Result<Self> {
        let c = crps_point(path, observed)?;
        let single = Matrix::from_vec(1, path.len(), path.to_vec());
        Ok(Self {
            crps_total: c.total,
            vs_total: variogram_score(&single, observed)?,
            crps_by_horizon: c.by_horizon,
        })
    }
}

/// Per-series scores divided by the baseline's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub crps: Option<f64>,
    pub vs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub median_normalized_crps: Option<f64>,
    pub median_normalized_vs: Option<f64>,
    /// Series present in both the scores and the baseline.
    pub n_series: usize,
    pub n_excluded_crps: usize,
    pub n_excluded_vs: usize,
    pub normalized: BTreeMap<String, NormalizedScores>,
}

/// Divides each series' scores by its baseline and takes medians across
/// series. Series whose baseline score is zero are excluded from that
/// metric's median.
pub fn normalize_and_aggregate(
    scores: &BTreeMap<String, SeriesScores>,
    baseline: &BTreeMap<String, SeriesScores>,
) -> Result<Aggregates> {
    let mut normalized = BTreeMap::new();
    let (mut crps_vals, mut vs_vals) = (Vec::new(), Vec::new());
    let (mut ex_crps, mut ex_vs) = (0, 0);
    for (id, s) in scores {
        let Some(b) = baseline.get(id) else { continue };
        let ratio = |num: f64, den: f64, excluded: &mut usize, sink: &mut Vec<f64>| {
            if den > 0.0 {
                let r = num / den;
                sink.push(r);
                Some(r)
            } else {
                *excluded += 1;
                None
            }
        };
        let crps = ratio(s.crps_total, b.crps_total, &mut ex_crps, &mut crps_vals);
        let vs = ratio(s.vs_total, b.vs_total, &mut ex_vs, &mut vs_vals);
        normalized.insert(id.clone(), NormalizedScores { crps, vs });
    }
    if crps_vals.is_empty() && vs_vals.is_empty() {
        return Err(Error::NoComparableSeries);
    }
    if ex_crps + ex_vs > 0 {
        log::warn!("zero baseline score: excluded {ex_crps} series from CRPS and {ex_vs} from VS");
    }
    Ok(Aggregates {
        median_normalized_crps: median(&crps_vals),
        median_normalized_vs: median(&vs_vals),
        n_series: normalized.len(),
        n_excluded_crps: ex_crps,
        n_excluded_vs: ex_vs,
        normalized,
    })
}

/// Median over series of `100 (a - b) / a` at each horizon, where `a` is the
/// reference (autoregressive) score and `b` the challenger (copula). Cells
/// with `a == 0` are skipped; a horizon with no cells yields `None`.
pub fn pct_improvement_by_horizon(
    reference: &BTreeMap<String, Vec<f64>>,
    challenger: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<Option<f64>>> {
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = reference
        .iter()
        .filter_map(|(id, a)| challenger.get(id).map(|b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoComparableSeries);
    }
    let h = pairs.iter().map(|(a, b)| a.len().min(b.len())).max().unwrap_or(0);
    Ok((0..h)
        .map(|i| {
            let cells: Vec<f64> = pairs
                .iter()
                .filter_map(|(a, b)| match (a.get(i), b.get(i)) {
                    (Some(&a), Some(&b)) if a != 0.0 => Some(100.0 * (a - b) / a),
                    _ => None,
                })
                .collect();
            median(&cells)
        })
        .collect())
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && values[idx[end + 1]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &k in &idx[start..=end] {
            out[k] = rank;
        }
        start = end + 1;
    }
    out
}

/// Spearman rank correlation; `None` for fewer than two points or constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    // O(N^2) oracle straight from the definition.
    fn crps_brute(paths: &Matrix<f64>, obs: &[f64]) -> Vec<f64> {
        let n = paths.rows();
        (0..obs.len())
            .map(|i| {
                let col = paths.column(i);
                let e1 = col.iter().map(|y| (obs[i] - y).abs()).sum::<f64>() / n as f64;
                let mut pair = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        if a != b {
                            pair += (col[a] - col[b]).abs();
                        }
                    }
                }
                e1 - pair / (2.0 * n as f64 * (n as f64 - 1.0))
            })
            .collect()
    }

    fn vs_brute(paths: &Matrix<f64>, obs: &[f64]) -> f64 {
        let h = obs.len();
        let mut s = 0.0;
        for i in 0..h {
            for j in 0..h {
                let e: f64 = paths
                    .iter_rows()
                    .map(|r| (r[i] - r[j]).abs().powf(0.5))
                    .sum::<f64>()
                    / paths.rows() as f64;
                s += ((obs[i] - obs[j]).abs().powf(0.5) - e).powi(2);
            }
        }
        s
    }

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn crps_examples() {
        let obs = [1.0, 2.0, 3.0];
        let perfect = m(&[&obs, &obs, &obs]);
        assert_eq!(crps(&perfect, &obs).unwrap().total, 0.0);
        let constant = m(&[&[2.0, 2.0, 2.0], &[2.0, 2.0, 2.0]]);
        let c = crps(&constant, &obs).unwrap();
        assert_eq!(c.by_horizon, vec![1.0, 0.0, 1.0]);
        assert_eq!(c.total, 2.0);
        assert!(matches!(crps(&m(&[&obs]), &obs), Err(Error::TooFewPaths(1))));
        assert!(matches!(crps(&constant, &[1.0]), Err(Error::HorizonMismatch { .. })));
    }

    #[test]
    fn gaussian_crps_desk_check() {
        let z: Matrix<f64> = crate::copula::standard_normal_noise(100_000, 2, 77);
        let c = crps(&z, &[0.0, 0.0]).unwrap();
        for v in c.by_horizon {
            assert!((v - 0.23369497725510913).abs() < 0.005, "{v}");
        }
    }

    #[test]
    fn vs_examples() {
        assert_eq!(variogram_score(&m(&[&[1.0, 5.0, 2.0]]), &[1.0, 5.0, 2.0]).unwrap(), 0.0);
        assert_eq!(variogram_score(&m(&[&[0.0, 1.0]]), &[0.0, 4.0]).unwrap(), 2.0);
        assert!(variogram_score(&m(&[&[0.0, 1.0]]), &[0.0]).is_err());
    }

    #[test]
    fn point_scores_are_mae_and_single_path_vs() {
        let s = SeriesScores::from_point(&[0.0, 1.0], &[0.0, 4.0]).unwrap();
        assert_eq!(s.crps_total, 3.0);
        assert_eq!(s.vs_total, 2.0);
    }

    fn scores(c: f64, v: f64) -> SeriesScores {
        SeriesScores {
            crps_total: c,
            vs_total: v,
            crps_by_horizon: vec![c],
        }
    }

    #[test]
    fn aggregation_examples() {
        let s: BTreeMap<_, _> = [("a", 1.0), ("b", 2.0), ("c", 4.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), scores(v, v)))
            .collect();
        let agg = normalize_and_aggregate(&s, &s).unwrap();
        assert_eq!(agg.median_normalized_crps, Some(1.0));
        assert_eq!(agg.median_normalized_vs, Some(1.0));

        let base: BTreeMap<_, _> = ["a", "b", "c"].into_iter().map(|k| (k.to_string(), scores(2.0, 2.0))).collect();
        let agg = normalize_and_aggregate(&s, &base).unwrap();
        assert_eq!(agg.median_normalized_crps, Some(1.0));
        assert_eq!(agg.normalized["a"].crps, Some(0.5));
        assert_eq!(agg.normalized["c"].crps, Some(2.0));

        let mut zero = base.clone();
        zero.insert("b".into(), scores(0.0, 2.0));
        let agg = normalize_and_aggregate(&s, &zero).unwrap();
        assert_eq!(agg.n_excluded_crps, 1);
        assert_eq!(agg.n_excluded_vs, 0);
        assert_eq!(agg.median_normalized_crps, Some(1.25));

        let other: BTreeMap<_, _> = [("z".to_string(), scores(1.0, 1.0))].into_iter().collect();
        assert!(matches!(normalize_and_aggregate(&s, &other), Err(Error::NoComparableSeries)));
    }

    #[test]
    fn pct_improvement_examples() {
        let a: BTreeMap<_, _> = [("s".to_string(), vec![2.0, 0.0])].into_iter().collect();
        let b: BTreeMap<_, _> = [("s".to_string(), vec![1.5, 1.0])].into_iter().collect();
        assert_eq!(pct_improvement_by_horizon(&a, &b).unwrap(), vec![Some(25.0), None]);
        assert_eq!(pct_improvement_by_horizon(&b, &b).unwrap(), vec![Some(0.0), Some(0.0)]);
        let c: BTreeMap<_, _> = [("t".to_string(), vec![1.0])].into_iter().collect();
        assert!(pct_improvement_by_horizon(&a, &c).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn random_instances_match_oracles() {
        let mut rng = crate::copula::rng_from_seed(1);
        for _ in 0..200 {
            let n = rng.random_range(2..=20);
            let h = rng.random_range(1..=6);
            let data: Vec<f64> = (0..n * h).map(|_| rng.random_range(-10.0..10.0)).collect();
            let p = Matrix::from_vec(n, h, data);
            let obs: Vec<f64> = (0..h).map(|_| rng.random_range(-10.0..10.0)).collect();
            let fast = crps(&p, &obs).unwrap();
            for (a, b) in fast.by_horizon.iter().zip(crps_brute(&p, &obs)) {
                assert!((a - b.max(0.0)).abs() < 1e-10);
            }
            assert!((variogram_score(&p, &obs).unwrap() - vs_brute(&p, &obs)).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn scores_nonneg_and_scale_equivariant(
            data in prop::collection::vec(0.0f64..100.0, 12),
            obs in prop::collection::vec(0.0f64..100.0, 3),
            c in 0.1f64..10.0,
        ) {
            let p = Matrix::from_vec(4, 3, data.clone());
            let scaled = Matrix::from_vec(4, 3, data.iter().map(|v| v * c).collect());
            let obs_s: Vec<f64> = obs.iter().map(|v| v * c).collect();
            let c1 = crps(&p, &obs).unwrap().total;
            let v1 = variogram_score(&p, &obs).unwrap();
            prop_assert!(c1 >= 0.0 && v1 >= 0.0);
            prop_assert!((crps(&scaled, &obs_s).unwrap().total - c * c1).abs() < 1e-9 * (1.0 + c * c1));
            prop_assert!((variogram_score(&scaled, &obs_s).unwrap() - c * v1).abs() < 1e-9 * (1.0 + c * v1));
        }
    }
}
