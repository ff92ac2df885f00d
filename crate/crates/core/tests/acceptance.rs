//! Acceptance checks, one line per criterion:
//!
//!     cargo test -p copula-paths --test acceptance
//!
//! Every experiment runs from one fixed seed chosen before the first run.
//! The report itself always exits zero so that a red criterion does not hide
//! the rest of the suite; set `ACCEPTANCE_STRICT=1` to exit non-zero on any
//! failure.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use copula_paths::copula::{
    build_covariance, cholesky_ar1, cholesky_dense, rng_from_seed, series_seed, standard_normal_noise, CopulaParams,
};
use copula_paths::copula_module::{
    fixed_noise_vs, outer_gradient, train, CopulaNet, NetworkSpec, OutputParams, TrainingConfig, TrainingExample,
};
use copula_paths::data_io::{emit_results, split, Dataset};
use copula_paths::forecasters::{Ar1Spec, ForecastRequest, ForecasterHandle, ForecasterKind};
use copula_paths::iqf::{default_levels, fit_iqf, QuantileKnots};
use copula_paths::normal::norm_inv_cdf;
use copula_paths::num::{median, Matrix};
use copula_paths::pathgen::{fit_marginals, generate_copula, generate_naive, Method, PathOptions};
use copula_paths::pipeline::{run_series, snowball_rows, summarize, CopulaSource, PipelineConfig, SeriesRun};
use copula_paths::scoring::{crps, spearman, variogram_score};
use copula_paths::synthetic::{ar1_dataset, ar1_dataset_uniform_phi, Ar1Truth};
use copula_paths::Result;

const SEED: u64 = 20261016;
const PHIS: [f64; 3] = [0.3, 0.6, 0.9];
const SIGMA: f64 = 1.0;
const MU: f64 = 20.0;

type Check = fn() -> Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn oracle(phi: f64) -> ForecasterHandle {
    ForecasterHandle::gaussian_ar1(phi, SIGMA, MU)
}

/// Type-7 empirical quantile of sorted data.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn correlation_matrix(z: &Matrix<f64>) -> Matrix<f64> {
    let (n, h) = (z.rows() as f64, z.cols());
    let means: Vec<f64> = (0..h).map(|j| z.column(j).iter().sum::<f64>() / n).collect();
    let mut cov: Matrix<f64> = Matrix::zeros(h, h);
    for row in z.iter_rows() {
        for i in 0..h {
            for j in 0..=i {
                cov[(i, j)] += (row[i] - means[i]) * (row[j] - means[j]);
            }
        }
    }
    let mut out = Matrix::zeros(h, h);
    for i in 0..h {
        for j in 0..=i {
            let r = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    out
}

fn oracle_joint() -> Result<Outcome> {
    let h = 8;
    let n_paths = 100_000;
    let (data, truth) = ar1_dataset(200, 60, &PHIS, SIGMA, MU, h, SEED);
    let levels = default_levels();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (s, t) in data.series.iter().zip(&truth) {
        let f = oracle(t.phi).forecast(&ForecastRequest::new(&s.id, &s.values, h, &levels))?;
        let params = CopulaParams::ar1(t.phi, h)?;
        let opts = PathOptions::new(n_paths, series_seed(SEED, &s.id)).allow_negative();
        let paths = generate_copula(&s.id, &f, &params, &opts)?.paths;
        // back to normal scores through each horizon's marginal
        let marginals = fit_marginals(&f, false)?;
        let mut z = Matrix::zeros(n_paths, h);
        for n in 0..n_paths {
            for i in 0..h {
                let u = marginals[i].cdf(paths[(n, i)]).clamp(1e-300, 1.0 - 1e-16);
                z[(n, i)] = norm_inv_cdf(u)?;
            }
        }
        let corr = correlation_matrix(&z);
        for i in 0..h {
            for j in 0..h {
                let target = t.phi.powi((i as i32 - j as i32).abs());
                worst = worst.max((corr[(i, j)] - target).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 0.02 && elapsed < Duration::from_secs(60),
        format!("max |corr - phi^|i-j|| = {worst:.4} (tol 0.02), runtime {:.1}s (limit 60s)", elapsed.as_secs_f64()),
    )
}

fn marginal_preservation() -> Result<Outcome> {
    let h = 8;
    let n_paths = 100_000;
    let (data, truth) = ar1_dataset(PHIS.len(), 60, &PHIS, SIGMA, MU, h, SEED);
    let levels = default_levels();
    let mut worst: f64 = 0.0;
    for (s, t) in data.series.iter().zip(&truth) {
        let f = oracle(t.phi).forecast(&ForecastRequest::new(&s.id, &s.values, h, &levels))?;
        let opts = PathOptions::new(n_paths, series_seed(SEED, &s.id)).allow_negative();
        let cop = generate_copula(&s.id, &f, &CopulaParams::ar1(t.phi, h)?, &opts)?.paths;
        let naive = generate_naive(&s.id, &f, &opts)?.paths;
        let spec = Ar1Spec::fixed(t.phi, SIGMA, MU);
        for i in 0..h {
            let sd = spec.marginal(&s.values, i + 1).1;
            let mut a = cop.column(i);
            let mut b = naive.column(i);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            for &p in &levels {
                let d = (empirical_quantile(&a, p) - empirical_quantile(&b, p)).abs() / sd;
                worst = worst.max(d);
            }
        }
    }
    outcome(
        worst <= 0.01,
        format!("max standardized quantile gap = {worst:.6} (tol 0.01; 3 series x 8 horizons x 9 levels)"),
    )
}

fn cholesky_equivalence() -> Result<Outcome> {
    let mut rng = rng_from_seed(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rho: f64 = rng.random_range(-0.999..0.999);
        let h = rng.random_range(1..=64usize);
        let dense = cholesky_dense(&build_covariance(&CopulaParams::ar1(rho, h)?)?)?;
        worst = worst.max(dense.lower().max_abs_diff(cholesky_ar1(rho, h).lower()));
    }
    outcome(worst <= 1e-10, format!("max |L_closed - L_dense| = {worst:.2e} over 100 cases (tol 1e-10)"))
}

fn brute_crps(paths: &Matrix<f64>, observed: &[f64]) -> f64 {
    let n = paths.rows() as f64;
    let mut total = 0.0;
    for (i, &x) in observed.iter().enumerate() {
        let col = paths.column(i);
        let abs_err: f64 = col.iter().map(|y| (x - y).abs()).sum::<f64>() / n;
        let mut pairs = 0.0;
        for a in &col {
            for b in &col {
                pairs += (a - b).abs();
            }
        }
        total += abs_err - pairs / (2.0 * n * (n - 1.0));
    }
    total
}

fn brute_vs(paths: &Matrix<f64>, observed: &[f64]) -> f64 {
    let h = observed.len();
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..h {
            let ens = paths
                .iter_rows()
                .map(|r| (r[i] - r[j]).abs().powf(0.5))
                .sum::<f64>()
                / paths.rows() as f64;
            total += ((observed[i] - observed[j]).abs().powf(0.5) - ens).powi(2);
        }
    }
    total
}

fn scoring_oracles() -> Result<Outcome> {
    let mut rng = rng_from_seed(SEED ^ 1);
    let (mut crps_err, mut vs_err): (f64, f64) = (0.0, 0.0);
    for case in 0..200 {
        let h = rng.random_range(1..=6usize);
        let n = rng.random_range(if case % 2 == 0 { 2 } else { 1 }..=20usize);
        let scale = rng.random_range(0.1..10.0);
        let data: Vec<f64> = (0..n * h)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let paths = Matrix::from_vec(n, h, data);
        let obs: Vec<f64> = (0..h).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        if n >= 2 {
            crps_err = crps_err.max((crps(&paths, &obs)?.total - brute_crps(&paths, &obs)).abs());
        }
        vs_err = vs_err.max((variogram_score(&paths, &obs)? - brute_vs(&paths, &obs)).abs());
    }
    let desk = crps(&standard_normal_noise::<f64>(100_000, 4, SEED), &[0.0; 4])?;
    let exact = 2.0 / (2.0 * std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt();
    let desk_err = desk.by_horizon.iter().map(|c| (c - exact).abs()).fold(0.0, f64::max);
    outcome(
        crps_err <= 1e-10 && vs_err <= 1e-10 && desk_err <= 0.005,
        format!(
            "crps vs brute force {crps_err:.1e}, vs vs brute force {vs_err:.1e} (tol 1e-10); \
             gaussian crps {:.5} vs {exact:.5}, max gap {desk_err:.4} (tol 0.005)",
            desk.by_horizon[0]
        ),
    )
}

fn pipeline_config(methods: Vec<Method>, copula: CopulaSource) -> PipelineConfig {
    PipelineConfig {
        methods,
        n_paths: 10,
        seed: SEED,
        nonneg: true,
        levels: default_levels(),
        copula,
        seasonality: 1,
    }
}

fn oracle_runs(
    data: &Dataset,
    truth: &[Ar1Truth],
    methods: &[Method],
    handle: impl Fn(f64) -> ForecasterHandle,
) -> Result<Vec<SeriesRun>> {
    data.series
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let cfg = pipeline_config(methods.to_vec(), CopulaSource::Fixed(t.phi));
            run_series(&handle(t.phi), s, &cfg)
        })
        .collect()
}

fn forward_passes() -> Result<Outcome> {
    let (n, h, series) = (10u64, 14usize, 50usize);
    let (data, truth) = ar1_dataset(series, 100, &PHIS, SIGMA, MU, h, SEED);
    let data = split(&data)?;
    let mut exact = true;
    let mut handle_total = 0;
    let mut runs = Vec::new();
    for (s, t) in data.series.iter().zip(&truth) {
        let handle = oracle(t.phi);
        let run = run_series(&handle, s, &pipeline_config(Method::ALL.to_vec(), CopulaSource::Auto))?;
        for p in &run.paths {
            let expected = match p.method {
                Method::Autoregressive => n * h as u64,
                Method::Naive | Method::Copula => 1,
            };
            exact &= p.forward_passes == expected;
        }
        handle_total += handle.forward_passes();
        runs.push(run);
    }
    exact &= handle_total == series as u64 * (n * h as u64 + 2);
    let timing = summarize(&runs)?.timing;
    let ratio = timing.methods["autoregressive"].forward_passes as f64 / timing.methods["copula"].forward_passes as f64;
    let speedup = timing.speedups["autoregressive_over_copula"];
    outcome(
        exact && ratio == 140.0 && speedup >= 10.0,
        format!("call counts exact: {exact}, call ratio {ratio} (want 140), wall-time speedup {speedup:.1}x (min 10x)"),
    )
}

/// Per-horizon `100 (a - b) / a` cells, series by horizon.
fn improvement_cells(runs: &[SeriesRun]) -> Vec<Vec<Option<f64>>> {
    runs.iter()
        .map(|r| {
            let a = &r.scores[&Method::Autoregressive].crps_by_horizon;
            let b = &r.scores[&Method::Copula].crps_by_horizon;
            a.iter()
                .zip(b)
                .map(|(a, b)| (*a != 0.0).then(|| 100.0 * (a - b) / a))
                .collect()
        })
        .collect()
}

fn column_median(cells: &[Vec<Option<f64>>], rows: &[usize], h: usize) -> f64 {
    let col: Vec<f64> = rows.iter().filter_map(|&r| cells[r][h]).collect();
    median(&col).unwrap_or(0.0)
}

fn snowballing() -> Result<Outcome> {
    let h = 14;
    let (data, truth) = ar1_dataset(200, 100, &PHIS, SIGMA, MU, h, SEED);
    let data = split(&data)?;
    let methods = [Method::Copula, Method::Autoregressive];

    let biased = oracle_runs(&data, &truth, &methods, |phi| {
        ForecasterHandle::biased_drift(1.02, ForecasterKind::GaussianAr1(Ar1Spec::fixed(phi, SIGMA, MU)))
    })?;
    let rows = snowball_rows(&summarize(&biased)?)?;
    let hs: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let imp: Vec<f64> = rows.iter().map(|r| r.median_pct_improvement.unwrap_or(f64::NAN)).collect();
    let rho = spearman(&hs, &imp).unwrap_or(f64::NAN);
    let per_phi: Vec<String> = PHIS
        .iter()
        .map(|&phi| {
            let sub: Vec<SeriesRun> = biased
                .iter()
                .zip(&truth)
                .filter(|(_, t)| t.phi == phi)
                .map(|(r, _)| r.clone())
                .collect();
            let r = summarize(&sub)
                .and_then(|s| snowball_rows(&s))
                .map(|rows| {
                    let v: Vec<f64> = rows.iter().map(|r| r.median_pct_improvement.unwrap_or(f64::NAN)).collect();
                    spearman(&hs, &v).unwrap_or(f64::NAN)
                })
                .unwrap_or(f64::NAN);
            format!("phi {phi}: {r:.2}")
        })
        .collect();

    // Null: per-horizon median improvement within three bootstrap standard
    // errors of zero at every horizon.
    let null = oracle_runs(&data, &truth, &methods, oracle)?;
    let cells = improvement_cells(&null);
    let all: Vec<usize> = (0..cells.len()).collect();
    let mut rng = rng_from_seed(SEED ^ 2);
    let boots: Vec<Vec<usize>> = (0..1000)
        .map(|_| (0..cells.len()).map(|_| rng.random_range(0..cells.len())).collect())
        .collect();
    let mut null_ok = true;
    let mut worst_z: f64 = 0.0;
    for k in 0..h {
        let m = column_median(&cells, &all, k);
        let reps: Vec<f64> = boots.iter().map(|b| column_median(&cells, b, k)).collect();
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let se = (reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
        let z = m.abs() / se;
        worst_z = worst_z.max(z);
        null_ok &= z < 3.0;
    }
    outcome(
        rho > 0.7 && null_ok,
        format!(
            "biased drift: spearman(h, improvement) = {rho:.3} (min 0.7), improvement h1 {:.1}% -> h14 {:.1}%; \
             per-phi spearman {}; unbiased oracle: max |median| / bootstrap se = {worst_z:.2} (limit 3)",
            imp[0],
            imp[h - 1],
            per_phi.join(", ")
        ),
    )
}

fn vs_dominance() -> Result<Outcome> {
    let (data, truth) = ar1_dataset(200, 100, &PHIS, SIGMA, MU, 14, SEED);
    let data = split(&data)?;
    let runs = oracle_runs(&data, &truth, &[Method::Naive, Method::Copula], oracle)?;
    let mut by_phi: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut wins = 0;
    for (r, t) in runs.iter().zip(&truth) {
        let win = r.scores[&Method::Copula].vs_total <= r.scores[&Method::Naive].vs_total;
        wins += win as usize;
        let e = by_phi.entry(format!("{}", t.phi)).or_default();
        e.0 += win as usize;
        e.1 += 1;
    }
    let frac = wins as f64 / runs.len() as f64;
    let split: Vec<String> = by_phi.iter().map(|(p, (w, n))| format!("phi {p}: {w}/{n}")).collect();
    outcome(
        frac >= 0.9,
        format!("copula VS <= naive VS on {:.1}% of series (min 90%); {}", 100.0 * frac, split.join(", ")),
    )
}

fn iqf_suite() -> Result<Outcome> {
    let levels = default_levels::<f64>();
    let linear = QuantileKnots::new(levels.clone(), (1..=9).map(|k| 10.0 * k as f64).collect())?;
    let mut round_trip: f64 = 0.0;
    let mut rng = rng_from_seed(SEED ^ 3);
    for (k, nonneg) in [(0, true), (0, false), (1, true), (2, false), (3, true)] {
        let knots = if k == 0 {
            linear.clone()
        } else {
            let mut v: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..50.0)).collect();
            v.sort_by(f64::total_cmp);
            QuantileKnots::new(levels.clone(), v)?
        };
        let dist = fit_iqf(&knots, nonneg)?;
        let p0 = dist.point_mass_at_zero();
        for _ in 0..1000 {
            let u = rng.random_range(p0 + 1e-6..1.0 - 1e-6);
            round_trip = round_trip.max((dist.cdf(dist.quantile(u)?) - u).abs());
        }
    }

    let nonneg = fit_iqf(&linear, true)?;
    let free = fit_iqf(&linear, false)?;
    let ln10 = 10f64.ln();
    let q99 = 90.0 + 10.0 * ln10;
    let q01 = 10.0 - 10.0 * ln10;
    let closed = [
        (nonneg.quantile(0.99)?, q99),
        (nonneg.cdf(q99), 0.99),
        (nonneg.cdf(113.026), 0.99),
        (free.quantile(0.01)?, q01),
        (free.cdf(q01), 0.01),
        (nonneg.point_mass_at_zero(), 0.1 * (-1f64).exp()),
        (nonneg.quantile(0.5)?, 50.0),
        (nonneg.cdf(50.0), 0.5),
        (nonneg.quantile(0.9)?, 90.0),
        (nonneg.cdf(-1.0), 0.0),
    ];
    let tail = closed.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rounded = (nonneg.quantile(0.99)? * 1000.0).round() / 1000.0;
    outcome(
        round_trip <= 1e-9 && tail <= 1e-6 && rounded == 113.026,
        format!(
            "max |cdf(quantile(u)) - u| = {round_trip:.1e} over 5000 points (tol 1e-9); \
             max closed-form gap {tail:.1e} (tol 1e-6); quantile(0.99) = {:.6}",
            nonneg.quantile(0.99)?
        ),
    )
}

fn training_examples(data: &Dataset, truth: &[Ar1Truth], horizon: usize) -> Result<Vec<TrainingExample>> {
    let levels = default_levels();
    data.series
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let handle = ForecasterHandle::gaussian_ar1(t.phi, SIGMA, 0.0);
            TrainingExample::from_forecaster(&handle, &s.id, &s.values, horizon, &levels, false)
        })
        .collect()
}

fn slope_fit(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn max_gradient_error(net: &CopulaNet, input: &[f64]) -> f64 {
    let (raw, cache) = net.forward(input);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..raw.len() {
        let mut d_raw = vec![0.0; raw.len()];
        d_raw[k] = 1.0;
        let analytic = net.backward(&cache, &d_raw);
        let mut probe = net.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let w = probe.weights()[i];
            probe.weights_mut()[i] = w + h;
            let plus = probe.forward(input).0[k];
            probe.weights_mut()[i] = w - h;
            let minus = probe.forward(input).0[k];
            probe.weights_mut()[i] = w;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

fn gru_training() -> Result<Outcome> {
    let config = TrainingConfig::default();
    let h = config.horizon;
    let (train_set, train_truth) = ar1_dataset_uniform_phi(500, 128 + h, (0.1, 0.9), SIGMA, 0.0, h, SEED);
    let (test_set, test_truth) = ar1_dataset_uniform_phi(100, 128 + h, (0.1, 0.9), SIGMA, 0.0, h, SEED + 1000);
    let examples = training_examples(&train_set, &train_truth, h)?;

    let mut net = CopulaNet::init(NetworkSpec::gru(OutputParams::Rho), SEED)?;
    let start = Instant::now();
    let report = train(&mut net, &examples, &config, SEED)?;
    let elapsed = start.elapsed();
    let mut predicted = Vec::new();
    for s in &test_set.series {
        let context = &s.values[..s.values.len() - h];
        predicted.push(net.predict_params(context, h)?.rho());
    }
    let phis: Vec<f64> = test_truth.iter().map(|t| t.phi).collect();
    let rank = spearman(&predicted, &phis).unwrap_or(f64::NAN);

    // Outer gradient against a least-squares slope of the batch loss over a
    // grid of +-0.01 around each point.
    let batch = &examples[..10];
    let noises: Vec<Matrix<f64>> = (0..batch.len())
        .map(|k| standard_normal_noise(config.paths_per_series, h, SEED + k as u64))
        .collect();
    let batch_vs = |r: f64| -> Result<f64> {
        let mut total = 0.0;
        for (ex, noise) in batch.iter().zip(&noises) {
            total += fixed_noise_vs(ex, noise, r, None)? / batch.len() as f64;
        }
        Ok(total)
    };
    let (mut slope_err, mut stencil_err): (f64, f64) = (0.0, 0.0);
    for rho0 in [-0.3, 0.0, 0.3] {
        let mut fd = 0.0;
        for (ex, noise) in batch.iter().zip(&noises) {
            fd += outer_gradient(ex, noise, rho0, None, config.fd_step)?.1 / batch.len() as f64;
        }
        let xs: Vec<f64> = (-10..=10).map(|k| rho0 + 0.001 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&r| batch_vs(r)).collect::<Result<_>>()?;
        let grid = slope_fit(&xs, &ys);
        slope_err = slope_err.max((fd - grid).abs() / grid.abs());
        // the same fit on a grid no wider than the difference stencil
        let xs: Vec<f64> = (-10..=10).map(|k| rho0 + 1e-5 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&r| batch_vs(r)).collect::<Result<_>>()?;
        let fine = slope_fit(&xs, &ys);
        stencil_err = stencil_err.max((fd - fine).abs() / fine.abs());
    }

    let mut grad_err: f64 = 0.0;
    let mut rng = rng_from_seed(SEED ^ 4);
    for (k, spec) in [
        NetworkSpec::gru(OutputParams::Rho),
        NetworkSpec::gru(OutputParams::RhoBeta),
        NetworkSpec::mlp(OutputParams::Rho),
        NetworkSpec::mlp(OutputParams::RhoBeta),
    ]
    .into_iter()
    .enumerate()
    {
        let net = CopulaNet::init(spec, SEED + k as u64)?;
        let input: Vec<f64> = (0..net.min_context().max(30)).map(|_| rng.random_range(-1.0..1.0)).collect();
        grad_err = grad_err.max(max_gradient_error(&net, &input));
    }

    outcome(
        rank > 0.8 && slope_err <= 0.05 && grad_err <= 1e-4,
        format!(
            "held-out spearman(rho, phi) = {rank:.3} (min 0.8) after {} steps in {:.1}s; \
             outer gradient vs +-0.01 grid slope {:.2}% (max 5%; +-1e-4 grid {:.2}%); \
             analytic vs numeric gradient {grad_err:.1e} (max 1e-4)",
            report.steps,
            elapsed.as_secs_f64(),
            100.0 * slope_err,
            100.0 * stencil_err
        ),
    )
}

fn scores_csv(data: &Dataset, truth: &[Ar1Truth]) -> Result<Vec<u8>> {
    let dir = tempfile::tempdir().map_err(|e| copula_paths::Error::Config(e.to_string()))?;
    let runs: Vec<SeriesRun> = data
        .series
        .iter()
        .zip(truth)
        .map(|(s, t)| run_series(&oracle(t.phi), s, &pipeline_config(Method::ALL.to_vec(), CopulaSource::Auto)))
        .collect::<Result<_>>()?;
    let summary = summarize(&runs)?;
    let paths: Vec<_> = runs.into_iter().flat_map(|r| r.paths).collect();
    emit_results(dir.path(), &summary.rows, &summary.aggregates, &paths, &summary.timing)?;
    std::fs::read(dir.path().join("scores.csv")).map_err(|e| copula_paths::Error::Config(e.to_string()))
}

fn determinism() -> Result<Outcome> {
    let (data, truth) = ar1_dataset(20, 100, &PHIS, SIGMA, MU, 14, SEED);
    let data = split(&data)?;
    let a = scores_csv(&data, &truth)?;
    let b = scores_csv(&data, &truth)?;
    outcome(
        a == b && !a.is_empty(),
        format!("two runs: {} and {} bytes, identical: {}", a.len(), b.len(), a == b),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("oracle joint correlation", oracle_joint),
        ("marginal preservation", marginal_preservation),
        ("cholesky equivalence", cholesky_equivalence),
        ("scoring oracles", scoring_oracles),
        ("forward-pass accounting", forward_passes),
        ("snowballing", snowballing),
        ("variogram dominance", vs_dominance),
        ("iqf round trip and tails", iqf_suite),
        ("copula module training", gru_training),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", 10 - failed, 10);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
