mod args;
mod spec;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use copula_paths::copula_module::{
    train, CopulaNet, NetworkSpec, OutputParams, TrainingConfig, TrainingExample,
};
use copula_paths::data_io::{
    emit_results, parse_csv_long, parse_tsf, split, write_json, Dataset, ParseOptions,
};
use copula_paths::forecasters::Ar1Spec;
use copula_paths::iqf::default_levels;
use copula_paths::pathgen::{write_paths_csv, Method, SamplePaths};
use copula_paths::pipeline::{run_series, sample_series, snowball_rows, summarize, PipelineConfig, SeriesRun};
use copula_paths::synthetic::{ar1_dataset, ar1_dataset_uniform_phi, Ar1Truth};

use args::{BackboneArg, Cli, Command, DataArgs, Format, OutputArg, RunArgs, TrainArgs};
use spec::{parse_copula, parse_methods, ConfigError, ForecasterFactory, ForecasterSpec};

const SYNTHETIC: &str = "synthetic";
const SYNTHETIC_HORIZON: usize = 14;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Generate(a) | Command::Score(a) | Command::Bench(a) | Command::Snowball(a) => {
            run_paths(&cli.command, a)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.is::<ConfigError>() || matches!(c.downcast_ref::<copula_paths::Error>(), Some(copula_paths::Error::Config(_)))
    });
    if config {
        2
    } else {
        1
    }
}

#[derive(Serialize)]
struct DatasetSummary {
    name: String,
    n_series: usize,
    excluded_missing: usize,
    excluded_short: usize,
    horizon: Option<usize>,
    seasonality: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: Vec<String>,
    args: &'a A,
    dataset: DatasetSummary,
}

fn write_manifest<A: Serialize>(out: &Path, command: &'static str, args: &A, ds: &Dataset) -> anyhow::Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        args,
        dataset: DatasetSummary {
            name: ds.name.clone(),
            n_series: ds.series.len(),
            excluded_missing: ds.excluded_missing,
            excluded_short: ds.excluded_short,
            horizon: ds.horizon,
            seasonality: ds.seasonality,
        },
    };
    write_json(out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn load_dataset(d: &DataArgs) -> anyhow::Result<(Dataset, Option<Vec<Ar1Truth>>)> {
    let opts = ParseOptions {
        allow_negative: d.allow_negative,
    };
    let (mut ds, truth) = if d.dataset == SYNTHETIC {
        if d.n_series == 0 || d.phis.is_empty() {
            return Err(ConfigError("synthetic data needs --n-series > 0 and at least one phi".into()).into());
        }
        let h = d.horizon.unwrap_or(SYNTHETIC_HORIZON);
        let (ds, truth) = match &d.phi_range {
            Some(r) => ar1_dataset_uniform_phi(d.n_series, d.series_length, (r[0], r[1]), d.sigma, d.mu, h, d.data_seed),
            None => ar1_dataset(d.n_series, d.series_length, &d.phis, d.sigma, d.mu, h, d.data_seed),
        };
        if !d.allow_negative {
            if let Some(s) = ds.series.iter().find(|s| s.values.iter().any(|v| *v < 0.0)) {
                return Err(copula_paths::Error::NegativeValues { series_id: s.id.clone() })
                    .context("synthetic series went negative; raise --mu or pass --allow-negative");
            }
        }
        (ds, Some(truth))
    } else {
        let path = PathBuf::from(&d.dataset);
        let format = match d.format {
            Some(f) => f,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("tsf") => Format::Tsf,
                Some("csv") => Format::Csv,
                _ => return Err(ConfigError(format!("cannot infer the format of {path:?}; pass --format")).into()),
            },
        };
        let ds = match format {
            Format::Tsf => parse_tsf(&path, opts)?,
            Format::Csv => {
                let file = File::open(&path).with_context(|| format!("opening {path:?}"))?;
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
                parse_csv_long(file, name, opts)?
            }
        };
        (ds, None)
    };
    if let Some(h) = d.horizon {
        ds.horizon = Some(h);
    }
    if let Some(m) = d.seasonality {
        ds.seasonality = Some(m);
    }
    Ok((ds, truth))
}

fn default_inner(truth: &Option<Vec<Ar1Truth>>) -> ForecasterSpec {
    if truth.is_some() {
        ForecasterSpec::Oracle
    } else {
        ForecasterSpec::Ar1(Ar1Spec::default())
    }
}

fn write_paths(path: PathBuf, paths: &[SamplePaths<f64>]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {path:?}"))?);
    write_paths_csv(paths, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_paths(command: &Command, a: &RunArgs) -> anyhow::Result<()> {
    let mut methods = parse_methods(&a.methods)?;
    if matches!(command, Command::Snowball(_)) {
        for m in [Method::Copula, Method::Autoregressive] {
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
    }
    if a.paths < 2 && !matches!(command, Command::Generate(_)) {
        return Err(ConfigError("scoring needs --paths of at least 2".into()).into());
    }
    if a.paths == 0 {
        return Err(ConfigError("--paths must be positive".into()).into());
    }
    let copula = parse_copula(&a.copula)?;
    let (ds, truth) = load_dataset(&a.data)?;
    let spec = ForecasterSpec::parse(&a.forecaster, &default_inner(&truth))?;
    let season = ds.seasonality.unwrap_or(1);
    let factory = ForecasterFactory::new(spec, truth.as_deref(), a.data.sigma, a.data.mu, season)?;
    let config = PipelineConfig {
        methods,
        n_paths: a.paths,
        seed: a.seed,
        nonneg: !a.data.allow_negative,
        levels: default_levels(),
        copula,
        seasonality: season,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads.unwrap_or(0))
        .build()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {:?}", a.out))?;

    if let Command::Generate(_) = command {
        let h = ds
            .horizon
            .ok_or_else(|| ConfigError("the dataset has no horizon; pass --horizon".into()))?;
        write_manifest(&a.out, command.name(), a, &ds)?;
        let results: Vec<_> = pool.install(|| {
            ds.series
                .par_iter()
                .map(|s| sample_series(&factory.handle(s), &s.id, &s.values, h, &config).map_err(|e| (s.id.clone(), e)))
                .collect()
        });
        let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
        let mut paths: Vec<SamplePaths<f64>> = ok.into_iter().flat_map(Result::unwrap).collect();
        paths.sort_by(|x, y| (&x.series_id, x.method).cmp(&(&y.series_id, y.method)));
        write_paths(a.out.join("paths.csv"), &paths)?;
        return report_failures(failed.into_iter().map(|r| r.unwrap_err()).collect());
    }

    let ds = split(&ds)?;
    write_manifest(&a.out, command.name(), a, &ds)?;
    let results: Vec<Result<SeriesRun, (String, copula_paths::Error)>> = pool.install(|| {
        ds.series
            .par_iter()
            .map(|s| run_series(&factory.handle(s), s, &config).map_err(|e| (s.id.clone(), e)))
            .collect()
    });
    let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let runs: Vec<SeriesRun> = ok.into_iter().map(Result::unwrap).collect();
    let summary = summarize(&runs)?;
    let paths: Vec<SamplePaths<f64>> = runs.iter().flat_map(|r| r.paths.iter().cloned()).collect();
    emit_results(&a.out, &summary.rows, &summary.aggregates, &paths, &summary.timing)?;
    if let Command::Snowball(_) = command {
        if !runs.is_empty() {
            let mut w = BufWriter::new(File::create(a.out.join("snowball.csv"))?);
            writeln!(w, "horizon,median_pct_improvement_crps")?;
            for row in snowball_rows(&summary)? {
                let v = row.median_pct_improvement.map(|v| v.to_string()).unwrap_or_default();
                writeln!(w, "{},{v}", row.horizon)?;
            }
            w.flush()?;
        }
    }
    report_failures(failed.into_iter().map(|r| r.unwrap_err()).collect())
}

fn report_failures(failed: Vec<(String, copula_paths::Error)>) -> anyhow::Result<()> {
    if failed.is_empty() {
        return Ok(());
    }
    for (id, e) in &failed {
        log::error!("series {id}: {e}");
    }
    let (id, e) = &failed[0];
    bail!("{} series failed (first: {id}: {e}); partial results written", failed.len())
}

fn run_train(a: &TrainArgs) -> anyhow::Result<()> {
    let config = TrainingConfig {
        epochs: a.epochs,
        paths_per_series: a.train_paths,
        horizon: a.train_horizon,
        learning_rate: a.learning_rate,
        ..Default::default()
    };
    let output = match a.output_params {
        OutputArg::Rho => OutputParams::Rho,
        OutputArg::RhoBeta => OutputParams::RhoBeta,
    };
    let spec = match a.backbone {
        BackboneArg::Mlp => NetworkSpec::mlp(output),
        BackboneArg::Gru => NetworkSpec::gru(output),
    };
    let (ds, truth) = load_dataset(&a.data)?;
    let fspec = match &a.forecaster {
        Some(s) => ForecasterSpec::parse(s, &default_inner(&truth))?,
        None => default_inner(&truth),
    };
    let factory = ForecasterFactory::new(fspec, truth.as_deref(), a.data.sigma, a.data.mu, ds.seasonality.unwrap_or(1))?;
    let mut net = CopulaNet::init(spec, a.seed)?;
    let levels = default_levels();
    let mut examples = Vec::new();
    for s in &ds.series {
        if s.values.len() < a.train_horizon + net.min_context() {
            log::warn!("series {}: too short for training, skipped", s.id);
            continue;
        }
        examples.push(TrainingExample::from_forecaster(
            &factory.handle(s),
            &s.id,
            &s.values,
            a.train_horizon,
            &levels,
            !a.data.allow_negative,
        )?);
    }
    if examples.is_empty() {
        bail!("no series long enough for training");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {:?}", a.out))?;
    write_manifest(&a.out, "train", a, &ds)?;
    let report = train(&mut net, &examples, &config, a.seed)?;
    net.save(a.out.join("checkpoint.json"))?;
    let mut w = BufWriter::new(File::create(a.out.join("loss_curve.csv"))?);
    writeln!(w, "epoch,mean_vs")?;
    for (i, l) in report.loss_curve.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1)?;
    }
    w.flush()?;
    log::info!("trained on {} examples, {} steps, {} skipped", examples.len(), report.steps, report.skipped);
    Ok(())
}
