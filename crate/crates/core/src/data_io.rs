//! Dataset ingestion (Monash `.tsf`, long-format CSV), holdout splitting and
//! result files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathgen::{write_paths_csv, SamplePaths};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
    /// Index of the first holdout value; equals `values.len()` before splitting.
    split_at: usize,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        let split_at = values.len();
        Self {
            id: id.into(),
            values,
            split_at,
        }
    }

    pub fn context(&self) -> &[f64] {
        &self.values[..self.split_at]
    }

    pub fn holdout(&self) -> &[f64] {
        &self.values[self.split_at..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub frequency: Option<String>,
    pub seasonality: Option<usize>,
    pub horizon: Option<usize>,
    pub series: Vec<TimeSeries>,
    /// Series dropped because they contain missing values.
    pub excluded_missing: usize,
    /// Series dropped by [`split`] for being too short.
    pub excluded_short: usize,
}

/// Seasonality and forecast horizon for a collection/frequency pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetProfile {
    pub seasonality: usize,
    pub horizon: usize,
}

/// Per-dataset seasonality and horizon for the M1, M3, M4 and Tourism
/// collections. Unknown collections use the M4 horizon for the frequency.
pub fn dataset_profile(collection: Option<&str>, frequency: &str) -> Option<DatasetProfile> {
    let freq = frequency.trim().to_ascii_lowercase();
    let coll = collection.map(str::to_ascii_lowercase);
    let tourism = coll.as_deref() == Some("tourism");
    let (seasonality, horizon) = match freq.as_str() {
        "monthly" => (12, if tourism { 24 } else { 18 }),
        "quarterly" => (4, 8),
        "yearly" => (1, if tourism { 4 } else { 6 }),
        "other" => (1, 8),
        "hourly" => (24, 48),
        "daily" => (7, 14),
        "weekly" => (52, 13),
        _ => return None,
    };
    Some(DatasetProfile {
        seasonality,
        horizon,
    })
}

fn infer_collection(name: &str) -> Option<&'static str> {
    let lower = name.to_ascii_lowercase();
    ["tourism", "m1", "m3", "m4"]
        .into_iter()
        .find(|c| lower.contains(c))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept negative observations.
    pub allow_negative: bool,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn check_nonneg(series: &[TimeSeries], opts: ParseOptions) -> Result<()> {
    if opts.allow_negative {
        return Ok(());
    }
    match series.iter().find(|s| s.values.iter().any(|v| *v < 0.0)) {
        Some(s) => Err(Error::NegativeValues {
            series_id: s.id.clone(),
        }),
        None => Ok(()),
    }
}

pub fn parse_tsf(path: impl AsRef<Path>, opts: ParseOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_tsf_str(&text, stem, opts)
}

/// Parses Monash TSF text. `fallback_name` names the dataset when the header
/// has no `@relation`.
pub fn parse_tsf_str(text: &str, fallback_name: &str, opts: ParseOptions) -> Result<Dataset> {
    let mut name: Option<String> = None;
    let mut frequency: Option<String> = None;
    let mut horizon: Option<usize> = None;
    let mut attributes: Vec<String> = Vec::new();
    let mut in_data = false;
    let mut series = Vec::new();
    let mut excluded_missing = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(parse_err(line_no, format!("expected a header directive, found {line:?}")));
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let directive = parts.next().unwrap_or_default().to_ascii_lowercase();
            let arg = parts.next().map(str::trim).unwrap_or_default();
            match directive.as_str() {
                "@data" => in_data = true,
                "@relation" | "@frequency" | "@horizon" | "@attribute" | "@missing" | "@equallength"
                    if arg.is_empty() =>
                {
                    return Err(parse_err(line_no, format!("{directive} needs a value")));
                }
                "@relation" => name = Some(arg.to_string()),
                "@frequency" => frequency = Some(arg.to_string()),
                "@horizon" => {
                    horizon = Some(
                        arg.parse()
                            .map_err(|_| parse_err(line_no, format!("invalid horizon {arg:?}")))?,
                    )
                }
                "@attribute" => {
                    let attr = arg.split_whitespace().next().unwrap_or_default();
                    attributes.push(attr.to_string());
                }
                "@missing" | "@equallength" => {
                    if !matches!(arg, "true" | "false") {
                        return Err(parse_err(line_no, format!("{directive} expects true/false, got {arg:?}")));
                    }
                }
                other => log::warn!("line {line_no}: ignoring unknown directive {other}"),
            }
            continue;
        }

        let fields: Vec<&str> = line.split(':').collect();
        if !attributes.is_empty() && fields.len() != attributes.len() + 1 {
            return Err(parse_err(
                line_no,
                format!("expected {} attributes before the values, found {}", attributes.len(), fields.len() - 1),
            ));
        }
        let id = match attributes.iter().position(|a| a == "series_name") {
            Some(k) => fields[k].to_string(),
            None if fields.len() > 1 => fields[0].to_string(),
            None => format!("T{}", series.len() + excluded_missing + 1),
        };
        let raw_values = fields.last().copied().unwrap_or_default();
        let mut values = Vec::new();
        let mut missing = false;
        for tok in raw_values.split(',') {
            let tok = tok.trim();
            if tok == "?" {
                missing = true;
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid value {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        if missing {
            excluded_missing += 1;
            continue;
        }
        series.push(TimeSeries::new(id, values));
    }

    if excluded_missing > 0 {
        log::warn!("excluded {excluded_missing} series with missing values");
    }
    if series.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_nonneg(&series, opts)?;
    let name = name.unwrap_or_else(|| fallback_name.to_string());
    let collection = infer_collection(&name).or_else(|| infer_collection(fallback_name));
    let profile = frequency.as_deref().and_then(|f| dataset_profile(collection, f));
    Ok(Dataset {
        name,
        seasonality: profile.map(|p| p.seasonality),
        horizon: horizon.or(profile.map(|p| p.horizon)),
        frequency,
        series,
        excluded_missing,
        excluded_short: 0,
    })
}

/// Serializes a dataset back to TSF (no timestamps).
pub fn write_tsf(dataset: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", dataset.name);
    let _ = writeln!(out, "@attribute series_name string");
    if let Some(f) = &dataset.frequency {
        let _ = writeln!(out, "@frequency {f}");
    }
    if let Some(h) = dataset.horizon {
        let _ = writeln!(out, "@horizon {h}");
    }
    let _ = writeln!(out, "@missing false");
    let _ = writeln!(out, "@data");
    for s in &dataset.series {
        let vals: Vec<String> = s.values.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{}:{}", s.id, vals.join(","));
    }
    out
}

/// Reads long-format CSV with header `series_id,t,value`. Rows are ordered by
/// `t` within each series; series with empty or `?` values are excluded.
pub fn parse_csv_long(input: impl Read, name: &str, opts: ParseOptions) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |want: &str| {
        headers
            .iter()
            .position(|h| h.trim() == want)
            .ok_or_else(|| parse_err(1, format!("missing column {want:?}")))
    };
    let (c_id, c_t, c_v) = (col("series_id")?, col("t")?, col("value")?);
    let mut grouped: BTreeMap<String, (Vec<(f64, f64)>, bool)> = BTreeMap::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |c: usize| rec.get(c).map(str::trim).unwrap_or_default();
        let t: f64 = field(c_t)
            .parse()
            .map_err(|_| parse_err(line, format!("invalid t {:?}", field(c_t))))?;
        let entry = grouped.entry(field(c_id).to_string()).or_default();
        match field(c_v) {
            "" | "?" => entry.1 = true,
            v => {
                let v: f64 = v.parse().map_err(|_| parse_err(line, format!("invalid value {v:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite value {v}")));
                }
                entry.0.push((t, v));
            }
        }
    }
    let mut excluded_missing = 0;
    let mut series = Vec::new();
    for (id, (mut points, missing)) in grouped {
        if missing {
            excluded_missing += 1;
            continue;
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(TimeSeries::new(id, points.into_iter().map(|(_, v)| v).collect()));
    }
    if series.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_nonneg(&series, opts)?;
    Ok(Dataset {
        name: name.to_string(),
        frequency: None,
        seasonality: None,
        horizon: None,
        series,
        excluded_missing,
        excluded_short: 0,
    })
}

/// Holds out the final `horizon` values of every series. Series shorter than
/// `horizon + 3` are excluded.
pub fn split(dataset: &Dataset) -> Result<Dataset> {
    let h = dataset
        .horizon
        .ok_or_else(|| Error::Config(format!("dataset {:?} has no forecast horizon", dataset.name)))?;
    if h == 0 {
        return Err(Error::EmptyHorizon);
    }
    let mut out = dataset.clone();
    out.series.clear();
    for s in &dataset.series {
        if s.values.len() < h + 3 {
            out.excluded_short += 1;
            continue;
        }
        let mut s = s.clone();
        s.split_at = s.values.len() - h;
        out.series.push(s);
    }
    if out.excluded_short > dataset.excluded_short {
        log::warn!(
            "{}: excluded {} series shorter than horizon + 3",
            dataset.name,
            out.excluded_short - dataset.excluded_short
        );
    }
    Ok(out)
}

/// One row of `scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub series_id: String,
    pub method: String,
    pub crps_total: f64,
    pub vs_total: f64,
    pub normalized_crps: Option<f64>,
    pub normalized_vs: Option<f64>,
    pub crps_by_horizon: Vec<f64>,
}

/// Contents of `aggregates.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub methods: BTreeMap<String, MethodAggregate>,
    /// Median percent CRPS improvement of copula over autoregressive, per horizon.
    pub crps_pct_improvement_by_horizon: Option<Vec<Option<f64>>>,
    /// Median percent VS improvement of copula over autoregressive.
    pub vs_pct_improvement: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub n_series: usize,
    pub median_normalized_crps: Option<f64>,
    pub median_normalized_vs: Option<f64>,
    pub n_excluded_crps: usize,
    pub n_excluded_vs: usize,
    /// Median raw CRPS per horizon across series.
    pub median_crps_by_horizon: Vec<Option<f64>>,
}

/// Contents of `timing.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub methods: BTreeMap<String, MethodTiming>,
    /// `"<slow>_over_<fast>"` wall-time ratios, e.g. `autoregressive_over_copula`.
    pub speedups: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub wall_time_secs: f64,
    pub forward_passes: u64,
    pub n_series: usize,
}

impl TimingReport {
    /// Fills `speedups` with `t_a / t_b` for every ordered pair of methods.
    pub fn compute_speedups(&mut self) {
        self.speedups.clear();
        for (a, ta) in &self.methods {
            for (b, tb) in &self.methods {
                if a != b && tb.wall_time_secs > 0.0 {
                    self.speedups
                        .insert(format!("{a}_over_{b}"), ta.wall_time_secs / tb.wall_time_secs);
                }
            }
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores_csv(rows: &[ScoreRow], out: &mut impl std::io::Write) -> Result<()> {
    let mut rows: Vec<&ScoreRow> = rows.iter().collect();
    rows.sort_by(|a, b| (&a.series_id, &a.method).cmp(&(&b.series_id, &b.method)));
    let width = rows.iter().map(|r| r.crps_by_horizon.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "series_id",
        "method",
        "crps_total",
        "vs_total",
        "normalized_crps",
        "normalized_vs",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=width).map(|i| format!("crps_h{i}")));
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![
            r.series_id.clone(),
            r.method.clone(),
            r.crps_total.to_string(),
            r.vs_total.to_string(),
            fmt_opt(r.normalized_crps),
            fmt_opt(r.normalized_vs),
        ];
        rec.extend(r.crps_by_horizon.iter().map(f64::to_string));
        rec.resize(header.len(), String::new());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<scores.csv>", e))?;
    Ok(())
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `scores.csv`, `aggregates.json`, `paths.csv` and `timing.json`
/// into `out_dir`, overwriting existing files.
pub fn emit_results(
    out_dir: impl AsRef<Path>,
    scores: &[ScoreRow],
    aggregates: &AggregateReport,
    paths: &[SamplePaths<f64>],
    timing: &TimingReport,
) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut buf = Vec::new();
    write_scores_csv(scores, &mut buf)?;
    write_file(dir.join("scores.csv"), &buf)?;

    let p = dir.join("aggregates.json");
    write_file(p.clone(), &json_bytes(&p, aggregates)?)?;

    let mut sorted: Vec<&SamplePaths<f64>> = paths.iter().collect();
    sorted.sort_by(|a, b| (&a.series_id, a.method).cmp(&(&b.series_id, b.method)));
    let sorted: Vec<SamplePaths<f64>> = sorted.into_iter().cloned().collect();
    let mut buf = Vec::new();
    write_paths_csv(&sorted, &mut buf)?;
    write_file(dir.join("paths.csv"), &buf)?;

    let p = dir.join("timing.json");
    write_file(p.clone(), &json_bytes(&p, timing)?)?;
    Ok(())
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    write_file(path.to_path_buf(), &json_bytes(path, value)?)
}
