//! End-to-end run over many stocks with a resumable manifest.
//!
//! Layout of the output directory:
//!
//! ```text
//! manifest.json            per-stock status, config hash, tool version
//! stocks/<code>.json       everything computed for one stock
//! traces/<setting>/<code>.<model>.csv
//! entropy.csv  predictability.csv  evaluation.csv  filter.csv  summary.csv
//! features/<setting>.csv   features/<setting>.bins.csv
//! correlation/<setting>.csv  anova/<setting>.csv
//! plots/<setting>/{entropy_hist,acc_vs_pimax,rmse_hist,acc_vs_rmse}.csv
//! ```
//!
//! While a run is in progress, finished stocks are appended to
//! `manifest.log` by a single writer; the log is folded into
//! `manifest.json` at the end, so an interrupted run resumes from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tickbound_core::entropy::estimate_entropy;
use tickbound_core::evaluate::{evaluate, EvaluationReport, GroundTruth};
use tickbound_core::predict::{run_protocol, ModelKind, ModelSpec, PredictionTrace};
use tickbound_core::predictability::fano_solve;
use tickbound_core::quantize::{count_distinct, quantize_with};
use tickbound_core::series::{build_series, filter_series, FilterDecision};
use tickbound_core::stats::{
    anova_oneway, bin_feature, normalize_minmax, spearman, volatility, PRICE_EDGES, SCALE_EDGES,
    VOLATILITY_EDGES,
};
use tickbound_core::{Price, PriceSeries, QuantizationScheme};

use crate::config::{PipelineConfig, Setting};
use crate::error::{Error, Result};
use crate::formats::{self, FeatureRow, Metadata};
use crate::ingest::parse_ticks;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StockEntry {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    /// Digest of the stock's price series; empty when it could not be read.
    pub input_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEntry {
    pub path: String,
    pub status: Status,
    pub records: usize,
    pub malformed: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub inputs: Vec<InputEntry>,
    pub stocks: BTreeMap<String, StockEntry>,
}

impl RunManifest {
    pub fn count(&self, status: Status) -> usize {
        self.stocks.values().filter(|e| e.status == status).count()
    }

    /// 0 when every stock is done, 3 when some failed, 2 when none succeeded.
    pub fn exit_code(&self) -> i32 {
        match (self.count(Status::Done), self.count(Status::Failed)) {
            (_, 0) => 0,
            (0, _) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    config_hash: String,
    stock_code: String,
    #[serde(flatten)]
    entry: StockEntry,
}

/// Everything computed for one stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockResult {
    pub stock_code: String,
    pub input_hash: String,
    pub n_ticks: usize,
    pub n_days: usize,
    pub avgprice: f64,
    pub volatility: Option<f64>,
    pub settings: Vec<SettingResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: String,
    pub scheme: Option<QuantizationScheme>,
    pub length: usize,
    pub n_distinct: usize,
    pub kept: bool,
    pub reason: Option<String>,
    pub analysis: Option<Analysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub s_est: f64,
    pub s_est_nats: f64,
    pub mean_match_length: f64,
    pub pi_max: f64,
    pub pi_max_clamped: bool,
    pub evaluations: Vec<EvaluationReport>,
}

/// Digest of a series in interchange form.
pub fn series_hash(series: &PriceSeries) -> String {
    let mut buf = Vec::new();
    formats::write_series(&mut buf, series).expect("writing to memory");
    hex::encode(Sha256::digest(buf))
}

/// Runs every setting and model on one stock. Traces are returned alongside
/// the result, keyed by setting label.
pub fn analyze_stock(
    series: &PriceSeries,
    cfg: &PipelineConfig,
    settings: &[Setting],
) -> Result<(StockResult, Vec<(String, PredictionTrace)>)> {
    let prices = series.prices_f64();
    let avgprice = series
        .mean_price()
        .ok_or(tickbound_core::Error::EmptyInput)?;
    let volatility = volatility(&prices, cfg.volatility_count).ok();
    let bounds = series.day_boundaries();
    let train_end = bounds.get(1).copied().unwrap_or(series.len());
    let seed = cfg.stock_seed(&series.stock_code);

    let mut out = Vec::with_capacity(settings.len());
    let mut traces = Vec::new();
    for &setting in settings {
        let label = setting.to_string();
        let scheme = match setting {
            Setting::Interval(t) => QuantizationScheme::fixed_interval(t),
            Setting::StateCount(sp) => {
                let train: Vec<Price> = series.prices().take(train_end).collect();
                QuantizationScheme::fixed_state_count(&train, sp)
            }
        };
        let scheme = match scheme {
            Ok(s) => s,
            Err(e) => {
                out.push(SettingResult {
                    setting: label,
                    scheme: None,
                    length: series.len(),
                    n_distinct: 0,
                    kept: false,
                    reason: Some(format!("no quantizer: {e}")),
                    analysis: None,
                });
                continue;
            }
        };
        let seq = quantize_with(series, scheme);
        let n_distinct = count_distinct(seq.states());
        let decision = filter_series(
            series,
            &scheme,
            cfg.filter.min_length,
            cfg.filter.min_states,
        );
        if let FilterDecision::Drop(reason) = decision {
            out.push(SettingResult {
                setting: label,
                scheme: Some(scheme),
                length: series.len(),
                n_distinct,
                kept: false,
                reason: Some(reason.to_string()),
                analysis: None,
            });
            continue;
        }

        let est = estimate_entropy(seq.states())?;
        let fano = fano_solve(est.s_est, n_distinct)?;
        let mut evaluations = Vec::with_capacity(cfg.models.len());
        for &model in &cfg.models {
            let spec = match model {
                ModelKind::Mc => ModelSpec::Markov,
                ModelKind::Dk => {
                    let mut dk = cfg.dk.clone();
                    dk.rng_seed = seed;
                    ModelSpec::DiffusionKernel(dk)
                }
            };
            let trace = run_protocol(&series.stock_code, seq.states(), bounds, &spec)?;
            let raw = match cfg.rmse_against {
                GroundTruth::Raw => Some(&prices[trace.start_index..]),
                GroundTruth::State => None,
            };
            evaluations.push(evaluate(&trace, &scheme, raw, Some(avgprice))?);
            traces.push((label.clone(), trace));
        }
        out.push(SettingResult {
            setting: label,
            scheme: Some(scheme),
            length: series.len(),
            n_distinct,
            kept: true,
            reason: None,
            analysis: Some(Analysis {
                s_est: est.s_est,
                s_est_nats: est.s_est_nats(),
                mean_match_length: est.mean_match_length,
                pi_max: fano.pi_max,
                pi_max_clamped: fano.clamped,
                evaluations,
            }),
        });
    }
    Ok((
        StockResult {
            stock_code: series.stock_code.clone(),
            input_hash: series_hash(series),
            n_ticks: series.len(),
            n_days: bounds.len(),
            avgprice,
            volatility,
            settings: out,
        },
        traces,
    ))
}

/// Expands directories to the tick files they contain, sorted.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = BTreeSet::new();
    for p in inputs {
        let meta = fs::metadata(p).map_err(|e| Error::io(p, e))?;
        if meta.is_dir() {
            for entry in fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
                if path.is_file() && matches!(ext, "csv" | "tsv" | "txt") {
                    out.insert(path);
                }
            }
        } else {
            out.insert(p.clone());
        }
    }
    Ok(out.into_iter().collect())
}

fn stock_json(dir: &Path, code: &str) -> PathBuf {
    dir.join("stocks").join(format!("{code}.json"))
}

fn trace_path(dir: &Path, setting: &str, code: &str, model: ModelKind) -> PathBuf {
    dir.join("traces")
        .join(setting)
        .join(format!("{code}.{model}.csv"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = formats::create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

fn load_previous(dir: &Path, config_hash: &str) -> BTreeMap<String, StockEntry> {
    let mut entries = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(dir.join("manifest.json")) {
        match serde_json::from_str::<RunManifest>(&text) {
            Ok(m) if m.config_hash == config_hash => entries = m.stocks,
            Ok(_) => info!("configuration changed; recomputing every stock"),
            Err(e) => warn!("ignoring unreadable manifest: {e}"),
        }
    }
    if let Ok(f) = fs::File::open(dir.join("manifest.log")) {
        for line in std::io::BufReader::new(f).lines().map_while(|l| l.ok()) {
            if let Ok(l) = serde_json::from_str::<LogLine>(&line) {
                if l.config_hash == config_hash {
                    entries.insert(l.stock_code, l.entry);
                }
            }
        }
    }
    entries
}

fn reusable(
    dir: &Path,
    cfg: &PipelineConfig,
    prev: Option<&StockEntry>,
    code: &str,
    hash: &str,
) -> Option<StockResult> {
    prev.filter(|e| e.status == Status::Done && e.input_hash == hash)?;
    let text = fs::read_to_string(stock_json(dir, code)).ok()?;
    let result: StockResult = serde_json::from_str(&text).ok()?;
    if result.input_hash != hash {
        return None;
    }
    if cfg.write_traces {
        for s in result.settings.iter().filter(|s| s.kept) {
            for &m in &cfg.models {
                if !trace_path(dir, &s.setting, code, m).is_file() {
                    return None;
                }
            }
        }
    }
    Some(result)
}

fn process_stock(
    dir: &Path,
    cfg: &PipelineConfig,
    settings: &[Setting],
    series: &PriceSeries,
) -> Result<StockResult> {
    let (result, traces) = analyze_stock(series, cfg, settings)?;
    if cfg.write_traces {
        for (setting, trace) in &traces {
            let path = trace_path(dir, setting, &result.stock_code, trace.model);
            write_file(&path, |w| formats::write_trace(w, trace))?;
        }
    }
    write_json(&stock_json(dir, &result.stock_code), &result)?;
    Ok(result)
}

/// Options that change how a run proceeds but not what it computes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute every stock even if the manifest says it is done.
    pub force: bool,
}

/// Runs the whole pipeline. Invalid configuration and unreadable inputs
/// fail before any processing; per-stock problems are recorded in the
/// manifest and do not stop other stocks.
pub fn run_all(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let settings = cfg.settings()?;
    let files = expand_inputs(&cfg.inputs)?;
    if files.is_empty() {
        return Err(Error::Config("inputs contain no tick files".into()));
    }
    let metadata = match &cfg.metadata {
        Some(p) => formats::read_metadata(formats::open(p)?)?,
        None => BTreeMap::new(),
    };
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_hash = cfg.hash();
    let previous = if opts.force {
        BTreeMap::new()
    } else {
        load_previous(dir, &config_hash)
    };

    // Ingest: every file in parallel, then group across files.
    let parsed: Vec<(PathBuf, Result<_>)> = files
        .par_iter()
        .map(|p| {
            let r = formats::open(p)
                .and_then(|f| parse_ticks(f, &cfg.schema, &p.display().to_string()));
            (p.clone(), r)
        })
        .collect();
    let mut inputs = Vec::with_capacity(parsed.len());
    let mut records = Vec::new();
    let mut failed_files = Vec::new();
    for (path, r) in parsed {
        let shown = path.display().to_string();
        match r {
            Ok(p) => {
                inputs.push(InputEntry {
                    path: shown,
                    status: Status::Done,
                    records: p.records.len(),
                    malformed: p.malformed,
                    reason: None,
                });
                records.extend(p.records);
            }
            Err(e) => {
                warn!("{e}");
                inputs.push(InputEntry {
                    path: shown,
                    status: Status::Failed,
                    records: 0,
                    malformed: 0,
                    reason: Some(e.to_string()),
                });
                failed_files.push((formats::stock_code_of(&path), e.to_string()));
            }
        }
    }
    let series = build_series(&records);
    drop(records);
    info!("{} files, {} stocks", files.len(), series.len());

    // Workers own their stock end to end; finished entries go to the one
    // log writer.
    let log_path = dir.join("manifest.log");
    let (tx, rx) = mpsc::channel::<(String, StockEntry)>();
    let writer = {
        let log_path = log_path.clone();
        let config_hash = config_hash.clone();
        std::thread::spawn(move || -> Result<()> {
            let mut log = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)
                .map_err(|e| Error::io(&log_path, e))?;
            for (stock_code, entry) in rx {
                let line = serde_json::to_string(&LogLine {
                    config_hash: config_hash.clone(),
                    stock_code,
                    entry,
                })?;
                writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))?;
            }
            Ok(())
        })
    };

    let outcomes: Vec<(String, StockEntry, Option<StockResult>)> = series
        .par_iter()
        .map_with(tx, |tx, (code, s)| {
            let hash = series_hash(s);
            if let Some(r) = reusable(dir, cfg, previous.get(code), code, &hash) {
                debug!("{code}: unchanged, skipped");
                let entry = StockEntry {
                    status: Status::Done,
                    reason: None,
                    input_hash: hash,
                };
                return (code.clone(), entry, Some(r));
            }
            let (entry, result) = match process_stock(dir, cfg, &settings, s) {
                Ok(r) => (
                    StockEntry {
                        status: Status::Done,
                        reason: None,
                        input_hash: hash,
                    },
                    Some(r),
                ),
                Err(e) => {
                    warn!("{code}: {e}");
                    (
                        StockEntry {
                            status: Status::Failed,
                            reason: Some(e.to_string()),
                            input_hash: hash,
                        },
                        None,
                    )
                }
            };
            let _ = tx.send((code.clone(), entry.clone()));
            (code.clone(), entry, result)
        })
        .collect();
    writer
        .join()
        .map_err(|_| Error::Config("manifest writer panicked".into()))??;

    let mut stocks = BTreeMap::new();
    let mut results = Vec::new();
    for (code, entry, result) in outcomes {
        stocks.insert(code, entry);
        results.extend(result);
    }
    for (code, reason) in failed_files {
        stocks.entry(code).or_insert(StockEntry {
            status: Status::Failed,
            reason: Some(reason),
            input_hash: String::new(),
        });
    }

    write_reports(dir, &settings, &results, &metadata)?;

    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash,
        inputs,
        stocks,
    };
    let tmp = dir.join("manifest.json.tmp");
    write_json(&tmp, &manifest)?;
    fs::rename(&tmp, dir.join("manifest.json")).map_err(|e| Error::io(dir, e))?;
    let _ = fs::remove_file(&log_path);
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub setting: String,
    pub stock_code: String,
    pub n: usize,
    pub n_distinct: usize,
    pub s_est: f64,
    pub s_est_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityRow {
    pub setting: String,
    pub stock_code: String,
    pub n: usize,
    pub n_distinct: usize,
    pub s_est: f64,
    pub pi_max: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub setting: String,
    pub stock_code: String,
    pub model: ModelKind,
    pub n_test: usize,
    pub acc: f64,
    pub rmse: f64,
    pub rmse_price_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub setting: String,
    pub stock_code: String,
    pub length: usize,
    pub n_distinct: usize,
    pub decision: String,
    pub reason: Option<String>,
}

/// One (stock, setting, model) outcome, the unit the summary averages over.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub setting: String,
    pub s_est: f64,
    pub pi_max: f64,
    pub evaluation: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub model: ModelKind,
    pub n_stocks: usize,
    pub mean_acc: f64,
    pub mean_pi_max: f64,
    pub mean_rmse: f64,
    pub mean_rmse_price_ratio: Option<f64>,
    pub share_s_est_below_2: f64,
}

/// Arithmetic means of ACC, bound and RMSE per (setting, model), plus the
/// share of stocks whose entropy estimate is under two bits. Groups appear
/// in first-seen setting order, then model order.
pub fn emit_summary(rows: &[ReportRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(tickbound_core::Error::EmptyInput.into());
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, ModelKind), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        let i = match order.iter().position(|s| *s == r.setting) {
            Some(i) => i,
            None => {
                order.push(&r.setting);
                order.len() - 1
            }
        };
        groups.entry((i, r.evaluation.model)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((i, model), g)| {
            let n = g.len() as f64;
            let mean = |f: &dyn Fn(&ReportRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            let ratios: Vec<f64> = g
                .iter()
                .filter_map(|r| r.evaluation.rmse_price_ratio)
                .collect();
            SummaryRow {
                setting: order[i].to_string(),
                model,
                n_stocks: g.len(),
                mean_acc: mean(&|r| r.evaluation.acc),
                mean_pi_max: mean(&|r| r.pi_max),
                mean_rmse: mean(&|r| r.evaluation.rmse),
                mean_rmse_price_ratio: (ratios.len() == g.len())
                    .then(|| ratios.iter().sum::<f64>() / n),
                share_s_est_below_2: g.iter().filter(|r| r.s_est < 2.0).count() as f64 / n,
            }
        })
        .collect())
}

/// Equal-width histogram over `[lo, hi)`, last bin closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistBin> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if width > 0.0 && v >= lo && v <= hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        } else if width <= 0.0 {
            counts[0] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistBin {
            bin_lo: lo + k as f64 * width,
            bin_hi: lo + (k + 1) as f64 * width,
            count,
        })
        .collect()
}

#[derive(Serialize)]
struct ModelHistBin {
    model: ModelKind,
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    stock_code: &'a str,
    model: ModelKind,
    x: f64,
    acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub stock_code: String,
    pub avgprice_bin: usize,
    pub volatility_bin: Option<usize>,
    pub scale_bin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub target: String,
    pub n: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub feature: String,
    pub target: String,
    pub n: usize,
    pub groups: usize,
    pub f: f64,
    pub p: f64,
    pub ssb: f64,
    pub sst: f64,
    pub eta2p: f64,
}

/// Builds the feature table for one setting from per-stock results.
pub fn feature_rows(
    results: &[StockResult],
    setting: &str,
    metadata: &BTreeMap<String, Metadata>,
) -> Vec<FeatureRow> {
    results
        .iter()
        .map(|r| {
            let m = metadata.get(&r.stock_code).cloned().unwrap_or_default();
            let a = r
                .settings
                .iter()
                .find(|s| s.setting == setting)
                .and_then(|s| s.analysis.as_ref());
            let acc = |k: ModelKind| {
                a.and_then(|a| a.evaluations.iter().find(|e| e.model == k))
                    .map(|e| e.acc)
            };
            FeatureRow {
                stock_code: r.stock_code.clone(),
                avgprice: r.avgprice,
                volatility: r.volatility.unwrap_or(0.0),
                life: m.life,
                scale: m.scale,
                category: m.category,
                region: m.region,
                acc_mc: acc(ModelKind::Mc),
                acc_dk: acc(ModelKind::Dk),
                pi_max: a.map(|a| a.pi_max),
            }
        })
        .collect()
}

type Getter<T> = fn(&FeatureRow) -> Option<T>;

const TARGETS: [&str; 3] = ["acc_mc", "acc_dk", "pi_max"];

fn target_of(row: &FeatureRow, target: &str) -> Option<f64> {
    match target {
        "acc_mc" => row.acc_mc,
        "acc_dk" => row.acc_dk,
        _ => row.pi_max,
    }
}

/// Spearman correlation of each quantitative feature (min-max normalised)
/// with each target, over stocks where both are present. Pairs with an
/// undefined coefficient are left out.
pub fn correlate(rows: &[FeatureRow]) -> Vec<CorrelationRow> {
    let features: [(&str, Getter<f64>); 4] = [
        ("avgprice", |r| Some(r.avgprice)),
        ("volatility", |r| Some(r.volatility)),
        ("life", |r| r.life),
        ("scale", |r| r.scale),
    ];
    let mut out = Vec::new();
    for (name, get) in features {
        for target in TARGETS {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((get(r)?, target_of(r, target)?)))
                .unzip();
            if x.len() < 3 {
                continue;
            }
            match spearman(&normalize_minmax(&x), &y) {
                Ok(rho) => out.push(CorrelationRow {
                    feature: name.into(),
                    target: target.into(),
                    n: x.len(),
                    rho,
                }),
                Err(e) => debug!("spearman {name}/{target}: {e}"),
            }
        }
    }
    out
}

/// One-way ANOVA of each target across category and region groups.
pub fn anova(rows: &[FeatureRow]) -> Vec<AnovaRow> {
    let features: [(&str, Getter<u32>); 2] =
        [("category", |r| r.category), ("region", |r| r.region)];
    let mut out = Vec::new();
    for (name, get) in features {
        for target in TARGETS {
            let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for r in rows {
                if let (Some(g), Some(v)) = (get(r), target_of(r, target)) {
                    groups.entry(g).or_default().push(v);
                }
            }
            let n = groups.values().map(Vec::len).sum();
            match anova_oneway(groups.values().map(Vec::as_slice)) {
                Ok(a) => out.push(AnovaRow {
                    feature: name.into(),
                    target: target.into(),
                    n,
                    groups: groups.len(),
                    f: a.f,
                    p: a.p,
                    ssb: a.ssb,
                    sst: a.sst,
                    eta2p: a.eta2p,
                }),
                Err(e) => debug!("anova {name}/{target}: {e}"),
            }
        }
    }
    out
}

/// Appendix-style bin indices for price, volatility and scale.
pub fn bin_rows(rows: &[FeatureRow]) -> Result<Vec<BinRow>> {
    let prices: Vec<f64> = rows.iter().map(|r| r.avgprice).collect();
    let price_bins = bin_feature(&prices, &PRICE_EDGES)?;
    rows.iter()
        .zip(price_bins)
        .map(|(r, avgprice_bin)| {
            Ok(BinRow {
                stock_code: r.stock_code.clone(),
                avgprice_bin,
                volatility_bin: Some(bin_feature(&[r.volatility], &VOLATILITY_EDGES)?[0]),
                scale_bin: r
                    .scale
                    .map(|s| bin_feature(&[s], &SCALE_EDGES).map(|b| b[0]))
                    .transpose()?,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    write_file(path, |w| formats::write_rows(w, rows, header))
}

fn write_reports(
    dir: &Path,
    settings: &[Setting],
    results: &[StockResult],
    metadata: &BTreeMap<String, Metadata>,
) -> Result<()> {
    let mut entropy = Vec::new();
    let mut predictability = Vec::new();
    let mut evaluation = Vec::new();
    let mut filter = Vec::new();
    let mut report = Vec::new();
    for setting in settings.iter().map(Setting::to_string) {
        for r in results {
            let Some(s) = r.settings.iter().find(|s| s.setting == setting) else {
                continue;
            };
            filter.push(FilterRow {
                setting: setting.clone(),
                stock_code: r.stock_code.clone(),
                length: s.length,
                n_distinct: s.n_distinct,
                decision: if s.kept { "keep" } else { "drop" }.into(),
                reason: s.reason.clone(),
            });
            let Some(a) = &s.analysis else { continue };
            entropy.push(EntropyRow {
                setting: setting.clone(),
                stock_code: r.stock_code.clone(),
                n: s.length,
                n_distinct: s.n_distinct,
                s_est: a.s_est,
                s_est_nats: a.s_est_nats,
            });
            predictability.push(PredictabilityRow {
                setting: setting.clone(),
                stock_code: r.stock_code.clone(),
                n: s.length,
                n_distinct: s.n_distinct,
                s_est: a.s_est,
                pi_max: a.pi_max,
                clamped: a.pi_max_clamped,
            });
            for e in &a.evaluations {
                evaluation.push(EvaluationRow {
                    setting: setting.clone(),
                    stock_code: r.stock_code.clone(),
                    model: e.model,
                    n_test: e.n_test,
                    acc: e.acc,
                    rmse: e.rmse,
                    rmse_price_ratio: e.rmse_price_ratio,
                });
                report.push(ReportRow {
                    setting: setting.clone(),
                    s_est: a.s_est,
                    pi_max: a.pi_max,
                    evaluation: e.clone(),
                });
            }
        }
        write_plots(&dir.join("plots").join(&setting), &report, &setting)?;

        let features = feature_rows(results, &setting, metadata);
        let fdir = dir.join("features");
        write_csv(
            &fdir.join(format!("{setting}.csv")),
            &features,
            &[
                "stock_code",
                "avgprice",
                "volatility",
                "life",
                "scale",
                "category",
                "region",
                "acc_mc",
                "acc_dk",
                "pi_max",
            ],
        )?;
        write_csv(
            &fdir.join(format!("{setting}.bins.csv")),
            &bin_rows(&features)?,
            &["stock_code", "avgprice_bin", "volatility_bin", "scale_bin"],
        )?;
        write_csv(
            &dir.join("correlation").join(format!("{setting}.csv")),
            &correlate(&features),
            &["feature", "target", "n", "rho"],
        )?;
        if !metadata.is_empty() {
            write_csv(
                &dir.join("anova").join(format!("{setting}.csv")),
                &anova(&features),
                &[
                    "feature", "target", "n", "groups", "f", "p", "ssb", "sst", "eta2p",
                ],
            )?;
        }
    }
    write_csv(
        &dir.join("entropy.csv"),
        &entropy,
        &[
            "setting",
            "stock_code",
            "n",
            "n_distinct",
            "s_est",
            "s_est_nats",
        ],
    )?;
    write_csv(
        &dir.join("predictability.csv"),
        &predictability,
        &[
            "setting",
            "stock_code",
            "n",
            "n_distinct",
            "s_est",
            "pi_max",
            "clamped",
        ],
    )?;
    write_csv(
        &dir.join("evaluation.csv"),
        &evaluation,
        &[
            "setting",
            "stock_code",
            "model",
            "n_test",
            "acc",
            "rmse",
            "rmse_price_ratio",
        ],
    )?;
    write_csv(
        &dir.join("filter.csv"),
        &filter,
        &[
            "setting",
            "stock_code",
            "length",
            "n_distinct",
            "decision",
            "reason",
        ],
    )?;
    let summary = if report.is_empty() {
        Vec::new()
    } else {
        emit_summary(&report)?
    };
    write_csv(
        &dir.join("summary.csv"),
        &summary,
        &[
            "setting",
            "model",
            "n_stocks",
            "mean_acc",
            "mean_pi_max",
            "mean_rmse",
            "mean_rmse_price_ratio",
            "share_s_est_below_2",
        ],
    )
}

const ENTROPY_BIN_WIDTH: f64 = 0.1;
const RMSE_BINS: usize = 20;

fn write_plots(dir: &Path, report: &[ReportRow], setting: &str) -> Result<()> {
    let rows: Vec<&ReportRow> = report.iter().filter(|r| r.setting == setting).collect();
    let mut seen = BTreeSet::new();
    let entropies: Vec<f64> = rows
        .iter()
        .filter(|r| seen.insert(r.evaluation.stock_code.as_str()))
        .map(|r| r.s_est)
        .collect();
    let top = entropies.iter().fold(0.0f64, |m, &v| m.max(v));
    let n_bins = ((top / ENTROPY_BIN_WIDTH).floor() as usize + 1).max(1);
    write_csv(
        &dir.join("entropy_hist.csv"),
        &histogram(&entropies, 0.0, n_bins as f64 * ENTROPY_BIN_WIDTH, n_bins),
        &["bin_lo", "bin_hi", "count"],
    )?;

    let scatter = |x: fn(&ReportRow) -> f64| -> Vec<ScatterRow<'_>> {
        rows.iter()
            .map(|r| ScatterRow {
                stock_code: &r.evaluation.stock_code,
                model: r.evaluation.model,
                x: x(r),
                acc: r.evaluation.acc,
            })
            .collect()
    };
    write_csv(
        &dir.join("acc_vs_pimax.csv"),
        &scatter(|r| r.pi_max),
        &["stock_code", "model", "x", "acc"],
    )?;
    write_csv(
        &dir.join("acc_vs_rmse.csv"),
        &scatter(|r| r.evaluation.rmse),
        &["stock_code", "model", "x", "acc"],
    )?;

    let mut hist = Vec::new();
    let models: BTreeSet<ModelKind> = rows.iter().map(|r| r.evaluation.model).collect();
    for model in models {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.evaluation.model == model)
            .map(|r| r.evaluation.rmse)
            .collect();
        let top = v.iter().fold(0.0f64, |m, &x| m.max(x));
        hist.extend(
            histogram(&v, 0.0, top, RMSE_BINS)
                .into_iter()
                .map(|b| ModelHistBin {
                    model,
                    bin_lo: b.bin_lo,
                    bin_hi: b.bin_hi,
                    count: b.count,
                }),
        );
    }
    write_csv(
        &dir.join("rmse_hist.csv"),
        &hist,
        &["model", "bin_lo", "bin_hi", "count"],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(setting: &str, model: ModelKind, acc: f64, s_est: f64) -> ReportRow {
        ReportRow {
            setting: setting.into(),
            s_est,
            pi_max: acc + 0.1,
            evaluation: EvaluationReport {
                stock_code: "x".into(),
                model,
                acc,
                rmse: 2.0 * acc,
                rmse_price_ratio: Some(acc),
                n_test: 10,
            },
        }
    }

    #[test]
    fn summary_single_stock_is_identity() {
        let s = emit_summary(&[row("T0.01", ModelKind::Mc, 0.6, 1.5)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean_acc, 0.6);
        assert_eq!(s[0].mean_pi_max, 0.7);
        assert_eq!(s[0].mean_rmse, 1.2);
        assert_eq!(s[0].share_s_est_below_2, 1.0);
    }

    #[test]
    fn summary_means_and_share() {
        let s = emit_summary(&[
            row("T0.01", ModelKind::Mc, 0.6, 1.5),
            row("T0.01", ModelKind::Mc, 0.8, 2.5),
            row("T0.05", ModelKind::Dk, 0.9, 1.0),
        ])
        .unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].mean_acc - 0.7).abs() < 1e-15);
        assert_eq!(s[0].share_s_est_below_2, 0.5);
        assert_eq!(s[0].n_stocks, 2);
        assert_eq!(
            (s[1].setting.as_str(), s[1].model),
            ("T0.05", ModelKind::Dk)
        );
    }

    #[test]
    fn summary_of_nothing_is_an_error() {
        assert!(emit_summary(&[]).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[0.0, 0.5, 1.0, 0.99], 0.0, 1.0, 2);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 3]);
        let flat = histogram(&[0.0, 0.0], 0.0, 0.0, 3);
        assert_eq!(flat[0].count, 2);
    }

    #[test]
    fn exit_codes() {
        let mut m = RunManifest {
            tool_version: TOOL_VERSION.into(),
            config_hash: String::new(),
            inputs: vec![],
            stocks: BTreeMap::new(),
        };
        let e = |status| StockEntry {
            status,
            reason: None,
            input_hash: String::new(),
        };
        m.stocks.insert("a".into(), e(Status::Done));
        assert_eq!(m.exit_code(), 0);
        m.stocks.insert("b".into(), e(Status::Failed));
        assert_eq!(m.exit_code(), 3);
        m.stocks.remove("a");
        assert_eq!(m.exit_code(), 2);
    }
}
