use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tickbound::config::interval_to_price;
use tickbound::formats::{self, FeatureRow};
use tickbound::ingest::{parse_ticks, Column, Schema};
use tickbound::pipeline::{self, RunOptions, Status};
use tickbound::{Error, PipelineConfig, Result};
use tickbound_core::entropy::estimate_entropy;
use tickbound_core::evaluate::{evaluate, GroundTruth};
use tickbound_core::predict::{run_protocol, ModelKind, ModelSpec};
use tickbound_core::predictability::fano_solve;
use tickbound_core::quantize::{count_distinct, quantize_with};
use tickbound_core::series::{build_series, filter_series, FilterDecision};
use tickbound_core::stats::{volatility, VolatilityCount};
use tickbound_core::{Price, QuantizationScheme};

/// Entropy, predictability bounds and online prediction for tick price series.
#[derive(Debug, Parser)]
#[command(name = "tickbound", version)]
struct Cli {
    /// Print results as JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Print the default pipeline configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse tick files and write one interchange series file per stock.
    Ingest(IngestArgs),
    /// Quantize a series file into a states file.
    Quantize(QuantizeArgs),
    /// Estimate the entropy rate of state files.
    Entropy(EntropyArgs),
    /// Add the predictability bound to an entropy table.
    Predictability(PredictabilityArgs),
    /// Run an online predictor over a states file.
    Predict(PredictArgs),
    /// Score a prediction trace.
    Evaluate(EvaluateArgs),
    /// Build the per-stock feature table.
    Features(FeaturesArgs),
    /// Spearman and ANOVA statistics over a feature table.
    Correlate(CorrelateArgs),
    /// Run the whole pipeline from a config file.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
struct SchemaArgs {
    /// Stock code column: header name or 1-based index.
    #[arg(long)]
    code_col: Option<Column>,
    /// Time column.
    #[arg(long)]
    time_col: Option<Column>,
    /// Separate date column, joined with the time column.
    #[arg(long)]
    date_col: Option<Column>,
    /// Target price column.
    #[arg(long)]
    price_col: Option<Column>,
}

impl SchemaArgs {
    fn schema(&self, base: Schema) -> Schema {
        Schema {
            code: self.code_col.clone().unwrap_or(base.code),
            time: self.time_col.clone().unwrap_or(base.time),
            date: self.date_col.clone().or(base.date),
            price: self.price_col.clone().unwrap_or(base.price),
            extra: base.extra,
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Directory for `<code>.csv` series files.
    #[arg(long)]
    out: PathBuf,
    /// Read the column mapping from this pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    schema: SchemaArgs,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    series: PathBuf,
    /// Fixed interval T in currency units.
    #[arg(long, conflicts_with = "states", required_unless_present = "states")]
    interval: Option<f64>,
    /// Fixed number of states, ranged on the first trading day.
    #[arg(long)]
    states: Option<u32>,
    /// States file to write.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the scheme JSON.
    #[arg(long)]
    scheme_out: Option<PathBuf>,
    #[arg(long, default_value_t = tickbound_core::series::DEFAULT_MIN_LENGTH)]
    min_length: usize,
    #[arg(long, default_value_t = tickbound_core::series::DEFAULT_MIN_STATES)]
    min_states: usize,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[arg(required = true)]
    states: Vec<PathBuf>,
    /// Also report the estimate with a natural-log numerator.
    #[arg(long)]
    nats: bool,
}

#[derive(Debug, Args)]
struct PredictabilityArgs {
    /// Entropy table from `entropy`, or `-` for stdin.
    entropy: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    states: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Trace file to write.
    #[arg(long)]
    out: PathBuf,
    /// Model seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Read diffusion-kernel parameters from this pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    trace: PathBuf,
    /// Scheme JSON written by `quantize`.
    #[arg(long)]
    scheme: PathBuf,
    /// Model that produced the trace; inferred from `<code>.<model>.csv` if absent.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Series file, for raw-price RMSE and the RMSE/price ratio.
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "raw")]
    rmse_against: GroundTruthArg,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(required = true)]
    series: Vec<PathBuf>,
    /// Side CSV `stock_code,life,scale,category,region`.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Evaluation table supplying `acc_mc`/`acc_dk`.
    #[arg(long)]
    evaluation: Option<PathBuf>,
    /// Predictability table supplying `pi_max`.
    #[arg(long)]
    predictability: Option<PathBuf>,
    /// Only use rows of this setting from tables that have a `setting` column.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long, value_enum, default_value = "returns")]
    volatility_count: VolatilityArg,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// Feature table, or `-` for stdin.
    features: PathBuf,
}

#[derive(Debug, Args)]
struct RunAllArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    rmse_against: Option<GroundTruthArg>,
    /// Recompute stocks the manifest marks as done.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Mc,
    Dk,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mc => ModelKind::Mc,
            ModelArg::Dk => ModelKind::Dk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroundTruthArg {
    Raw,
    State,
}

impl From<GroundTruthArg> for GroundTruth {
    fn from(g: GroundTruthArg) -> Self {
        match g {
            GroundTruthArg::Raw => GroundTruth::Raw,
            GroundTruthArg::State => GroundTruth::State,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VolatilityArg {
    Returns,
    Prices,
}

impl From<VolatilityArg> for VolatilityCount {
    fn from(v: VolatilityArg) -> Self {
        match v {
            VolatilityArg::Returns => VolatilityCount::Returns,
            VolatilityArg::Prices => VolatilityCount::Prices,
        }
    }
}

struct Out {
    json: bool,
}

impl Out {
    fn table<T: Serialize>(&self, rows: &[T], header: &[&str]) -> Result<()> {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        if self.json {
            serde_json::to_writer_pretty(&mut lock, rows)?;
            writeln!(lock).map_err(|e| Error::io("<stdout>", e))?;
        } else {
            formats::write_rows(&mut lock, rows, header)?;
        }
        Ok(())
    }
}

fn read_input(path: &Path) -> Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        Ok(Box::new(formats::open(path)?))
    }
}

#[derive(Debug, Serialize)]
struct IngestRow {
    stock_code: String,
    n_points: usize,
    n_days: usize,
    source: String,
    malformed: usize,
}

fn cmd_ingest(a: IngestArgs, out: &Out) -> Result<i32> {
    let base = match &a.config {
        Some(p) => PipelineConfig::load(p)?.schema,
        None => Schema::default(),
    };
    let schema = a.schema.schema(base);
    let mut rows = Vec::new();
    for file in &a.files {
        let source = file.display().to_string();
        let parsed = parse_ticks(formats::open(file)?, &schema, &source)?;
        if parsed.malformed > 0 {
            log::warn!("{source}: skipped {} malformed rows", parsed.malformed);
        }
        for (code, series) in build_series(&parsed.records) {
            let path = a.out.join(format!("{code}.csv"));
            let mut w = formats::create(&path)?;
            formats::write_series(&mut w, &series)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            rows.push(IngestRow {
                stock_code: code,
                n_points: series.len(),
                n_days: series.day_boundaries().len(),
                source: source.clone(),
                malformed: parsed.malformed,
            });
        }
    }
    out.table(
        &rows,
        &["stock_code", "n_points", "n_days", "source", "malformed"],
    )?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct QuantizeRow {
    stock_code: String,
    length: usize,
    n_distinct: usize,
    decision: &'static str,
    reason: Option<String>,
}

fn cmd_quantize(a: QuantizeArgs, out: &Out) -> Result<i32> {
    let series = formats::read_series_file(&a.series)?;
    let scheme = match (a.interval, a.states) {
        (Some(t), _) => {
            QuantizationScheme::fixed_interval(interval_to_price(t)?).map_err(Error::from)?
        }
        (None, Some(sp)) => {
            let end = series
                .day_boundaries()
                .get(1)
                .copied()
                .unwrap_or(series.len());
            let train: Vec<Price> = series.prices().take(end).collect();
            QuantizationScheme::fixed_state_count(&train, sp)?
        }
        (None, None) => unreachable!("clap requires one of --interval/--states"),
    };
    let seq = quantize_with(&series, scheme);
    let mut w = formats::create(&a.out)?;
    formats::write_states(&mut w, seq.states(), series.day_boundaries())?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(p) = &a.scheme_out {
        let mut w = formats::create(p)?;
        formats::write_scheme(&mut w, &scheme)?;
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    let decision = filter_series(&series, &scheme, a.min_length, a.min_states);
    let (decision, reason) = match decision {
        FilterDecision::Keep => ("keep", None),
        FilterDecision::Drop(r) => ("drop", Some(r.to_string())),
    };
    let row = QuantizeRow {
        stock_code: series.stock_code.clone(),
        length: series.len(),
        n_distinct: seq.n_distinct(),
        decision,
        reason,
    };
    out.table(
        &[row],
        &["stock_code", "length", "n_distinct", "decision", "reason"],
    )?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct EntropyRow {
    stock_code: String,
    n: usize,
    n_distinct: usize,
    s_est: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_est_nats: Option<f64>,
}

fn cmd_entropy(a: EntropyArgs, out: &Out) -> Result<i32> {
    let mut rows = Vec::new();
    for p in &a.states {
        let f = formats::read_states(formats::open(p)?, &p.display().to_string())?;
        let est = estimate_entropy(&f.states)?;
        rows.push(EntropyRow {
            stock_code: formats::stock_code_of(p),
            n: est.n,
            n_distinct: count_distinct(&f.states),
            s_est: est.s_est,
            s_est_nats: a.nats.then(|| est.s_est_nats()),
        });
    }
    let mut header = vec!["stock_code", "n", "n_distinct", "s_est"];
    if a.nats {
        header.push("s_est_nats");
    }
    out.table(&rows, &header)?;
    Ok(0)
}

fn cmd_predictability(a: PredictabilityArgs, out: &Out) -> Result<i32> {
    #[derive(Deserialize)]
    struct In {
        #[serde(default)]
        setting: Option<String>,
        stock_code: String,
        n: usize,
        n_distinct: usize,
        s_est: f64,
        #[serde(default)]
        s_est_nats: Option<f64>,
    }
    #[derive(Serialize)]
    struct Row {
        #[serde(skip_serializing_if = "Option::is_none")]
        setting: Option<String>,
        stock_code: String,
        n: usize,
        n_distinct: usize,
        s_est: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        s_est_nats: Option<f64>,
        pi_max: f64,
    }
    let input: Vec<In> = formats::read_rows(read_input(&a.entropy)?)?;
    let rows = input
        .into_iter()
        .map(|r| {
            Ok(Row {
                pi_max: fano_solve(r.s_est, r.n_distinct)?.pi_max,
                setting: r.setting,
                stock_code: r.stock_code,
                n: r.n,
                n_distinct: r.n_distinct,
                s_est: r.s_est,
                s_est_nats: r.s_est_nats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.table(&rows, &["stock_code", "n", "n_distinct", "s_est", "pi_max"])?;
    Ok(0)
}

fn cmd_predict(a: PredictArgs, out: &Out) -> Result<i32> {
    let cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let f = formats::read_states(formats::open(&a.states)?, &a.states.display().to_string())?;
    let code = formats::stock_code_of(&a.states);
    let spec = match ModelKind::from(a.model) {
        ModelKind::Mc => ModelSpec::Markov,
        ModelKind::Dk => {
            let mut dk = cfg.dk.clone();
            dk.rng_seed = a.seed.unwrap_or_else(|| cfg.stock_seed(&code));
            dk.validate().map_err(|e| Error::Config(e.to_string()))?;
            ModelSpec::DiffusionKernel(dk)
        }
    };
    let trace = run_protocol(&code, &f.states, &f.day_boundaries, &spec)?;
    let mut w = formats::create(&a.out)?;
    formats::write_trace(&mut w, &trace)?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    #[derive(Serialize)]
    struct Row {
        stock_code: String,
        model: ModelKind,
        start_index: usize,
        n_test: usize,
    }
    out.table(
        &[Row {
            stock_code: code,
            model: trace.model,
            start_index: trace.start_index,
            n_test: trace.len(),
        }],
        &["stock_code", "model", "start_index", "n_test"],
    )?;
    Ok(0)
}

fn cmd_evaluate(a: EvaluateArgs, out: &Out) -> Result<i32> {
    let model = match a.model {
        Some(m) => m.into(),
        None => a
            .trace
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.split('.').nth(1))
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| {
                Error::Config("cannot infer the model from the trace name; pass --model".into())
            })?,
    };
    let code = formats::stock_code_of(&a.trace);
    let source = a.trace.display().to_string();
    let trace = formats::read_trace(formats::open(&a.trace)?, &code, model, &source)?;
    let scheme = formats::read_scheme(formats::open(&a.scheme)?)?;
    let ground = GroundTruth::from(a.rmse_against);
    let series = a
        .series
        .as_deref()
        .map(formats::read_series_file)
        .transpose()?;
    let prices = series.as_ref().map(|s| s.prices_f64());
    let raw = match (ground, &prices) {
        (GroundTruth::State, _) => None,
        (GroundTruth::Raw, Some(p)) => Some(
            p.get(trace.start_index..trace.start_index + trace.len())
                .ok_or_else(|| Error::parse(&source, 0, "trace runs past the end of the series"))?,
        ),
        (GroundTruth::Raw, None) => {
            return Err(Error::Config(
                "raw-price RMSE needs --series (or use --rmse-against state)".into(),
            ))
        }
    };
    let avg = series.as_ref().and_then(|s| s.mean_price());
    let report = evaluate(&trace, &scheme, raw, avg)?;
    out.table(
        &[report],
        &[
            "stock_code",
            "model",
            "acc",
            "rmse",
            "rmse_price_ratio",
            "n_test",
        ],
    )?;
    Ok(0)
}

/// Reads `(stock_code, value)` pairs from a table, optionally restricted to
/// one model and one setting.
fn lookup(
    path: &Path,
    column: &str,
    model: Option<ModelKind>,
    setting: Option<&str>,
) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::Reader::from_reader(formats::open(path)?);
    let header = reader.headers()?.clone();
    let pos = |n: &str| header.iter().position(|h| h == n);
    let code_i = pos("stock_code").ok_or_else(|| Error::MissingColumn("stock_code".into()))?;
    let val_i = pos(column).ok_or_else(|| Error::MissingColumn(column.into()))?;
    let model_i = pos("model");
    let setting_i = pos("setting");
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        if let (Some(m), Some(i)) = (model, model_i) {
            if rec.get(i) != Some(m.as_str()) {
                continue;
            }
        }
        if let (Some(s), Some(i)) = (setting, setting_i) {
            if rec.get(i) != Some(s) {
                continue;
            }
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let v: f64 = rec[val_i]
            .parse()
            .map_err(|_| Error::parse(path.display().to_string(), line, format!("bad {column}")))?;
        if out.insert(rec[code_i].to_string(), v).is_some() {
            return Err(Error::Config(format!(
                "{}: several rows per stock; pass --setting",
                path.display()
            )));
        }
    }
    Ok(out)
}

fn cmd_features(a: FeaturesArgs, out: &Out) -> Result<i32> {
    let metadata = match &a.metadata {
        Some(p) => formats::read_metadata(formats::open(p)?)?,
        None => BTreeMap::new(),
    };
    let setting = a.setting.as_deref();
    let (acc_mc, acc_dk) = match &a.evaluation {
        Some(p) => (
            lookup(p, "acc", Some(ModelKind::Mc), setting)?,
            lookup(p, "acc", Some(ModelKind::Dk), setting)?,
        ),
        None => Default::default(),
    };
    let pi = match &a.predictability {
        Some(p) => lookup(p, "pi_max", None, setting)?,
        None => BTreeMap::new(),
    };
    let mut rows = Vec::new();
    for p in &a.series {
        let s = formats::read_series_file(p)?;
        let code = s.stock_code.clone();
        let m = metadata.get(&code).cloned().unwrap_or_default();
        rows.push(FeatureRow {
            avgprice: s.mean_price().ok_or(tickbound_core::Error::EmptyInput)?,
            volatility: volatility(&s.prices_f64(), a.volatility_count.into())?,
            life: m.life,
            scale: m.scale,
            category: m.category,
            region: m.region,
            acc_mc: acc_mc.get(&code).copied(),
            acc_dk: acc_dk.get(&code).copied(),
            pi_max: pi.get(&code).copied(),
            stock_code: code,
        });
    }
    out.table(
        &rows,
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
    Ok(0)
}

#[derive(Debug, Serialize)]
struct StatRow {
    test: &'static str,
    feature: String,
    target: String,
    n: usize,
    rho: Option<f64>,
    f: Option<f64>,
    p: Option<f64>,
    ssb: Option<f64>,
    sst: Option<f64>,
    eta2p: Option<f64>,
}

fn cmd_correlate(a: CorrelateArgs, out: &Out) -> Result<i32> {
    let rows: Vec<FeatureRow> = formats::read_rows(read_input(&a.features)?)?;
    let mut stats: Vec<StatRow> = pipeline::correlate(&rows)
        .into_iter()
        .map(|c| StatRow {
            test: "spearman",
            feature: c.feature,
            target: c.target,
            n: c.n,
            rho: Some(c.rho),
            f: None,
            p: None,
            ssb: None,
            sst: None,
            eta2p: None,
        })
        .collect();
    stats.extend(pipeline::anova(&rows).into_iter().map(|a| StatRow {
        test: "anova",
        feature: a.feature,
        target: a.target,
        n: a.n,
        rho: None,
        f: Some(a.f),
        p: Some(a.p),
        ssb: Some(a.ssb),
        sst: Some(a.sst),
        eta2p: Some(a.eta2p),
    }));
    out.table(
        &stats,
        &[
            "test", "feature", "target", "n", "rho", "f", "p", "ssb", "sst", "eta2p",
        ],
    )?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct StatusRow<'a> {
    stock_code: &'a str,
    status: Status,
    reason: Option<&'a str>,
}

fn cmd_run_all(a: RunAllArgs, out: &Out) -> Result<i32> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(g) = a.rmse_against {
        cfg.rmse_against = g.into();
    }
    let manifest = pipeline::run_all(&cfg, RunOptions { force: a.force })?;
    if out.json {
        serde_json::to_writer_pretty(io::stdout().lock(), &manifest)?;
        println!();
    } else {
        let rows: Vec<StatusRow> = manifest
            .stocks
            .iter()
            .map(|(code, e)| StatusRow {
                stock_code: code,
                status: e.status,
                reason: e.reason.as_deref(),
            })
            .collect();
        out.table(&rows, &["stock_code", "status", "reason"])?;
    }
    log::info!(
        "{} done, {} failed; reports in {}",
        manifest.count(Status::Done),
        manifest.count(Status::Failed),
        cfg.output_dir.display()
    );
    Ok(manifest.exit_code())
}

fn run(cli: Cli) -> Result<i32> {
    let out = Out { json: cli.json };
    if cli.print_config {
        print!("{}", PipelineConfig::default().to_toml());
        return Ok(0);
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Ingest(a) => cmd_ingest(a, &out),
        Command::Quantize(a) => cmd_quantize(a, &out),
        Command::Entropy(a) => cmd_entropy(a, &out),
        Command::Predictability(a) => cmd_predictability(a, &out),
        Command::Predict(a) => cmd_predict(a, &out),
        Command::Evaluate(a) => cmd_evaluate(a, &out),
        Command::Features(a) => cmd_features(a, &out),
        Command::Correlate(a) => cmd_correlate(a, &out),
        Command::RunAll(a) => cmd_run_all(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
