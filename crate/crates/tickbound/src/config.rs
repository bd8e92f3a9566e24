//! Pipeline configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tickbound_core::evaluate::GroundTruth;
use tickbound_core::predict::{DkConfig, ModelKind};
use tickbound_core::series::{DEFAULT_MIN_LENGTH, DEFAULT_MIN_STATES};
use tickbound_core::stats::VolatilityCount;
use tickbound_core::Price;

use crate::error::{Error, Result};
use crate::ingest::Schema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Tick files, or directories whose `.csv`/`.tsv`/`.txt` files are read.
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Master seed; per-stock model seeds are derived from it.
    pub seed: u64,
    pub rmse_against: GroundTruth,
    pub models: Vec<ModelKind>,
    pub volatility_count: VolatilityCount,
    /// Write per-stock prediction traces.
    pub write_traces: bool,
    /// Side CSV with `stock_code,life,scale,category,region`.
    pub metadata: Option<PathBuf>,
    pub schema: Schema,
    pub quantization: QuantizationConfig,
    pub filter: FilterConfig,
    pub dk: DkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizationConfig {
    /// Fixed intervals T, in currency units.
    pub intervals: Vec<f64>,
    /// Fixed state-space sizes SP, ranged on the first trading day.
    pub state_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_length: usize,
    pub min_states: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            rmse_against: GroundTruth::Raw,
            models: vec![ModelKind::Mc, ModelKind::Dk],
            volatility_count: VolatilityCount::Returns,
            write_traces: true,
            metadata: None,
            schema: Schema::default(),
            quantization: QuantizationConfig::default(),
            filter: FilterConfig::default(),
            dk: DkConfig::default(),
        }
    }
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        QuantizationConfig {
            intervals: vec![0.01, 0.05],
            state_counts: Vec::new(),
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_length: DEFAULT_MIN_LENGTH,
            min_states: DEFAULT_MIN_STATES,
        }
    }
}

/// One quantization setting of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Interval(Price),
    StateCount(u32),
}

impl fmt::Display for Setting {
    /// Labels are used in file names and the `setting` column: `T0.01`, `SP100`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Interval(p) => write!(f, "T{p}"),
            Setting::StateCount(n) => write!(f, "SP{n}"),
        }
    }
}

/// Converts a decimal interval to whole hundredths.
pub fn interval_to_price(t: f64) -> Result<Price> {
    let h = (t * 100.0).round();
    if h.is_nan() || h < 1.0 || (t * 100.0 - h).abs() > 1e-6 || h > i64::MAX as f64 {
        return Err(Error::Config(format!(
            "interval {t} must be a positive multiple of 0.01"
        )));
    }
    Ok(Price(h as i64))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.iter_mut().for_each(rebase);
        rebase(&mut cfg.output_dir);
        cfg.metadata.as_mut().map(rebase);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no inputs given".into()));
        }
        if self.settings()?.is_empty() {
            return Err(Error::Config(
                "at least one quantization interval or state count is required".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models selected".into()));
        }
        if self.filter.min_states < 1 {
            return Err(Error::Config("filter.min_states must be at least 1".into()));
        }
        self.dk
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Quantization settings in configuration order, duplicates removed.
    pub fn settings(&self) -> Result<Vec<Setting>> {
        let mut out = Vec::new();
        for &t in &self.quantization.intervals {
            out.push(Setting::Interval(interval_to_price(t)?));
        }
        for &sp in &self.quantization.state_counts {
            if sp < 1 {
                return Err(Error::Config("state counts must be at least 1".into()));
            }
            out.push(Setting::StateCount(sp));
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|s| seen.insert(*s));
        Ok(out)
    }

    /// Digest of every setting that affects results. Input and output
    /// locations are excluded so that moving a run does not invalidate it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.inputs.clear();
        c.output_dir = PathBuf::new();
        c.metadata = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Model seed for one stock: independent of worker scheduling.
    pub fn stock_seed(&self, stock_code: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stock_code.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }
}
