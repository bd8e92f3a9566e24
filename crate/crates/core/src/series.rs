//! Tick records, per-stock price series and the analysis filter.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::quantize::QuantizationScheme;

const SECONDS_PER_DAY: i64 = 86_400;

/// A price in integer hundredths of a currency unit.
///
/// Exchange prices carry two decimal places, so hundredths are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Price(pub i64);

impl Price {
    pub const fn from_hundredths(h: i64) -> Self {
        Price(h)
    }

    pub const fn hundredths(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{:02}", sign, abs / 100, abs % 100)
    }
}

/// One exchange snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub stock_code: String,
    /// Seconds since the Unix epoch. Exchange-local wall time is stored as if
    /// it were UTC so that calendar days split on local midnight.
    pub timestamp: i64,
    pub last_price: Price,
    pub extra: BTreeMap<String, Price>,
}

/// Ordered price points for one stock, trading days concatenated in date order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceSeries {
    pub stock_code: String,
    points: Vec<(i64, Price)>,
    day_boundaries: Vec<usize>,
}

/// Calendar day index of an epoch timestamp.
pub fn day_of(timestamp: i64) -> i64 {
    timestamp.div_euclid(SECONDS_PER_DAY)
}

impl PriceSeries {
    /// Builds a series from unordered points. Points are stably sorted by
    /// timestamp, so duplicate timestamps keep their input order.
    pub fn from_points(stock_code: impl Into<String>, mut points: Vec<(i64, Price)>) -> Self {
        points.sort_by_key(|&(ts, _)| ts);
        let day_boundaries = boundaries(&points);
        PriceSeries {
            stock_code: stock_code.into(),
            points,
            day_boundaries,
        }
    }

    pub fn points(&self) -> &[(i64, Price)] {
        &self.points
    }

    /// Indices where a new trading day begins. The first entry is 0 unless the
    /// series is empty.
    pub fn day_boundaries(&self) -> &[usize] {
        &self.day_boundaries
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn prices(&self) -> impl ExactSizeIterator<Item = Price> + '_ {
        self.points.iter().map(|&(_, p)| p)
    }

    pub fn prices_f64(&self) -> Vec<f64> {
        self.prices().map(Price::as_f64).collect()
    }

    /// Arithmetic mean price in currency units.
    pub fn mean_price(&self) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let sum: i128 = self.prices().map(|p| p.0 as i128).sum();
        Some(sum as f64 / self.points.len() as f64 / 100.0)
    }
}

fn boundaries(points: &[(i64, Price)]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut current = None;
    for (i, &(ts, _)) in points.iter().enumerate() {
        let day = day_of(ts);
        if current != Some(day) {
            out.push(i);
            current = Some(day);
        }
    }
    out
}

/// Groups records by stock code. Each series is sorted by timestamp; ties keep
/// the input order.
pub fn build_series(records: &[TickRecord]) -> BTreeMap<String, PriceSeries> {
    let mut grouped: BTreeMap<&str, Vec<(i64, Price)>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(r.stock_code.as_str())
            .or_default()
            .push((r.timestamp, r.last_price));
    }
    grouped
        .into_iter()
        .map(|(code, pts)| (String::from(code), PriceSeries::from_points(code, pts)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    TooShort { length: usize, min_length: usize },
    TooFewStates { states: usize, min_states: usize },
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::TooShort { length, min_length } => {
                write!(f, "too short ({length} < {min_length})")
            }
            DropReason::TooFewStates { states, min_states } => {
                write!(f, "too few states ({states} < {min_states})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep)
    }
}

pub const DEFAULT_MIN_LENGTH: usize = 1000;
pub const DEFAULT_MIN_STATES: usize = 10;

/// Drops a series that is shorter than `min_length` or that occupies fewer
/// than `min_states` distinct states under `scheme`.
pub fn filter_series(
    series: &PriceSeries,
    scheme: &QuantizationScheme,
    min_length: usize,
    min_states: usize,
) -> FilterDecision {
    if series.len() < min_length {
        return FilterDecision::Drop(DropReason::TooShort {
            length: series.len(),
            min_length,
        });
    }
    let mut states: Vec<_> = series.prices().map(|p| scheme.state_of(p)).collect();
    states.sort_unstable();
    states.dedup();
    if states.len() < min_states {
        return FilterDecision::Drop(DropReason::TooFewStates {
            states: states.len(),
            min_states,
        });
    }
    FilterDecision::Keep
}
