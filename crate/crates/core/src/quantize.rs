//! Price quantization into discrete states.
//!
//! Two schemes are supported: a fixed interval width, and a fixed number of
//! states spread over the training slice's price range. Both use floor
//! binning in integer hundredths so that bin edges fall exactly on price
//! ticks.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::series::{Price, PriceSeries};

/// A discrete state id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct State(pub u32);

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum QuantizationScheme {
    /// `state = floor(price / interval)`.
    FixedInterval { interval: Price },
    /// `state = floor((price - origin) * state_count / range)`, clamped at 0
    /// and open-ended above. `origin` and `range` come from the training slice.
    FixedStateCount {
        state_count: u32,
        origin: Price,
        range: Price,
    },
}

impl QuantizationScheme {
    pub fn fixed_interval(interval: Price) -> Result<Self> {
        if interval.0 < 1 {
            return Err(Error::InvalidInterval(interval.0));
        }
        Ok(QuantizationScheme::FixedInterval { interval })
    }

    /// Anchors a fixed-state-count scheme to the price range of `train`.
    pub fn fixed_state_count(train: &[Price], state_count: u32) -> Result<Self> {
        if state_count < 2 {
            return Err(Error::InvalidStateCount(state_count));
        }
        if train.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: train.len(),
            });
        }
        let min = train.iter().min().copied().unwrap_or_default();
        let max = train.iter().max().copied().unwrap_or_default();
        if max <= min {
            return Err(Error::DegenerateRange);
        }
        Ok(QuantizationScheme::FixedStateCount {
            state_count,
            origin: min,
            range: Price(max.0 - min.0),
        })
    }

    pub fn state_of(&self, price: Price) -> State {
        let raw = match *self {
            QuantizationScheme::FixedInterval { interval } => price.0.div_euclid(interval.0),
            QuantizationScheme::FixedStateCount {
                state_count,
                origin,
                range,
            } => {
                let num = (price.0 - origin.0) as i128 * state_count as i128;
                num.div_euclid(range.0 as i128) as i64
            }
        };
        State(raw.clamp(0, u32::MAX as i64) as u32)
    }

    /// Floating-point variant of [`state_of`](Self::state_of) for prices that
    /// are not whole hundredths.
    pub fn state_of_f64(&self, price: f64) -> State {
        let raw = libm::floor((price - self.origin()) / self.interval());
        State(raw.clamp(0.0, u32::MAX as f64) as u32)
    }

    /// Interval width in currency units (the derived width in
    /// fixed-state-count mode).
    pub fn interval(&self) -> f64 {
        match *self {
            QuantizationScheme::FixedInterval { interval } => interval.as_f64(),
            QuantizationScheme::FixedStateCount {
                state_count, range, ..
            } => range.as_f64() / state_count as f64,
        }
    }

    /// Lower edge of state 0 in currency units.
    pub fn origin(&self) -> f64 {
        match *self {
            QuantizationScheme::FixedInterval { .. } => 0.0,
            QuantizationScheme::FixedStateCount { origin, .. } => origin.as_f64(),
        }
    }

    pub fn state_count(&self) -> Option<u32> {
        match *self {
            QuantizationScheme::FixedInterval { .. } => None,
            QuantizationScheme::FixedStateCount { state_count, .. } => Some(state_count),
        }
    }

    /// Midpoint of the state's price interval.
    pub fn dequantize(&self, state: State) -> f64 {
        (state.0 as f64 + 0.5) * self.interval() + self.origin()
    }
}

/// A state sequence together with the scheme that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSequence {
    states: Vec<State>,
    scheme: QuantizationScheme,
    n_distinct: usize,
}

impl QuantizedSequence {
    pub fn new(states: Vec<State>, scheme: QuantizationScheme) -> Self {
        let n_distinct = count_distinct(&states);
        QuantizedSequence {
            states,
            scheme,
            n_distinct,
        }
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn scheme(&self) -> &QuantizationScheme {
        &self.scheme
    }

    /// Number of distinct states that occur at least once.
    pub fn n_distinct(&self) -> usize {
        self.n_distinct
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn count_distinct(states: &[State]) -> usize {
    states.iter().collect::<BTreeSet<_>>().len()
}

pub fn quantize_with(series: &PriceSeries, scheme: QuantizationScheme) -> QuantizedSequence {
    let states = series.prices().map(|p| scheme.state_of(p)).collect();
    QuantizedSequence::new(states, scheme)
}

pub fn quantize_fixed(series: &PriceSeries, interval: Price) -> Result<QuantizedSequence> {
    Ok(quantize_with(
        series,
        QuantizationScheme::fixed_interval(interval)?,
    ))
}

/// Quantizes with `state_count` states over the price range of
/// `series[..train_end]`. Later prices above that range get ids past
/// `state_count - 1`; prices below it map to 0.
pub fn quantize_fixed_count(
    series: &PriceSeries,
    state_count: u32,
    train_end: usize,
) -> Result<QuantizedSequence> {
    if train_end < 2 || train_end > series.len() {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train_end.min(series.len()),
        });
    }
    let train: Vec<Price> = series.prices().take(train_end).collect();
    let scheme = QuantizationScheme::fixed_state_count(&train, state_count)?;
    Ok(quantize_with(series, scheme))
}
