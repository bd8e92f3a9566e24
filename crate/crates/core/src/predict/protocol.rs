use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{Context, DiffusionKernelModel, DkConfig, MarkovModel, OnlinePredictor};
use crate::error::{Error, Result};
use crate::quantize::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelKind {
    Mc,
    Dk,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Mc => "mc",
            ModelKind::Dk => "dk",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" | "MC" => Ok(ModelKind::Mc),
            "dk" | "DK" => Ok(ModelKind::Dk),
            _ => Err(Error::InvalidInput("model must be `mc` or `dk`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Markov,
    DiffusionKernel(DkConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Markov => ModelKind::Mc,
            ModelSpec::DiffusionKernel(_) => ModelKind::Dk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionTrace {
    pub stock_code: String,
    pub model: ModelKind,
    /// `(predicted, actual)` for every test position.
    pub predictions: Vec<(State, State)>,
    /// Sequence index of the first test position.
    pub start_index: usize,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

/// Predicts every position from `start` on, updating after each one.
pub fn run_online<P: OnlinePredictor>(
    model: &mut P,
    states: &[State],
    start: usize,
) -> Vec<(State, State)> {
    let start = start.max(2);
    let mut out = Vec::with_capacity(states.len().saturating_sub(start));
    for t in start..states.len() {
        let ctx: Context = (states[t - 2], states[t - 1]);
        let predicted = model.predict(ctx);
        out.push((predicted, states[t]));
        model.update(ctx, states[t]);
    }
    out
}

/// Trains on the first day and predicts every later position, updating the
/// model after each prediction.
pub fn run_protocol(
    stock_code: &str,
    states: &[State],
    day_boundaries: &[usize],
    spec: &ModelSpec,
) -> Result<PredictionTrace> {
    let start = match day_boundaries {
        [0, second, ..] if *second < states.len() => *second,
        [0, ..] | [] => return Err(Error::Protocol("sequence spans fewer than two days")),
        _ => return Err(Error::Protocol("first day boundary must be 0")),
    };
    if start < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: start,
        });
    }
    let train = &states[..start];
    let predictions = match spec {
        ModelSpec::Markov => run_online(&mut MarkovModel::train(train)?, states, start),
        ModelSpec::DiffusionKernel(cfg) => run_online(
            &mut DiffusionKernelModel::train(train, cfg.clone())?,
            states,
            start,
        ),
    };
    Ok(PredictionTrace {
        stock_code: String::from(stock_code),
        model: spec.kind(),
        predictions,
        start_index: start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(len: usize) -> Vec<State> {
        [3u32, 1, 4, 1, 5]
            .iter()
            .cycle()
            .take(len)
            .copied()
            .map(State)
            .collect()
    }

    #[test]
    fn cycle_is_perfect_on_day_two() {
        let s = cycle(100);
        let t = run_protocol("x", &s, &[0, 50], &ModelSpec::Markov).unwrap();
        assert_eq!(t.len(), 50);
        assert_eq!(t.start_index, 50);
        assert!(t.predictions.iter().all(|(p, a)| p == a));
    }

    #[test]
    fn trace_length_is_tail_length() {
        let s = cycle(73);
        let t = run_protocol("x", &s, &[0, 20, 40], &ModelSpec::Markov).unwrap();
        assert_eq!(t.len(), 73 - 20);
    }

    #[test]
    fn single_day_is_rejected() {
        let s = cycle(30);
        assert!(matches!(
            run_protocol("x", &s, &[0], &ModelSpec::Markov),
            Err(Error::Protocol(_))
        ));
        assert!(run_protocol("x", &s, &[0, 30], &ModelSpec::Markov).is_err());
        assert!(run_protocol("x", &s, &[0, 2], &ModelSpec::Markov).is_err());
    }

    #[test]
    fn dk_is_deterministic_per_seed() {
        let s = cycle(400);
        let spec = ModelSpec::DiffusionKernel(DkConfig {
            rng_seed: 11,
            ..DkConfig::default()
        });
        let a = run_protocol("x", &s, &[0, 100], &spec).unwrap();
        let b = run_protocol("x", &s, &[0, 100], &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model, ModelKind::Dk);
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("mc".parse::<ModelKind>().unwrap(), ModelKind::Mc);
        assert_eq!("dk".parse::<ModelKind>().unwrap(), ModelKind::Dk);
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
