//! Online next-state predictors and the train-then-predict-and-update
//! protocol.

mod diffusion;
mod markov;
mod protocol;

pub use diffusion::{DiffusionKernelModel, DkConfig, UpdateRule};
pub use markov::MarkovModel;
pub use protocol::{run_online, run_protocol, ModelKind, ModelSpec, PredictionTrace};

use crate::quantize::State;

/// The two preceding states `(s[t-2], s[t-1])`.
pub type Context = (State, State);

pub trait OnlinePredictor {
    fn predict(&mut self, context: Context) -> State;
    fn update(&mut self, context: Context, actual: State);
}

/// Iterates `(context, target)` pairs for every position `t >= 2`.
pub(crate) fn transitions(states: &[State]) -> impl Iterator<Item = (Context, State)> + '_ {
    states.windows(3).map(|w| ((w[0], w[1]), w[2]))
}
