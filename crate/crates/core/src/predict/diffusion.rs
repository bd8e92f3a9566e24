//! Diffusion-kernel embedding predictor.
//!
//! States and second-order contexts live in the same Euclidean space. A
//! training step pulls the positive (observed) state toward its context and
//! moves the context toward the positive and away from a sampled negative,
//! but only while the negative is not yet at least `margin` farther away
//! (in squared distance) than the positive. Prediction is the nearest state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{transitions, Context, OnlinePredictor};
use crate::error::{Error, Result};
use crate::quantize::State;

/// How the three coordinates are moved when the margin is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UpdateRule {
    /// Descent on `d_pos - d_neg`: positive toward the context, negative away
    /// from it, context along `z_pos - z_neg`.
    #[default]
    Gradient,
    /// The historical printed form: the negative is also pulled toward the
    /// context, and the context is re-based on the positive,
    /// `z_c <- z_pos + 2a (z_pos - z_neg)`.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DkConfig {
    pub dim: usize,
    pub epochs: usize,
    pub alpha0: f64,
    pub margin: f64,
    pub negatives_per_step: usize,
    /// Step size after training; `None` means `alpha0 / 10`.
    pub online_rate: Option<f64>,
    pub rng_seed: u64,
    pub update_rule: UpdateRule,
}

impl Default for DkConfig {
    fn default() -> Self {
        DkConfig {
            dim: 16,
            epochs: 20,
            alpha0: 0.1,
            margin: 1.0,
            negatives_per_step: 5,
            online_rate: None,
            rng_seed: 0,
            update_rule: UpdateRule::Gradient,
        }
    }
}

impl DkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidInput("dk dim must be at least 2"));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidInput("dk epochs must be at least 1"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidInput("dk alpha0 must be positive"));
        }
        if !self.margin.is_finite() {
            return Err(Error::InvalidInput("dk margin must be finite"));
        }
        if let Some(r) = self.online_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput("dk online rate must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn effective_online_rate(&self) -> f64 {
        self.online_rate.unwrap_or(self.alpha0 / 10.0)
    }

    /// Learning rate for epoch `tau`: linear decay from `alpha0`.
    pub fn rate_at(&self, tau: usize) -> f64 {
        self.alpha0 * (1.0 - tau as f64 / self.epochs as f64)
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionKernelModel {
    config: DkConfig,
    rng: ChaCha8Rng,
    // Registration order; ids are looked up through `state_index`.
    states: Vec<State>,
    state_index: BTreeMap<State, usize>,
    state_coords: Vec<f64>,
    context_index: BTreeMap<Context, usize>,
    context_coords: Vec<f64>,
    observations: BTreeMap<State, u64>,
}

impl DiffusionKernelModel {
    /// An untrained model with no registered states.
    pub fn new(config: DkConfig) -> Result<Self> {
        config.validate()?;
        Ok(DiffusionKernelModel {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            config,
            states: Vec::new(),
            state_index: BTreeMap::new(),
            state_coords: Vec::new(),
            context_index: BTreeMap::new(),
            context_coords: Vec::new(),
            observations: BTreeMap::new(),
        })
    }

    /// Registers every state and context of `prefix` with random coordinates
    /// and runs `epochs` passes over its transitions.
    pub fn train(prefix: &[State], config: DkConfig) -> Result<Self> {
        if prefix.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: prefix.len(),
            });
        }
        let mut model = Self::new(config)?;
        for &s in prefix {
            model.state_slot(s);
            *model.observations.entry(s).or_default() += 1;
        }
        let steps: Vec<(usize, usize)> = transitions(prefix)
            .map(|(ctx, next)| (model.context_slot(ctx), model.state_index[&next]))
            .collect();
        for tau in 0..model.config.epochs {
            let alpha = model.config.rate_at(tau);
            for &(c, pos) in &steps {
                model.step(c, pos, alpha);
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &DkConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.context_index.len()
    }

    pub fn is_registered(&self, state: State) -> bool {
        self.state_index.contains_key(&state)
    }

    pub fn state_embedding(&self, state: State) -> Option<&[f64]> {
        let d = self.config.dim;
        self.state_index
            .get(&state)
            .map(|&i| &self.state_coords[i * d..(i + 1) * d])
    }

    pub fn context_embedding(&self, context: Context) -> Option<&[f64]> {
        let d = self.config.dim;
        self.context_index
            .get(&context)
            .map(|&i| &self.context_coords[i * d..(i + 1) * d])
    }

    /// Overwrites (registering if needed) a state's coordinates.
    pub fn set_state_embedding(&mut self, state: State, coords: &[f64]) {
        assert_eq!(coords.len(), self.config.dim);
        let i = self.state_slot(state);
        let d = self.config.dim;
        self.state_coords[i * d..(i + 1) * d].copy_from_slice(coords);
    }

    /// Overwrites (registering if needed) a context's coordinates.
    pub fn set_context_embedding(&mut self, context: Context, coords: &[f64]) {
        assert_eq!(coords.len(), self.config.dim);
        let i = self.context_slot(context);
        let d = self.config.dim;
        self.context_coords[i * d..(i + 1) * d].copy_from_slice(coords);
    }

    fn fresh_coords(&mut self) -> Vec<f64> {
        (0..self.config.dim)
            .map(|_| self.rng.random::<f64>() - 0.5)
            .collect()
    }

    fn state_slot(&mut self, state: State) -> usize {
        if let Some(&i) = self.state_index.get(&state) {
            return i;
        }
        let i = self.states.len();
        let coords = self.fresh_coords();
        self.state_coords.extend_from_slice(&coords);
        self.states.push(state);
        self.state_index.insert(state, i);
        i
    }

    fn context_slot(&mut self, context: Context) -> usize {
        if let Some(&i) = self.context_index.get(&context) {
            return i;
        }
        let i = self.context_index.len();
        let coords = self.fresh_coords();
        self.context_coords.extend_from_slice(&coords);
        self.context_index.insert(context, i);
        i
    }

    /// One margin-gated step for context slot `c` and positive slot `pos`.
    fn step(&mut self, c: usize, pos: usize, alpha: f64) {
        let n = self.states.len();
        if n < 2 {
            return;
        }
        let d = self.config.dim;
        let margin = self.config.margin;
        let rule = self.config.update_rule;
        let two_a = 2.0 * alpha;
        for _ in 0..self.config.negatives_per_step {
            let mut neg = self.rng.random_range(0..n - 1);
            if neg >= pos {
                neg += 1;
            }
            let zc = &self.context_coords[c * d..(c + 1) * d];
            let zi = &self.state_coords[pos * d..(pos + 1) * d];
            let zj = &self.state_coords[neg * d..(neg + 1) * d];
            let d_i = sq_dist(zc, zi);
            let d_j = sq_dist(zc, zj);
            if d_j - d_i >= margin {
                continue;
            }
            for k in 0..d {
                let c_old = self.context_coords[c * d + k];
                let i_old = self.state_coords[pos * d + k];
                let j_old = self.state_coords[neg * d + k];
                self.state_coords[pos * d + k] = i_old + two_a * (c_old - i_old);
                match rule {
                    UpdateRule::Gradient => {
                        self.state_coords[neg * d + k] = j_old - two_a * (c_old - j_old);
                        self.context_coords[c * d + k] = c_old + two_a * (i_old - j_old);
                    }
                    UpdateRule::AsPrinted => {
                        self.state_coords[neg * d + k] = j_old + two_a * (c_old - j_old);
                        self.context_coords[c * d + k] = i_old + two_a * (i_old - j_old);
                    }
                }
            }
        }
    }

    fn global_mode(&self) -> Option<State> {
        let mut best: Option<(State, u64)> = None;
        for (&s, &c) in &self.observations {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((s, c));
            }
        }
        best.map(|(s, _)| s)
    }

    fn nearest_state(&self, z: &[f64]) -> State {
        let d = self.config.dim;
        let mut best: Option<(f64, State)> = None;
        for (i, &s) in self.states.iter().enumerate() {
            let dist = sq_dist(z, &self.state_coords[i * d..(i + 1) * d]);
            let better = match best {
                None => true,
                Some((bd, bs)) => dist < bd || (dist == bd && s < bs),
            };
            if better {
                best = Some((dist, s));
            }
        }
        best.map(|(_, s)| s).unwrap_or_default()
    }

    /// Nearest registered state to the context. An unseen context is created
    /// at the mean of its registered member states; with no registered
    /// members the most observed state is returned.
    pub fn predict_state(&mut self, context: Context) -> State {
        if self.states.is_empty() {
            return context.1;
        }
        let d = self.config.dim;
        if !self.context_index.contains_key(&context) {
            let members: Vec<usize> = [context.0, context.1]
                .iter()
                .filter_map(|s| self.state_index.get(s).copied())
                .collect();
            if members.is_empty() {
                return self.global_mode().unwrap_or(context.1);
            }
            let mut mean = alloc::vec![0.0; d];
            for &m in &members {
                for (acc, &x) in mean.iter_mut().zip(&self.state_coords[m * d..(m + 1) * d]) {
                    *acc += x;
                }
            }
            for x in &mut mean {
                *x /= members.len() as f64;
            }
            let i = self.context_index.len();
            self.context_index.insert(context, i);
            self.context_coords.extend_from_slice(&mean);
        }
        let c = self.context_index[&context];
        let z = &self.context_coords[c * d..(c + 1) * d];
        self.nearest_state(z)
    }

    /// One online step at the post-training rate, registering unseen states
    /// and contexts with fresh random coordinates.
    pub fn observe(&mut self, context: Context, actual: State) {
        let pos = self.state_slot(actual);
        let c = self.context_slot(context);
        *self.observations.entry(actual).or_default() += 1;
        let alpha = self.config.effective_online_rate();
        self.step(c, pos, alpha);
    }

    pub fn squared_distance(&self, context: Context, state: State) -> Option<f64> {
        Some(sq_dist(
            self.context_embedding(context)?,
            self.state_embedding(state)?,
        ))
    }
}

impl OnlinePredictor for DiffusionKernelModel {
    fn predict(&mut self, context: Context) -> State {
        self.predict_state(context)
    }

    fn update(&mut self, context: Context, actual: State) {
        self.observe(context, actual);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: u32) -> State {
        State(i)
    }

    fn cfg(dim: usize) -> DkConfig {
        DkConfig {
            dim,
            rng_seed: 7,
            ..DkConfig::default()
        }
    }

    #[test]
    fn single_update_step_arithmetic() {
        // Two states, one negative per step, margin large enough to fire.
        let mut m = DiffusionKernelModel::new(DkConfig {
            negatives_per_step: 1,
            margin: 10.0,
            ..cfg(2)
        })
        .unwrap();
        m.set_state_embedding(s(1), &[0.0, 0.0]);
        m.set_state_embedding(s(2), &[0.0, 3.0]);
        m.set_context_embedding((s(1), s(1)), &[1.0, 0.0]);
        m.step(0, 0, 0.1);
        assert_eq!(m.state_embedding(s(1)).unwrap(), &[0.2, 0.0]);
        // Negative pushed away from the context: (0,3) - 0.2*((1,0)-(0,3)).
        let zj = m.state_embedding(s(2)).unwrap();
        assert!((zj[0] + 0.2).abs() < 1e-12 && (zj[1] - 3.6).abs() < 1e-12);
        // Context moved along z_i - z_j = (0, -3).
        let zc = m.context_embedding((s(1), s(1))).unwrap();
        assert!((zc[0] - 1.0).abs() < 1e-12 && (zc[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn printed_rule_arithmetic() {
        let mut m = DiffusionKernelModel::new(DkConfig {
            negatives_per_step: 1,
            margin: 10.0,
            update_rule: UpdateRule::AsPrinted,
            ..cfg(2)
        })
        .unwrap();
        m.set_state_embedding(s(1), &[0.0, 0.0]);
        m.set_state_embedding(s(2), &[0.0, 3.0]);
        m.set_context_embedding((s(1), s(1)), &[1.0, 0.0]);
        m.step(0, 0, 0.1);
        assert_eq!(m.state_embedding(s(1)).unwrap(), &[0.2, 0.0]);
        let zj = m.state_embedding(s(2)).unwrap();
        assert!((zj[0] - 0.2).abs() < 1e-12 && (zj[1] - 2.4).abs() < 1e-12);
        let zc = m.context_embedding((s(1), s(1))).unwrap();
        assert!(zc[0].abs() < 1e-12 && (zc[1] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn satisfied_margin_leaves_coordinates() {
        let mut m = DiffusionKernelModel::new(DkConfig {
            negatives_per_step: 3,
            ..cfg(2)
        })
        .unwrap();
        m.set_state_embedding(s(1), &[0.0, 0.0]);
        m.set_state_embedding(s(2), &[0.0, 5.0]);
        m.set_context_embedding((s(1), s(1)), &[0.5, 0.0]);
        let before = m.clone();
        m.step(0, 0, 0.1);
        assert_eq!(m.state_coords, before.state_coords);
        assert_eq!(m.context_coords, before.context_coords);
    }

    #[test]
    fn learns_deterministic_cycle() {
        let seq: Vec<State> = [1u32, 2, 3]
            .iter()
            .cycle()
            .take(300)
            .copied()
            .map(State)
            .collect();
        let m = DiffusionKernelModel::train(&seq, cfg(16)).unwrap();
        let ctx = (s(1), s(2));
        let d3 = m.squared_distance(ctx, s(3)).unwrap();
        assert!(d3 < m.squared_distance(ctx, s(1)).unwrap());
        assert!(d3 < m.squared_distance(ctx, s(2)).unwrap());
    }

    #[test]
    fn prediction_is_nearest_with_smallest_tie() {
        let mut m = DiffusionKernelModel::new(cfg(2)).unwrap();
        m.set_state_embedding(s(7), &[0.0, 0.0]);
        assert_eq!(m.predict_state((s(7), s(7))), s(7));

        let mut m = DiffusionKernelModel::new(cfg(2)).unwrap();
        m.set_state_embedding(s(1), &[1.0, 0.0]);
        m.set_state_embedding(s(2), &[0.0, 2.0]);
        m.set_context_embedding((s(1), s(2)), &[0.0, 0.0]);
        assert_eq!(m.predict_state((s(1), s(2))), s(1));

        let mut m = DiffusionKernelModel::new(cfg(2)).unwrap();
        m.set_state_embedding(s(5), &[1.0, 0.0]);
        m.set_state_embedding(s(3), &[-1.0, 0.0]);
        m.set_context_embedding((s(5), s(3)), &[0.0, 0.0]);
        assert_eq!(m.predict_state((s(5), s(3))), s(3));
    }

    #[test]
    fn unseen_context_starts_at_member_mean() {
        let mut m = DiffusionKernelModel::new(cfg(2)).unwrap();
        m.set_state_embedding(s(1), &[0.0, 0.0]);
        m.set_state_embedding(s(2), &[2.0, 4.0]);
        m.set_state_embedding(s(3), &[1.1, 2.0]);
        assert_eq!(m.predict_state((s(1), s(2))), s(3));
        assert_eq!(m.context_embedding((s(1), s(2))).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn unseen_members_use_global_mode() {
        let seq: Vec<State> = [4u32, 4, 6, 4].iter().copied().map(State).collect();
        let mut m = DiffusionKernelModel::train(&seq, cfg(4)).unwrap();
        let contexts = m.n_contexts();
        assert_eq!(m.predict_state((s(90), s(91))), s(4));
        assert_eq!(m.n_contexts(), contexts);
    }

    #[test]
    fn update_registers_new_state() {
        let seq: Vec<State> = [1u32, 2, 1, 2].iter().copied().map(State).collect();
        let mut m = DiffusionKernelModel::train(&seq, cfg(4)).unwrap();
        let n = m.n_states();
        m.observe((s(1), s(2)), s(9));
        assert_eq!(m.n_states(), n + 1);
        assert!(m.is_registered(s(9)));
        assert!(m
            .state_embedding(s(9))
            .unwrap()
            .iter()
            .all(|x| x.is_finite()));
    }

    #[test]
    fn repeated_update_shrinks_positive_distance() {
        // Positive starts farther than both negatives, so the margin fires.
        let mut m = DiffusionKernelModel::new(cfg(2)).unwrap();
        m.set_state_embedding(s(1), &[0.0, 0.5]);
        m.set_state_embedding(s(2), &[-0.4, 0.0]);
        m.set_state_embedding(s(3), &[1.5, 0.0]);
        let ctx = (s(1), s(2));
        m.set_context_embedding(ctx, &[0.0, 0.0]);
        let first = m.squared_distance(ctx, s(3)).unwrap();
        let mut prev = first;
        for _ in 0..50 {
            m.observe(ctx, s(3));
            let d = m.squared_distance(ctx, s(3)).unwrap();
            assert!(d <= prev + 1e-12, "{d} > {prev}");
            prev = d;
        }
        assert!(prev < 0.5 * first);
    }

    #[test]
    fn zero_online_rate_freezes_embeddings() {
        let seq: Vec<State> = [1u32, 2, 3, 1, 2, 3].iter().copied().map(State).collect();
        let mut m = DiffusionKernelModel::train(
            &seq,
            DkConfig {
                online_rate: Some(0.0),
                ..cfg(4)
            },
        )
        .unwrap();
        let before = (m.state_coords.clone(), m.context_coords.clone());
        m.observe((s(1), s(2)), s(3));
        m.observe((s(2), s(3)), s(2));
        assert_eq!(before, (m.state_coords.clone(), m.context_coords.clone()));
    }

    #[test]
    fn same_seed_same_model() {
        let seq: Vec<State> = [1u32, 2, 3, 2, 1, 3, 3, 1]
            .iter()
            .copied()
            .map(State)
            .collect();
        let a = DiffusionKernelModel::train(&seq, cfg(6)).unwrap();
        let b = DiffusionKernelModel::train(&seq, cfg(6)).unwrap();
        assert_eq!(a.state_coords, b.state_coords);
        assert_eq!(a.context_coords, b.context_coords);
    }

    #[test]
    fn config_validation() {
        assert!(DiffusionKernelModel::new(DkConfig { dim: 1, ..cfg(2) }).is_err());
        assert!(DiffusionKernelModel::new(DkConfig {
            epochs: 0,
            ..cfg(2)
        })
        .is_err());
        assert!(DiffusionKernelModel::new(DkConfig {
            alpha0: 0.0,
            ..cfg(2)
        })
        .is_err());
        assert!(DiffusionKernelModel::train(&[s(1), s(2)], cfg(2)).is_err());
    }
}
