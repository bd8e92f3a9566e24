use alloc::collections::BTreeMap;

use super::{transitions, Context, OnlinePredictor};
use crate::error::{Error, Result};
use crate::quantize::State;

/// Second-order Markov chain with first-order and unconditional fallbacks.
///
/// Every observed transition increments exactly one entry in each of the
/// three tables, so the lower-order tables are marginals of the second-order
/// one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkovModel {
    counts2: BTreeMap<Context, BTreeMap<State, u64>>,
    counts1: BTreeMap<State, BTreeMap<State, u64>>,
    global_counts: BTreeMap<State, u64>,
}

/// Most frequent key; ties go to the smallest state id.
fn mode(counts: &BTreeMap<State, u64>) -> Option<State> {
    let mut best: Option<(State, u64)> = None;
    for (&s, &c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((s, c));
        }
    }
    best.map(|(s, _)| s)
}

impl MarkovModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts every transition in `prefix`.
    pub fn train(prefix: &[State]) -> Result<Self> {
        if prefix.len() < 3 {
            return Err(Error::InsufficientData {
                needed: 3,
                got: prefix.len(),
            });
        }
        let mut model = Self::new();
        for (ctx, next) in transitions(prefix) {
            model.observe(ctx, next);
        }
        Ok(model)
    }

    pub fn observe(&mut self, context: Context, actual: State) {
        *self
            .counts2
            .entry(context)
            .or_default()
            .entry(actual)
            .or_default() += 1;
        *self
            .counts1
            .entry(context.1)
            .or_default()
            .entry(actual)
            .or_default() += 1;
        *self.global_counts.entry(actual).or_default() += 1;
    }

    pub fn count2(&self, context: Context, next: State) -> u64 {
        self.counts2
            .get(&context)
            .and_then(|m| m.get(&next))
            .copied()
            .unwrap_or(0)
    }

    pub fn count1(&self, prev: State, next: State) -> u64 {
        self.counts1
            .get(&prev)
            .and_then(|m| m.get(&next))
            .copied()
            .unwrap_or(0)
    }

    pub fn global_count(&self, state: State) -> u64 {
        self.global_counts.get(&state).copied().unwrap_or(0)
    }

    pub fn transitions_seen(&self) -> u64 {
        self.global_counts.values().sum()
    }

    pub fn is_known(&self, state: State) -> bool {
        self.global_counts.contains_key(&state) || self.counts1.contains_key(&state)
    }

    /// Mode of the second-order row, else of the first-order row. A last
    /// state that has been observed but never yet followed by anything is
    /// predicted to persist; otherwise the global mode is used. An empty
    /// model echoes the last context state.
    pub fn predict_state(&self, context: Context) -> State {
        self.counts2
            .get(&context)
            .and_then(mode)
            .or_else(|| self.counts1.get(&context.1).and_then(mode))
            .or_else(|| {
                self.global_counts
                    .contains_key(&context.1)
                    .then_some(context.1)
            })
            .or_else(|| mode(&self.global_counts))
            .unwrap_or(context.1)
    }
}

impl OnlinePredictor for MarkovModel {
    fn predict(&mut self, context: Context) -> State {
        self.predict_state(context)
    }

    fn update(&mut self, context: Context, actual: State) {
        self.observe(context, actual);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn seq(ids: &[u32]) -> Vec<State> {
        ids.iter().copied().map(State).collect()
    }

    #[test]
    fn counts_second_order() {
        let m = MarkovModel::train(&seq(&[1, 2, 3, 1, 2, 3, 1])).unwrap();
        assert_eq!(m.count2((State(1), State(2)), State(3)), 2);
        assert_eq!(m.predict_state((State(1), State(2))), State(3));
        let m = MarkovModel::train(&seq(&[1, 1, 1, 1])).unwrap();
        assert_eq!(m.count2((State(1), State(1)), State(1)), 2);
    }

    #[test]
    fn short_prefix_rejected() {
        assert!(MarkovModel::train(&[]).is_err());
        assert!(MarkovModel::train(&seq(&[1, 2])).is_err());
    }

    #[test]
    fn falls_back_to_global_mode() {
        let mut m = MarkovModel::new();
        m.observe((State(2), State(3)), State(1));
        m.observe((State(3), State(1)), State(1));
        m.observe((State(1), State(1)), State(4));
        // (9, 9) unseen and 9 never a predecessor: global mode is 1.
        assert_eq!(m.predict_state((State(9), State(9))), State(1));
        // (7, 3) unseen but 3 seen as predecessor: first-order row.
        assert_eq!(m.predict_state((State(7), State(3))), State(1));
        assert_eq!(m.predict_state((State(7), State(1))), State(1));
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let mut m = MarkovModel::new();
        let ctx = (State(0), State(0));
        for _ in 0..2 {
            m.observe(ctx, State(7));
            m.observe(ctx, State(4));
        }
        assert_eq!(m.predict_state(ctx), State(4));
    }

    #[test]
    fn update_shifts_mode_and_accumulates() {
        let mut m = MarkovModel::train(&seq(&[1, 2, 3])).unwrap();
        let ctx = (State(1), State(2));
        m.update(ctx, State(5));
        m.update(ctx, State(5));
        assert_eq!(m.predict(ctx), State(5));
        for _ in 0..10 {
            m.update((State(8), State(8)), State(8));
        }
        assert_eq!(m.count2((State(8), State(8)), State(8)), 10);
    }

    #[test]
    fn marginals_stay_consistent() {
        let s = seq(&[1, 3, 2, 2, 1, 3, 1, 2, 3, 3, 2, 1, 1, 2]);
        let m = MarkovModel::train(&s).unwrap();
        for prev in 1..=3 {
            for next in 1..=3 {
                let sum2: u64 = (1..=3)
                    .map(|a| m.count2((State(a), State(prev)), State(next)))
                    .sum();
                assert_eq!(sum2, m.count1(State(prev), State(next)));
            }
        }
        for next in 1..=3 {
            let sum1: u64 = (1..=3).map(|p| m.count1(State(p), State(next))).sum();
            assert_eq!(sum1, m.global_count(State(next)));
        }
        assert_eq!(m.transitions_seen(), s.len() as u64 - 2);
    }

    #[test]
    fn deterministic_cycle_is_learned_after_one_period() {
        let cycle = [4u32, 9, 2, 6];
        let s: Vec<State> = cycle.iter().cycle().take(40).copied().map(State).collect();
        let mut m = MarkovModel::new();
        let mut hits = Vec::new();
        for w in s.windows(3) {
            let ctx = (w[0], w[1]);
            hits.push(m.predict(ctx) == w[2]);
            m.update(ctx, w[2]);
        }
        // Each of the four contexts is seen once in the first period.
        assert!(hits[cycle.len()..].iter().all(|&h| h));
    }
}
