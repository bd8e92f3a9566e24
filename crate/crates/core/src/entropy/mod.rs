//! Lempel-Ziv match-length estimate of a sequence's entropy rate.
//!
//! For each position `i`, the match length is the length of the shortest
//! substring starting at `i` that does not occur anywhere in the prefix
//! before `i`. When every substring starting at `i` that fits in the sequence
//! does occur, the match length is one past the tail length. The estimate is
//! `log2(n) / mean(match length)` bits per symbol.

mod automaton;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quantize::State;
use automaton::SuffixAutomaton;

/// Reference implementation: for every earlier start, measure how far it
/// agrees with the tail at `i` without running past `i`.
pub fn match_lengths<T: Eq>(states: &[T]) -> Result<Vec<usize>> {
    let n = states.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let tail = n - i;
        let mut best = 0;
        for j in 0..i {
            let cap = (i - j).min(tail);
            if cap <= best {
                continue;
            }
            let l = states[j..j + cap]
                .iter()
                .zip(&states[i..i + cap])
                .take_while(|(a, b)| a == b)
                .count();
            best = best.max(l);
            if best == tail {
                break;
            }
        }
        out.push(best + 1);
    }
    Ok(out)
}

/// Same contract as [`match_lengths`], computed in one left-to-right pass over
/// an online suffix automaton of the prefix.
///
/// The longest prefix of the tail at `i + 1` that occurs before `i + 1` is at
/// least the one at `i` minus one symbol, so the match is carried forward and
/// only ever extended. Total work is linear in `n` up to the cost of symbol
/// lookups.
pub fn match_lengths_fast<T: Ord + Copy>(states: &[T]) -> Result<Vec<usize>> {
    let n = states.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut sam = SuffixAutomaton::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    // (state, length) of the current match states[i..i + len].
    let mut v = SuffixAutomaton::<T>::ROOT;
    let mut len = 0usize;
    for i in 0..n {
        if i > 0 {
            // Drop the first symbol of the previous match.
            if len > 0 {
                len -= 1;
                if v != SuffixAutomaton::<T>::ROOT && len <= sam.len_of(sam.link_of(v)) {
                    v = sam.link_of(v);
                }
            }
            if let Some(split) = sam.extend(states[i - 1]) {
                if v == split.from && len <= sam.len_of(split.into) {
                    v = split.into;
                }
            }
        }
        while i + len < n {
            match sam.step(v, states[i + len]) {
                Some(u) => {
                    v = u;
                    len += 1;
                }
                None => break,
            }
        }
        out.push(len + 1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    /// Bits per symbol.
    pub s_est: f64,
    pub mean_match_length: f64,
    pub n: usize,
    pub lambda: Option<Vec<usize>>,
}

impl EntropyEstimate {
    pub fn from_match_lengths(lambda: Vec<usize>, keep: bool) -> Result<Self> {
        let n = lambda.len();
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        let total: u64 = lambda.iter().map(|&l| l as u64).sum();
        let mean = total as f64 / n as f64;
        Ok(EntropyEstimate {
            s_est: libm::log2(n as f64) / mean,
            mean_match_length: mean,
            n,
            lambda: keep.then_some(lambda),
        })
    }

    /// The same estimate with a natural-log numerator.
    pub fn s_est_nats(&self) -> f64 {
        libm::log(self.n as f64) / self.mean_match_length
    }
}

pub fn estimate_entropy(states: &[State]) -> Result<EntropyEstimate> {
    estimate(states, false)
}

/// Like [`estimate_entropy`] but keeps the per-position match lengths.
pub fn estimate_entropy_detailed(states: &[State]) -> Result<EntropyEstimate> {
    estimate(states, true)
}

fn estimate(states: &[State], keep: bool) -> Result<EntropyEstimate> {
    if states.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: states.len(),
        });
    }
    EntropyEstimate::from_match_lengths(match_lengths_fast(states)?, keep)
}
