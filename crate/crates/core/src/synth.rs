//! Seeded synthetic sources: order-2 Markov state sequences with a known
//! entropy rate, and tick-level random-walk price series.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quantize::State;
use crate::series::{Price, PriceSeries};

/// Second-order Markov source over `n_states` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Order2Source {
    n_states: usize,
    // Row-major: table[(a * n + b) * n + c] = P(c | a, b).
    table: Vec<f64>,
}

impl Order2Source {
    /// Random transition rows: i.i.d. exponential weights raised to
    /// `sharpness` and normalized. `sharpness = 1` is a flat Dirichlet;
    /// larger values concentrate each row on fewer successors.
    pub fn random(n_states: usize, sharpness: f64, seed: u64) -> Self {
        assert!(n_states >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_states;
        let mut table = vec![0.0; n * n * n];
        for row in table.chunks_mut(n) {
            for w in row.iter_mut() {
                let u: f64 = 1.0 - rng.random::<f64>();
                *w = libm::pow(-libm::log(u), sharpness);
            }
            let sum: f64 = row.iter().sum();
            for w in row.iter_mut() {
                *w /= sum;
            }
        }
        Order2Source { n_states, table }
    }

    pub fn from_table(n_states: usize, table: Vec<f64>) -> Self {
        assert_eq!(table.len(), n_states * n_states * n_states);
        Order2Source { n_states, table }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, a: usize, b: usize) -> &[f64] {
        let n = self.n_states;
        &self.table[(a * n + b) * n..(a * n + b + 1) * n]
    }

    pub fn generate(&self, len: usize, seed: u64) -> Vec<State> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_states;
        let mut out = Vec::with_capacity(len);
        let mut a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n);
        for _ in 0..len {
            let u: f64 = rng.random();
            let row = self.row(a, b);
            let mut acc = 0.0;
            let mut c = n - 1;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    c = k;
                    break;
                }
            }
            out.push(State(c as u32));
            a = b;
            b = c;
        }
        out
    }

    /// Stationary distribution over pairs `(a, b)`, by power iteration.
    pub fn stationary_pairs(&self) -> Vec<f64> {
        let n = self.n_states;
        let mut pi = vec![1.0 / (n * n) as f64; n * n];
        for _ in 0..10_000 {
            let mut next = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    let mass = pi[a * n + b];
                    for (c, &p) in self.row(a, b).iter().enumerate() {
                        next[b * n + c] += mass * p;
                    }
                }
            }
            let diff: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    /// Entropy rate in bits per symbol.
    pub fn entropy_rate(&self) -> f64 {
        let n = self.n_states;
        let pi = self.stationary_pairs();
        let mut h = 0.0;
        for a in 0..n {
            for b in 0..n {
                let row_h: f64 = self
                    .row(a, b)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * libm::log2(p))
                    .sum();
                h += pi[a * n + b] * row_h;
            }
        }
        h
    }

    /// Accuracy of the Bayes predictor that knows the table.
    pub fn optimal_accuracy(&self) -> f64 {
        let n = self.n_states;
        let pi = self.stationary_pairs();
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let best = self.row(a, b).iter().copied().fold(0.0, f64::max);
                acc += pi[a * n + b] * best;
            }
        }
        acc
    }
}

/// Parameters of a tick-level random walk in whole hundredths.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    pub start: Price,
    /// Probability that the price is unchanged between ticks.
    pub stay_prob: f64,
    /// Largest move in hundredths; moves are uniform on `1..=max_step` with a
    /// random sign.
    pub max_step: i64,
    pub floor: Price,
}

impl Default for RandomWalk {
    fn default() -> Self {
        RandomWalk {
            start: Price(1000),
            stay_prob: 0.6,
            max_step: 2,
            floor: Price(1),
        }
    }
}

impl RandomWalk {
    pub fn prices(&self, len: usize, seed: u64) -> Vec<Price> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = self.start.0;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(Price(p));
            if rng.random::<f64>() >= self.stay_prob {
                let step = rng.random_range(1..=self.max_step);
                let next = if rng.random::<bool>() {
                    p + step
                } else {
                    p - step
                };
                p = next.max(self.floor.0);
            }
        }
        out
    }

    /// A series of `days` trading days, `ticks_per_day` snapshots 3 s apart
    /// from 09:30 each day, starting 2021-01-04.
    pub fn series(&self, code: &str, days: usize, ticks_per_day: usize, seed: u64) -> PriceSeries {
        const FIRST_DAY: i64 = 1_609_718_400;
        const OPEN: i64 = 9 * 3600 + 30 * 60;
        let prices = self.prices(days * ticks_per_day, seed);
        let points = prices
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let day = (i / ticks_per_day) as i64;
                let k = (i % ticks_per_day) as i64;
                (FIRST_DAY + day * 86_400 + OPEN + 3 * k, p)
            })
            .collect();
        PriceSeries::from_points(code, points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        let src = Order2Source::random(5, 2.0, 3);
        for a in 0..5 {
            for b in 0..5 {
                let s: f64 = src.row(a, b).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let pi: f64 = src.stationary_pairs().iter().sum();
        assert!((pi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iid_uniform_entropy_rate() {
        let src = Order2Source::from_table(4, vec![0.25; 64]);
        assert!((src.entropy_rate() - 2.0).abs() < 1e-12);
        assert!((src.optimal_accuracy() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn generation_is_seeded() {
        let src = Order2Source::random(5, 2.0, 1);
        assert_eq!(src.generate(500, 9), src.generate(500, 9));
        assert_ne!(src.generate(500, 9), src.generate(500, 10));
        assert!(src.generate(500, 9).iter().all(|s| s.0 < 5));
    }

    #[test]
    fn random_walk_days() {
        let s = RandomWalk::default().series("x", 3, 100, 5);
        assert_eq!(s.len(), 300);
        assert_eq!(s.day_boundaries(), &[0, 100, 200]);
        assert!(s.prices().all(|p| p.0 >= 1));
    }
}
