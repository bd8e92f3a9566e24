//! Upper bound on next-state accuracy from the Fano relation
//! `S = H(p) + (1 - p) log2(N - 1)`.

use crate::error::{Error, Result};

pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictabilityReport {
    pub stock_code: alloc::string::String,
    pub s_est: f64,
    pub n_states: usize,
    pub pi_max: f64,
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * libm::log2(q) };
    term(p) + term(1.0 - p)
}

/// Right-hand side of the Fano relation. Strictly decreasing on `[1/N, 1]`.
pub fn fano_objective(pi: f64, n_states: usize) -> f64 {
    let tail = if n_states > 1 {
        (1.0 - pi) * libm::log2((n_states - 1) as f64)
    } else {
        0.0
    };
    binary_entropy(pi) + tail
}

/// Outcome of [`fano_solve`], including whether the input was outside the
/// solvable range and clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoSolution {
    pub pi_max: f64,
    pub clamped: bool,
}

/// Solves for the predictability bound by bisection on `[1/N, 1]`.
///
/// `S <= 0` gives 1; `S >= log2 N` gives `1/N`. Both are reported as clamped
/// when they come from estimator noise rather than an exact boundary.
pub fn fano_solve(entropy: f64, n_states: usize) -> Result<FanoSolution> {
    if n_states == 0 {
        return Err(Error::InvalidInput("number of states must be at least 1"));
    }
    if entropy.is_nan() {
        return Err(Error::InvalidInput("entropy is NaN"));
    }
    if n_states == 1 {
        return Ok(FanoSolution {
            pi_max: 1.0,
            clamped: entropy > 0.0,
        });
    }
    if entropy <= 0.0 {
        return Ok(FanoSolution {
            pi_max: 1.0,
            clamped: entropy < 0.0,
        });
    }
    let n = n_states as f64;
    let upper_entropy = libm::log2(n);
    if entropy >= upper_entropy {
        return Ok(FanoSolution {
            pi_max: 1.0 / n,
            clamped: entropy > upper_entropy,
        });
    }
    let (mut lo, mut hi) = (1.0 / n, 1.0);
    // Bisect past TOLERANCE down to float resolution: the objective is steep
    // near 1, and a 1e-10 bracket alone does not bound the residual there.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if hi - lo <= TOLERANCE && (fano_objective(mid, n_states) - entropy).abs() < 1e-12 {
            break;
        }
        if fano_objective(mid, n_states) > entropy {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FanoSolution {
        pi_max: 0.5 * (lo + hi),
        clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_entropy_is_certain() {
        assert_eq!(fano_solve(0.0, 5).unwrap().pi_max, 1.0);
    }

    #[test]
    fn one_bit_two_states() {
        assert!((fano_solve(1.0, 2).unwrap().pi_max - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_bits_ten_states() {
        // Independent bisection at 200 iterations gives 0.6606280657410403.
        let s = fano_solve(2.0, 10).unwrap();
        assert!((s.pi_max - 0.660_628_065_741_040_3).abs() < 1e-9);
        assert!((fano_objective(s.pi_max, 10) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn endpoints_of_objective() {
        for n in 2..50usize {
            let g_lo = fano_objective(1.0 / n as f64, n);
            assert!((g_lo - libm::log2(n as f64)).abs() < 1e-12, "n={n}");
            assert_eq!(fano_objective(1.0, n), 0.0);
        }
    }

    #[test]
    fn clamps_out_of_range() {
        let s = fano_solve(5.0, 4).unwrap();
        assert_eq!(s.pi_max, 0.25);
        assert!(s.clamped);
        let s = fano_solve(-0.1, 4).unwrap();
        assert_eq!(s.pi_max, 1.0);
        assert!(s.clamped);
        assert_eq!(fano_solve(0.3, 1).unwrap().pi_max, 1.0);
        assert!(fano_solve(1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn residual_small(s in 0.0f64..12.0, n in 2usize..5000) {
            let sol = fano_solve(s, n).unwrap();
            if !sol.clamped && s > 0.0 && s < libm::log2(n as f64) {
                prop_assert!((fano_objective(sol.pi_max, n) - s).abs() < 1e-9);
            }
            prop_assert!(sol.pi_max >= 1.0 / n as f64 - 1e-12 && sol.pi_max <= 1.0);
        }

        #[test]
        fn monotone_in_entropy(a in 0.0f64..6.0, b in 0.0f64..6.0, n in 2usize..200) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = fano_solve(lo, n).unwrap().pi_max;
            let p_hi = fano_solve(hi, n).unwrap().pi_max;
            prop_assert!(p_hi <= p_lo + 1e-9);
        }

        #[test]
        fn monotone_in_states(s in 0.0f64..6.0, n in 2usize..200, extra in 1usize..100) {
            // The objective grows with N, so at fixed entropy a larger
            // alphabet needs a more concentrated distribution.
            prop_assume!(s < libm::log2(n as f64));
            let small = fano_solve(s, n).unwrap().pi_max;
            let large = fano_solve(s, n + extra).unwrap().pi_max;
            prop_assert!(large >= small - 1e-9);
        }
    }
}
