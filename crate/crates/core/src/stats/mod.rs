//! Per-stock features and cross-stock statistics.

mod special;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use special::{beta_reg, f_sf, ln_gamma};

/// Price bin edges (currency units) for grouping stocks by average price.
pub const PRICE_EDGES: [f64; 11] = [0.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 13.0, 17.0, 25.0, 50.0];
/// Volatility bin edges.
pub const VOLATILITY_EDGES: [f64; 9] = [0.0, 0.01, 0.016, 0.021, 0.027, 0.033, 0.04, 0.05, 0.07];
/// Employee-count bin edges.
pub const SCALE_EDGES: [f64; 10] = [
    0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3500.0, 5000.0, 8000.0, 15000.0,
];

pub const CATEGORY_COUNT: u32 = 20;
pub const REGION_COUNT: u32 = 32;

/// Which length the volatility denominator is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum VolatilityCount {
    /// Mean over the M returns, divide by M - 1.
    #[default]
    Returns,
    /// Mean and denominator use the price count N = M + 1, as literally
    /// written in the usual price-length formulation.
    Prices,
}

/// Sample standard deviation of log-returns.
pub fn volatility(prices: &[f64], count: VolatilityCount) -> Result<f64> {
    if prices.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: prices.len(),
        });
    }
    if prices.iter().any(|&p| p.is_nan() || p <= 0.0) {
        return Err(Error::Domain);
    }
    let returns: Vec<f64> = prices.windows(2).map(|w| libm::log(w[1] / w[0])).collect();
    let n = match count {
        VolatilityCount::Returns => returns.len(),
        VolatilityCount::Prices => prices.len(),
    } as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let ss: f64 = returns.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok(libm::sqrt(ss / (n - 1.0)))
}

/// 1-based average ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: x.len(),
        });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub ssb: f64,
    pub ssw: f64,
    pub sst: f64,
    pub eta2p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Effect size `SSB / SST`; zero when there is no variance at all.
pub fn partial_eta_squared(ssb: f64, sst: f64) -> f64 {
    if sst > 0.0 {
        ssb / sst
    } else {
        0.0
    }
}

/// One-way ANOVA over the given groups.
pub fn anova_oneway<'a, I>(groups: I) -> Result<AnovaResult>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let groups: Vec<&[f64]> = groups.into_iter().collect();
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput("anova needs at least two groups"));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput("anova group is empty"));
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if n <= k {
        return Err(Error::InvalidInput(
            "anova needs more observations than groups",
        ));
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in &groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let sst = ssb + ssw;
    let df_between = k - 1;
    let df_within = n - k;
    let msb = ssb / df_between as f64;
    let msw = ssw / df_within as f64;
    let f = if ssb == 0.0 {
        0.0
    } else if msw == 0.0 {
        f64::INFINITY
    } else {
        msb / msw
    };
    Ok(AnovaResult {
        f,
        p: f_sf(f, df_between as f64, df_within as f64),
        ssb,
        ssw,
        sst,
        eta2p: partial_eta_squared(ssb, sst),
        df_between,
        df_within,
    })
}

/// 1-based bin of `value` for half-open bins `[e_k, e_{k+1})`; the last bin
/// is open above and values below the first edge go to bin 1.
pub fn bin_index(value: f64, edges: &[f64]) -> Result<usize> {
    if edges.is_empty() {
        return Err(Error::InvalidInput("bin edges are empty"));
    }
    if edges
        .windows(2)
        .any(|w| w[0].is_nan() || w[1].is_nan() || w[0] >= w[1])
    {
        return Err(Error::InvalidInput("bin edges must be strictly increasing"));
    }
    Ok(edges.partition_point(|&e| e <= value).max(1))
}

pub fn bin_feature(values: &[f64], edges: &[f64]) -> Result<Vec<usize>> {
    values.iter().map(|&v| bin_index(v, edges)).collect()
}

/// Min-max scaling to `[0, 1]`; a constant input maps to 0.5.
pub fn normalize_minmax(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || min.is_nan() || max <= min {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;
    use proptest::prelude::*;

    #[test]
    fn volatility_examples() {
        assert_eq!(
            volatility(&[5.0; 10], VolatilityCount::Returns).unwrap(),
            0.0
        );
        let s = volatility(&[1.0, E, 1.0, E, 1.0], VolatilityCount::Returns).unwrap();
        assert!((s - libm::sqrt(4.0 / 3.0)).abs() < 1e-12);
        // Price-count reading: mean 0 over 5, 4 / (5 - 1).
        let s = volatility(&[1.0, E, 1.0, E, 1.0], VolatilityCount::Prices).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn volatility_errors() {
        assert!(volatility(&[1.0, 2.0], VolatilityCount::Returns).is_err());
        assert_eq!(
            volatility(&[1.0, 0.0, 2.0], VolatilityCount::Returns),
            Err(Error::Domain)
        );
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-12);
        // Average ranks x = (1, 2.5, 2.5, 4); Pearson on ranks = 4.5 / sqrt(4.5 * 5).
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.948_683_298_050_513_9).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        );
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn anova_hand_example() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        let r = anova_oneway([&a[..], &b[..]]).unwrap();
        assert!((r.ssb - 13.5).abs() < 1e-12);
        assert!((r.ssw - 4.0).abs() < 1e-12);
        assert!((r.f - 13.5).abs() < 1e-9);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        assert!((r.eta2p - 13.5 / 17.5).abs() < 1e-12);
        // statrs F(1, 4) survival at 13.5.
        assert!((r.p - 0.021_311_641_128_756_34).abs() < 1e-8, "{}", r.p);
    }

    #[test]
    fn anova_identical_groups() {
        let a = [1.0, 2.0, 3.0];
        let r = anova_oneway([&a[..], &a[..]]).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.ssb, 0.0);
        assert_eq!(r.p, 1.0);
        let c = [4.0, 4.0];
        let r = anova_oneway([&c[..], &c[..]]).unwrap();
        assert_eq!((r.f, r.sst, r.eta2p), (0.0, 0.0, 0.0));
    }

    #[test]
    fn anova_degenerate() {
        let a = [1.0];
        let b = [2.0];
        assert!(anova_oneway([&a[..]]).is_err());
        assert!(anova_oneway([&a[..], &b[..]]).is_err());
        assert!(anova_oneway([&a[..], &[][..]]).is_err());
    }

    #[test]
    fn eta_from_table_values() {
        assert!((partial_eta_squared(0.676, 67.768) - 0.00998).abs() < 1e-5);
    }

    #[test]
    fn binning_examples() {
        assert_eq!(bin_index(3.5, &PRICE_EDGES).unwrap(), 2);
        assert_eq!(bin_index(0.08, &VOLATILITY_EDGES).unwrap(), 9);
        assert_eq!(bin_index(-1.0, &PRICE_EDGES).unwrap(), 1);
        assert_eq!(bin_index(3.0, &PRICE_EDGES).unwrap(), 2);
        assert_eq!(bin_index(2000.0, &PRICE_EDGES).unwrap(), 11);
        assert_eq!(bin_index(600.0, &SCALE_EDGES).unwrap(), 2);
        assert!(bin_index(1.0, &[]).is_err());
        assert!(bin_index(1.0, &[2.0, 1.0]).is_err());
        assert_eq!(
            bin_feature(&[1.0, 3.5, 60.0], &PRICE_EDGES).unwrap(),
            vec![1, 2, 11]
        );
    }

    #[test]
    fn minmax() {
        assert_eq!(normalize_minmax(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_minmax(&[7.0, 7.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn spearman_rank_invariant(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = spearman(&x, &y) {
                let fx: Vec<f64> = x.iter().map(|v| libm::exp(v / 50.0) * 3.0 + 1.0).collect();
                let r2 = spearman(&fx, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                let r3 = spearman(&normalize_minmax(&x), &y).unwrap();
                prop_assert!((r - r3).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn anova_decomposition(groups in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 1..12), 2..6)) {
            let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
            let n: usize = groups.iter().map(|g| g.len()).sum();
            prop_assume!(n > groups.len());
            let r = anova_oneway(refs).unwrap();
            let all: Vec<f64> = groups.iter().flatten().copied().collect();
            let m = mean(&all).unwrap();
            let sst: f64 = all.iter().map(|x| (x - m) * (x - m)).sum();
            prop_assert!((r.sst - sst).abs() <= 1e-9 * sst.max(1.0));
            prop_assert!(r.ssb <= r.sst * (1.0 + 1e-12) + 1e-12);
            prop_assert!(r.eta2p >= 0.0 && r.eta2p <= 1.0 + 1e-12);
            prop_assert!(r.f >= 0.0);
        }

        #[test]
        fn volatility_scale_invariant(prices in proptest::collection::vec(0.5f64..200.0, 3..100), k in 0.01f64..100.0) {
            let a = volatility(&prices, VolatilityCount::Returns).unwrap();
            let scaled: Vec<f64> = prices.iter().map(|p| p * k).collect();
            let b = volatility(&scaled, VolatilityCount::Returns).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn binning_total(v in -1e6f64..1e6) {
            let i = bin_index(v, &PRICE_EDGES).unwrap();
            prop_assert!((1..=PRICE_EDGES.len()).contains(&i));
        }
    }
}
