//! Accuracy, RMSE and RMSE-to-price ratio of a prediction trace.

use alloc::string::String;

use crate::error::{Error, Result};
use crate::predict::{ModelKind, PredictionTrace};
use crate::quantize::QuantizationScheme;

/// What the predicted price is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GroundTruth {
    /// The observed price.
    #[default]
    Raw,
    /// The midpoint of the observed state.
    State,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    pub stock_code: String,
    pub model: ModelKind,
    pub acc: f64,
    pub rmse: f64,
    /// Permille of the average price, when one was supplied.
    pub rmse_price_ratio: Option<f64>,
    pub n_test: usize,
}

pub fn accuracy(trace: &PredictionTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = trace.predictions.iter().filter(|(p, a)| p == a).count();
    Ok(hits as f64 / trace.len() as f64)
}

/// Root mean squared difference of two aligned value lists.
pub fn rmse_values(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, yp)| (y - yp) * (y - yp))
        .sum();
    Ok(libm::sqrt(sum / actual.len() as f64))
}

/// RMSE in price space. Predictions are mapped to state midpoints; the
/// reference is `raw_prices` when given (aligned with the trace), else the
/// midpoint of the actual state.
pub fn rmse(
    trace: &PredictionTrace,
    scheme: &QuantizationScheme,
    raw_prices: Option<&[f64]>,
) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(raw) = raw_prices {
        if raw.len() != trace.len() {
            return Err(Error::LengthMismatch {
                left: trace.len(),
                right: raw.len(),
            });
        }
    }
    let mut sum = 0.0;
    for (k, &(pred, actual)) in trace.predictions.iter().enumerate() {
        let y = match raw_prices {
            Some(raw) => raw[k],
            None => scheme.dequantize(actual),
        };
        let e = y - scheme.dequantize(pred);
        sum += e * e;
    }
    Ok(libm::sqrt(sum / trace.len() as f64))
}

/// `1000 * rmse / avgprice`.
pub fn rmse_ratio(rmse: f64, avgprice: f64) -> Result<f64> {
    if avgprice <= 0.0 || avgprice.is_nan() {
        return Err(Error::Domain);
    }
    Ok(1000.0 * rmse / avgprice)
}

/// Builds a full report in one pass over the trace.
pub fn evaluate(
    trace: &PredictionTrace,
    scheme: &QuantizationScheme,
    raw_prices: Option<&[f64]>,
    avgprice: Option<f64>,
) -> Result<EvaluationReport> {
    let acc = accuracy(trace)?;
    let rmse = rmse(trace, scheme, raw_prices)?;
    let rmse_price_ratio = avgprice.map(|p| rmse_ratio(rmse, p)).transpose()?;
    Ok(EvaluationReport {
        stock_code: trace.stock_code.clone(),
        model: trace.model,
        acc,
        rmse,
        rmse_price_ratio,
        n_test: trace.len(),
    })
}

impl EvaluationReport {
    pub fn with_ratio(mut self, avgprice: f64) -> Result<Self> {
        self.rmse_price_ratio = Some(rmse_ratio(self.rmse, avgprice)?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::State;
    use crate::series::Price;
    use alloc::vec::Vec;

    fn trace(pairs: &[(u32, u32)]) -> PredictionTrace {
        PredictionTrace {
            stock_code: "x".into(),
            model: ModelKind::Mc,
            predictions: pairs.iter().map(|&(p, a)| (State(p), State(a))).collect(),
            start_index: 0,
        }
    }

    #[test]
    fn accuracy_fractions() {
        assert_eq!(
            accuracy(&trace(&[(1, 1), (2, 2), (3, 3), (4, 0)])).unwrap(),
            0.75
        );
        assert_eq!(accuracy(&trace(&[(1, 1), (2, 2)])).unwrap(), 1.0);
        assert_eq!(accuracy(&trace(&[])), Err(Error::EmptyInput));
    }

    #[test]
    fn rmse_arithmetic() {
        let t5 = QuantizationScheme::fixed_interval(Price(5)).unwrap();
        assert_eq!(rmse(&trace(&[(7, 7), (9, 9)]), &t5, None).unwrap(), 0.0);
        assert_eq!(
            rmse_values(&[0.0, 0.0, 0.0, 0.0], &[2.0, 0.0, 0.0, 0.0]).unwrap(),
            1.0
        );
        let off = rmse(&trace(&[(201, 200), (199, 200), (301, 300)]), &t5, None).unwrap();
        assert!((off - 0.05).abs() < 1e-12);
    }

    #[test]
    fn rmse_against_raw_prices() {
        let t1 = QuantizationScheme::fixed_interval(Price(1)).unwrap();
        let t = trace(&[(1000, 1000), (1001, 1000)]);
        let r = rmse(&t, &t1, Some(&[10.00, 10.00])).unwrap();
        // Midpoints 10.005 and 10.015 against 10.00.
        let expected = libm::sqrt((0.005f64.powi(2) + 0.015f64.powi(2)) / 2.0);
        assert!((r - expected).abs() < 1e-12);
        assert!(matches!(
            rmse(&t, &t1, Some(&[10.0])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ratio_permille() {
        assert!((rmse_ratio(0.05, 10.0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(rmse_ratio(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(rmse_ratio(0.1, 0.0), Err(Error::Domain));
        assert_eq!(rmse_ratio(0.1, -2.0), Err(Error::Domain));
    }

    #[test]
    fn report_fields() {
        let t5 = QuantizationScheme::fixed_interval(Price(5)).unwrap();
        let r = evaluate(&trace(&[(2, 2), (3, 2)]), &t5, None, Some(10.0)).unwrap();
        assert_eq!(r.n_test, 2);
        assert_eq!(r.acc, 0.5);
        assert!((r.rmse - libm::sqrt(0.05f64.powi(2) / 2.0)).abs() < 1e-12);
        assert!((r.rmse_price_ratio.unwrap() - 1000.0 * r.rmse / 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rmse_iff_perfect() {
        let t1 = QuantizationScheme::fixed_interval(Price(1)).unwrap();
        let perfect = trace(&[(5, 5), (6, 6), (9, 9)]);
        let flawed = trace(&[(5, 5), (6, 7), (9, 9)]);
        assert_eq!(rmse(&perfect, &t1, None).unwrap(), 0.0);
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        assert!(rmse(&flawed, &t1, None).unwrap() > 0.0);
        assert!(accuracy(&flawed).unwrap() < 1.0);
    }

    #[test]
    fn scale_equivariance() {
        let pairs: Vec<(u32, u32)> = (0..40).map(|i| (100 + i % 7, 100 + i % 5)).collect();
        let t = trace(&pairs);
        let t1 = QuantizationScheme::fixed_interval(Price(1)).unwrap();
        let t10 = QuantizationScheme::fixed_interval(Price(10)).unwrap();
        let a = rmse(&t, &t1, None).unwrap();
        let b = rmse(&t, &t10, None).unwrap();
        assert!((b - 10.0 * a).abs() < 1e-9);
    }
}
