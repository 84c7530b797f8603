//! Residuals, mean squared error and mean absolute error.

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    Ok(())
}

/// Elementwise `actual - predicted`.
pub fn residuals(actual: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    check(actual, predicted)?;
    Ok(actual.iter().zip(predicted).map(|(y, p)| y - p).collect())
}

fn mean_of(actual: &[f64], predicted: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    check(actual, predicted)?;
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    let terms: Vec<f64> = actual.iter().zip(predicted).map(|(y, p)| f(y - p)).collect();
    Ok(pairwise_sum(&terms) / actual.len() as f64)
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    mean_of(actual, predicted, |r| r * r)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    mean_of(actual, predicted, f64::abs)
}

/// Error summary of one model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub split_name: String,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub residuals: Vec<f64>,
}

impl EvalReport {
    pub fn evaluate(
        model_name: &str,
        split_name: &str,
        actual: &[f64],
        predicted: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            model_name: model_name.to_string(),
            split_name: split_name.to_string(),
            n: actual.len(),
            mse: mse(actual, predicted)?,
            mae: mae(actual, predicted)?,
            residuals: residuals(actual, predicted)?,
        })
    }
}
