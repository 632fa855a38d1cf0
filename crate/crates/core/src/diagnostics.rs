//! Prediction, error metrics, and convergence detection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::model::{Objective, Observation};

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub update_index: u64,
    pub metric_name: String,
    pub value: f64,
}

/// Model prediction at `x`: the transfer mean `h(x.theta)` for GLM kinds,
/// the linear predictor itself for M-estimation kinds.
pub fn predict(spec: &Objective, theta: &Array1<f64>, x: &Array1<f64>) -> Result<f64> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, x has length {}",
            theta.len(),
            x.len()
        )));
    }
    let eta = x.dot(theta);
    if spec.is_glm() {
        spec.transfer(eta)
    } else {
        Ok(eta)
    }
}

/// `||theta_hat - theta_star||^2 / p`.
pub fn mse_to_truth(theta_hat: &Array1<f64>, theta_star: &Array1<f64>) -> Result<f64> {
    if theta_hat.len() != theta_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {}, truth has length {}",
            theta_hat.len(),
            theta_star.len()
        )));
    }
    let p = theta_hat.len() as f64;
    let mut sum = 0.0;
    for j in 0..theta_hat.len() {
        let d = theta_hat[j] - theta_star[j];
        sum += d * d;
    }
    Ok(sum / p)
}

/// Fraction of test rows where thresholding the predicted probability at
/// 0.5 disagrees with the observed label. Binomial objectives only.
pub fn classification_error(
    spec: &Objective,
    theta: &Array1<f64>,
    test: &[Observation],
) -> Result<f64> {
    if !matches!(spec, Objective::GlmBinomial) {
        return Err(Error::Unsupported(format!(
            "classification error needs a binomial objective, got {}",
            spec.name()
        )));
    }
    if test.is_empty() {
        return Err(Error::InvalidInput(
            "classification error of an empty test set".into(),
        ));
    }
    let mut wrong = 0usize;
    for obs in test {
        obs.validate_for(spec)?;
        let prob = predict(spec, theta, &obs.x)?;
        let label = if prob >= 0.5 { 1.0 } else { 0.0 };
        if label != obs.y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// True when the relative change `||theta_i - theta_{i-1}|| / max(1,
/// ||theta_i||)` stays below `tol` over the last `window` consecutive
/// updates in `history` (or over all available ones when the history is
/// shorter). A history with fewer than two iterates reports false.
pub fn convergence_check(history: &[Array1<f64>], tol: f64, window: usize) -> bool {
    if history.len() < 2 || window == 0 {
        return false;
    }
    let steps = window.min(history.len() - 1);
    let start = history.len() - steps;
    for i in start..history.len() {
        let cur = &history[i];
        let prev = &history[i - 1];
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for j in 0..cur.len() {
            let d = cur[j] - prev[j];
            diff2 += d * d;
            norm2 += cur[j] * cur[j];
        }
        if diff2.sqrt() / norm2.sqrt().max(1.0) >= tol {
            return false;
        }
    }
    true
}

/// Writes trace records as CSV with columns `update_index,metric,value`.
pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "update_index,metric,value")?;
    for r in records {
        writeln!(out, "{},{},{}", r.update_index, r.metric_name, r.value)?;
    }
    out.flush()?;
    Ok(())
}
