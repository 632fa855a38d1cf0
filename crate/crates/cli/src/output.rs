//! Serialized fit/path outputs and their human-readable rendering.
//!
//! The JSON forms deliberately avoid timestamps and timings so a repeated
//! run with the same seed and flags writes byte-identical files.

use serde::{Deserialize, Serialize};

use crate::path::{PathEntry, PathStatus};

/// Learning-rate settings as they went into a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningRateOutput {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
}

/// A completed single fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub huber_delta: Option<f64>,
    pub method: String,
    pub alpha: f64,
    pub lambda: f64,
    pub learning_rate: LearningRateOutput,
    pub passes: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub updates: u64,
    pub converged: bool,
    pub estimate: Vec<f64>,
    pub last_iterate: Vec<f64>,
}

/// One grid point of a path output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEntryOutput {
    pub lambda: f64,
    pub status: String,
    pub updates: u64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimate: Option<Vec<f64>>,
}

/// A completed path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOutput {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub huber_delta: Option<f64>,
    pub method: String,
    pub alpha: f64,
    pub passes: usize,
    pub seed: u64,
    pub warm_start: bool,
    pub entries: Vec<PathEntryOutput>,
}

impl PathEntryOutput {
    pub fn from_entry(entry: &PathEntry) -> Self {
        Self {
            lambda: entry.lambda,
            status: match entry.status {
                PathStatus::Ok => "ok".to_string(),
                PathStatus::Failed => "failed".to_string(),
            },
            updates: entry.updates,
            converged: entry.converged,
            error: entry.error.clone(),
            estimate: entry.estimate.as_ref().map(|e| e.to_vec()),
        }
    }
}

/// Aligned-column text for a single fit.
pub fn render_fit_text(out: &FitOutput) -> String {
    let norm = out.estimate.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nonzero = out.estimate.iter().filter(|v| **v != 0.0).count();
    let mut text = String::new();
    text.push_str(&format!(
        "model {}  method {}  alpha {}  lambda {}\n",
        out.model, out.method, out.alpha, out.lambda
    ));
    text.push_str(&format!(
        "updates {}  converged {}  nonzero {}/{}  estimate_norm {:.6}\n",
        out.updates,
        out.converged,
        nonzero,
        out.estimate.len(),
        norm
    ));
    let shown = out.estimate.len().min(10);
    text.push_str(&format!("{:>6}  {:>14}\n", "coef", "value"));
    for (j, v) in out.estimate.iter().take(shown).enumerate() {
        text.push_str(&format!("{:>6}  {:>14.6}\n", j + 1, v));
    }
    if out.estimate.len() > shown {
        text.push_str(&format!("  ... {} more\n", out.estimate.len() - shown));
    }
    text
}

/// Aligned-column summary table for a path.
pub fn render_path_text(out: &PathOutput) -> String {
    let mut text = format!(
        "model {}  method {}  alpha {}  warm_start {}\n",
        out.model, out.method, out.alpha, out.warm_start
    );
    text.push_str(&format!(
        "{:>4}  {:>13}  {:>7}  {:>5}  {:>12}  {:>8}\n",
        "idx", "lambda", "status", "nnz", "l2_norm", "updates"
    ));
    for (i, e) in out.entries.iter().enumerate() {
        let (nnz, norm) = match &e.estimate {
            Some(est) => (
                est.iter().filter(|v| **v != 0.0).count().to_string(),
                format!("{:.6}", est.iter().map(|v| v * v).sum::<f64>().sqrt()),
            ),
            None => ("-".to_string(), "-".to_string()),
        };
        text.push_str(&format!(
            "{:>4}  {:>13.6e}  {:>7}  {:>5}  {:>12}  {:>8}\n",
            i + 1,
            e.lambda,
            e.status,
            nnz,
            norm,
            e.updates
        ));
    }
    text
}
