//! Regularization paths over a decreasing penalty grid.

use ndarray::Array1;
use rayon::prelude::*;

use streamfit::data::{DataSummary, StreamSource};
use streamfit::error::{Error, Result};
use streamfit::model::{Objective, Penalty};
use streamfit::optimizer::{fit, FitConfig, FitResult};
use streamfit::schedule::Schedule;
use streamfit::solver::ImplicitConfig;

/// Grid and execution settings for a path.
#[derive(Debug, Clone)]
pub struct PathConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub alpha: f64,
    pub warm_start: bool,
    /// Largest penalty of the grid. Required when `alpha = 0`, since the
    /// data-driven value comes from the lasso score and degenerates there.
    pub lambda_max: Option<f64>,
    /// Worker count for cold-started paths; warm-started paths are
    /// sequential by definition.
    pub parallel: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            alpha: 1.0,
            warm_start: true,
            lambda_max: None,
            parallel: 1,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::InvalidConfig("n_lambda must be at least 1".into()));
        }
        if self.lambda_min_ratio.is_nan()
            || self.lambda_min_ratio <= 0.0
            || self.lambda_min_ratio >= 1.0
        {
            return Err(Error::InvalidConfig(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if let Some(lm) = self.lambda_max {
            if lm <= 0.0 || !lm.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "lambda_max must be positive, got {lm}"
                )));
            }
        }
        Ok(())
    }
}

/// Log-spaced decreasing grid from `lambda_max` down to
/// `lambda_max * lambda_min_ratio`. The data-driven top of the grid is
/// `max_j |sum_n x_nj y_n| / (n * alpha)`, the smallest penalty whose lasso
/// subgradient condition is satisfied by the zero vector.
pub fn lambda_grid(summary: &DataSummary, alpha: f64, cfg: &PathConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let lambda_max = match cfg.lambda_max {
        Some(v) => v,
        None => {
            if alpha <= 0.0 {
                return Err(Error::InvalidConfig(
                    "alpha = 0 has no finite data-driven lambda_max; pass one explicitly".into(),
                ));
            }
            let max_score = summary
                .score_at_zero
                .iter()
                .fold(0.0f64, |m, s| m.max(s.abs()));
            if max_score == 0.0 {
                return Err(Error::InvalidInput(
                    "score at zero vanishes; the lambda grid is degenerate".into(),
                ));
            }
            max_score / (summary.n_rows as f64 * alpha)
        }
    };
    if cfg.n_lambda == 1 {
        return Ok(vec![lambda_max]);
    }
    let steps = (cfg.n_lambda - 1) as f64;
    Ok((0..cfg.n_lambda)
        .map(|i| lambda_max * cfg.lambda_min_ratio.powf(i as f64 / steps))
        .collect())
}

/// Outcome of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Ok,
    Failed,
}

/// Per-penalty fit record. Numeric failures (divergence, solver failures)
/// are captured here so the rest of the path keeps going.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub lambda: f64,
    pub status: PathStatus,
    pub estimate: Option<Array1<f64>>,
    pub updates: u64,
    pub converged: bool,
    pub error: Option<String>,
}

impl PathEntry {
    fn from_result(lambda: f64, result: Result<FitResult>) -> Result<Self> {
        match result {
            Ok(res) => Ok(Self {
                lambda,
                status: PathStatus::Ok,
                estimate: Some(res.estimate),
                updates: res.updates,
                converged: res.converged,
                error: None,
            }),
            Err(
                e @ (Error::Divergence { .. }
                | Error::SolverFailure { .. }
                | Error::ConvergenceFailure { .. }),
            ) => Ok(Self {
                lambda,
                status: PathStatus::Failed,
                estimate: None,
                updates: 0,
                converged: false,
                error: Some(e.to_string()),
            }),
            Err(other) => Err(other),
        }
    }
}

/// Fits every penalty of the grid in decreasing order. Warm-started paths
/// run sequentially, initializing each fit from the last successful
/// estimate; cold-started paths can fan out over `cfg.parallel` workers,
/// each owning its own state, schedule, and reader.
pub fn run_path(
    source: &StreamSource,
    spec: &Objective,
    schedule: &Schedule,
    cfg: &PathConfig,
    fit_cfg: &FitConfig,
    solver_cfg: &ImplicitConfig,
) -> Result<Vec<PathEntry>> {
    cfg.validate()?;
    let grid = if cfg.lambda_max.is_some() {
        lambda_grid(&empty_summary(), cfg.alpha, cfg)?
    } else {
        lambda_grid(&source.summarize()?, cfg.alpha, cfg)?
    };

    if cfg.warm_start || cfg.parallel <= 1 {
        let mut entries = Vec::with_capacity(grid.len());
        let mut warm: Option<Array1<f64>> = fit_cfg.start.clone();
        for &lambda in &grid {
            let pen = Penalty::new(cfg.alpha, lambda)?;
            let mut one_cfg = fit_cfg.clone();
            if cfg.warm_start {
                one_cfg.start = warm.clone();
            }
            let entry = PathEntry::from_result(
                lambda,
                fit(source, spec, schedule.clone(), &pen, &one_cfg, solver_cfg),
            )?;
            if cfg.warm_start {
                if let Some(est) = &entry.estimate {
                    warm = Some(est.clone());
                }
            }
            entries.push(entry);
        }
        Ok(entries)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
        let results: Vec<Result<PathEntry>> = pool.install(|| {
            grid.par_iter()
                .map(|&lambda| {
                    let pen = Penalty::new(cfg.alpha, lambda)?;
                    PathEntry::from_result(
                        lambda,
                        fit(source, spec, schedule.clone(), &pen, fit_cfg, solver_cfg),
                    )
                })
                .collect()
        });
        results.into_iter().collect()
    }
}

fn empty_summary() -> DataSummary {
    DataSummary {
        n_rows: 0,
        dim: 0,
        score_at_zero: Array1::zeros(0),
    }
}
