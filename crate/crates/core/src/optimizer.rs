//! The six estimation methods and the streaming fit loop.
//!
//! Every method is a single-observation recursion: explicit SGD, implicit
//! (proximal) SGD, either of those with running-average output, and the two
//! momentum schemes. A fit consumes the stream one or more passes,
//! optionally shuffling within each chunk, and reports the averaged iterate
//! for averaged methods and the last iterate otherwise.

use std::collections::VecDeque;
use std::str::FromStr;

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::data::{shuffle_rng, StreamSource};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::model::{Objective, Observation, Penalty};
use crate::schedule::{Conditioner, Schedule};
use crate::solver::{apply_scaled_step, solve_scale, ImplicitConfig};

/// Iterate norms past this bound are treated as numeric divergence; a
/// structured error beats silent NaN propagation.
pub const DIVERGENCE_NORM: f64 = 1e10;

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Explicit SGD.
    Esgd,
    /// Implicit SGD without averaging.
    Isgd,
    /// Explicit SGD with running-average output.
    Asgd,
    /// Implicit SGD with running-average output.
    AiSgd,
    /// Classical momentum.
    Momentum,
    /// Nesterov accelerated gradient.
    Nag,
}

impl Method {
    pub fn averaged(self) -> bool {
        matches!(self, Method::Asgd | Method::AiSgd)
    }

    pub fn implicit(self) -> bool {
        matches!(self, Method::Isgd | Method::AiSgd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Esgd => "esgd",
            Method::Isgd => "isgd",
            Method::Asgd => "asgd",
            Method::AiSgd => "ai-sgd",
            Method::Momentum => "momentum",
            Method::Nag => "nag",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esgd" => Ok(Method::Esgd),
            "isgd" => Ok(Method::Isgd),
            "asgd" => Ok(Method::Asgd),
            "ai-sgd" | "aisgd" => Ok(Method::AiSgd),
            "momentum" => Ok(Method::Momentum),
            "nag" => Ok(Method::Nag),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// What to record along the trajectory.
#[derive(Debug, Clone)]
pub enum TraceMetric {
    /// L2 norm of the current estimate.
    EstimateNorm,
    /// Mean squared error of the current estimate against a known truth.
    MseToTruth(Array1<f64>),
}

impl TraceMetric {
    pub fn name(&self) -> &'static str {
        match self {
            TraceMetric::EstimateNorm => "estimate_norm",
            TraceMetric::MseToTruth(_) => "mse_to_truth",
        }
    }
}

/// Trace recording: one `(update index, value)` pair every `every` updates.
#[derive(Debug, Clone)]
pub struct TraceSpec {
    pub every: u64,
    pub metric: TraceMetric,
}

/// Fit-loop configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub method: Method,
    pub passes: usize,
    pub momentum_mu: f64,
    pub shuffle: bool,
    pub seed: u64,
    /// Starting iterate; zero when absent.
    pub start: Option<Array1<f64>>,
    /// Opt-in early stopping: halt once the relative estimate change stays
    /// under this tolerance for a full window. Convergence is still
    /// *reported* when unset, using [`FitConfig::REPORT_TOLERANCE`].
    pub stop_tolerance: Option<f64>,
    pub convergence_window: usize,
    pub trace: Option<TraceSpec>,
}

impl FitConfig {
    /// Tolerance used for the reported `converged` flag when early stopping
    /// is not requested.
    pub const REPORT_TOLERANCE: f64 = 1e-8;

    pub fn new(method: Method) -> Self {
        Self {
            method,
            passes: 1,
            momentum_mu: 0.9,
            shuffle: false,
            seed: 0,
            start: None,
            stop_tolerance: None,
            convergence_window: 5,
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::InvalidConfig("passes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.momentum_mu) {
            return Err(Error::InvalidConfig(format!(
                "momentum coefficient must lie in [0, 1], got {}",
                self.momentum_mu
            )));
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig(
                "convergence window must be at least 1".into(),
            ));
        }
        if let Some(tol) = self.stop_tolerance {
            if tol <= 0.0 || tol.is_nan() {
                return Err(Error::InvalidConfig(format!(
                    "stop tolerance must be positive, got {tol}"
                )));
            }
        }
        if let Some(trace) = &self.trace {
            if trace.every == 0 {
                return Err(Error::InvalidConfig(
                    "trace interval must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Mutable state of one fit: iterate, compensated running sum for the
/// average, momentum velocity, and the global update counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub theta: Array1<f64>,
    pub velocity: Array1<f64>,
    pub n: u64,
    avg_sum: Array1<f64>,
    avg_comp: Array1<f64>,
    avg_count: u64,
}

impl OptimizerState {
    pub fn new(start: Array1<f64>) -> Self {
        let p = start.len();
        Self {
            theta: start,
            velocity: Array1::zeros(p),
            n: 0,
            avg_sum: Array1::zeros(p),
            avg_comp: Array1::zeros(p),
            avg_count: 0,
        }
    }

    /// Folds the current iterate into the running average. The average is
    /// kept as a Neumaier-compensated sum so `theta_bar` stays the exact
    /// arithmetic mean of every iterate folded in, not an approximation
    /// that drifts with the update count.
    pub fn update_average(&mut self) {
        self.avg_count += 1;
        for j in 0..self.theta.len() {
            let v = self.theta[j];
            let s = self.avg_sum[j];
            let t = s + v;
            self.avg_comp[j] += if s.abs() >= v.abs() {
                (s - t) + v
            } else {
                (v - t) + s
            };
            self.avg_sum[j] = t;
        }
    }

    /// Mean of the iterates folded in so far; the current iterate when none
    /// have been.
    pub fn theta_bar(&self) -> Array1<f64> {
        if self.avg_count == 0 {
            return self.theta.clone();
        }
        let n = self.avg_count as f64;
        let mut out = Array1::zeros(self.theta.len());
        for j in 0..self.theta.len() {
            out[j] = (self.avg_sum[j] + self.avg_comp[j]) / n;
        }
        out
    }

    /// Iterates folded into the average so far.
    pub fn averaged_count(&self) -> u64 {
        self.avg_count
    }

    fn check_finite(&self) -> Result<()> {
        let norm = self.theta.dot(&self.theta).sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                update_index: self.n,
                norm,
            });
        }
        Ok(())
    }
}

/// One explicit update:
/// `theta += gamma * C * (l'(x.theta; y) x - grad_penalty(theta))`.
pub fn explicit_step(
    state: &mut OptimizerState,
    spec: &Objective,
    gamma: f64,
    cond: &Conditioner,
    obs: &Observation,
    pen: &Penalty,
) -> Result<()> {
    let eta = obs.x.dot(&state.theta);
    let kappa = spec.lprime_saturating(eta, obs.y);
    for (j, t) in state.theta.iter_mut().enumerate() {
        let gp = pen.gradient_entry(*t);
        *t += gamma * cond.entry(j) * (kappa * obs.x[j] - gp);
    }
    state.n += 1;
    state.check_finite()
}

/// One implicit update, delegating the fixed-point solve to the solver.
pub fn implicit_step(
    state: &mut OptimizerState,
    spec: &Objective,
    gamma: f64,
    cond: &Conditioner,
    obs: &Observation,
    pen: &Penalty,
    solver_cfg: &ImplicitConfig,
) -> Result<()> {
    let solved = solve_scale(spec, gamma, &state.theta, obs, cond, pen, solver_cfg)?;
    apply_scaled_step(&mut state.theta, solved.xi, gamma, obs, cond, pen);
    state.n += 1;
    state.check_finite()
}

/// Classical momentum: the velocity accumulates the penalized explicit
/// gradient, then moves the iterate. The textbook update is stated for the
/// unpenalized score; the penalty extension here evaluates both the score
/// and the penalty gradient at the same point.
pub fn momentum_step(
    state: &mut OptimizerState,
    spec: &Objective,
    gamma: f64,
    cond: &Conditioner,
    obs: &Observation,
    pen: &Penalty,
    mu: f64,
) -> Result<()> {
    let eta = obs.x.dot(&state.theta);
    let kappa = spec.lprime_saturating(eta, obs.y);
    for j in 0..state.theta.len() {
        let gp = pen.gradient_entry(state.theta[j]);
        state.velocity[j] =
            mu * state.velocity[j] + gamma * cond.entry(j) * (kappa * obs.x[j] - gp);
        state.theta[j] += state.velocity[j];
    }
    state.n += 1;
    state.check_finite()
}

/// Nesterov accelerated gradient: both the score and the penalty gradient
/// are evaluated at the look-ahead point `theta + mu * v`.
pub fn nag_step(
    state: &mut OptimizerState,
    spec: &Objective,
    gamma: f64,
    cond: &Conditioner,
    obs: &Observation,
    pen: &Penalty,
    mu: f64,
) -> Result<()> {
    let mut eta = 0.0;
    for j in 0..state.theta.len() {
        eta += obs.x[j] * (state.theta[j] + mu * state.velocity[j]);
    }
    let kappa = spec.lprime_saturating(eta, obs.y);
    for j in 0..state.theta.len() {
        let look = state.theta[j] + mu * state.velocity[j];
        let gp = pen.gradient_entry(look);
        state.velocity[j] =
            mu * state.velocity[j] + gamma * cond.entry(j) * (kappa * obs.x[j] - gp);
        state.theta[j] += state.velocity[j];
    }
    state.n += 1;
    state.check_finite()
}

/// Result of a completed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// The reported estimate: the running average for averaged methods,
    /// the last iterate otherwise.
    pub estimate: Array1<f64>,
    pub last_iterate: Array1<f64>,
    pub updates: u64,
    pub converged: bool,
    pub trace: Option<Vec<(u64, f64)>>,
}

/// Runs one fit over the stream, consuming it `cfg.passes` times.
///
/// Dispatches by method: explicit-family steps for `esgd`, `momentum`,
/// `nag`; implicit steps for `isgd`; `asgd` and `ai-sgd` add the running
/// average. When `cfg.shuffle` is set, each chunk is visited in an order
/// drawn from the seeded shuffle stream, giving sampling without
/// replacement within every pass.
pub fn fit(
    source: &StreamSource,
    spec: &Objective,
    mut schedule: Schedule,
    pen: &Penalty,
    cfg: &FitConfig,
    solver_cfg: &ImplicitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    solver_cfg.validate()?;

    let mut rng = shuffle_rng(cfg.seed);
    let mut state: Option<OptimizerState> = None;
    let mut trace: Option<Vec<(u64, f64)>> = cfg.trace.as_ref().map(|_| Vec::new());

    let report_tol = cfg.stop_tolerance.unwrap_or(FitConfig::REPORT_TOLERANCE);
    let mut prev_estimate: Option<Array1<f64>> = None;
    let mut recent_changes: VecDeque<f64> = VecDeque::with_capacity(cfg.convergence_window);
    let mut converged = false;

    'passes: for _ in 0..cfg.passes {
        for chunk in source.stream_chunks()? {
            let mut chunk = chunk?;
            if cfg.shuffle {
                chunk.shuffle(&mut rng);
            }
            for obs in &chunk {
                obs.validate_for(spec)?;
                let state = match &mut state {
                    Some(s) => {
                        if s.theta.len() != obs.dim() {
                            return Err(Error::DimensionMismatch(format!(
                                "observation has dimension {}, fit started with {}",
                                obs.dim(),
                                s.theta.len()
                            )));
                        }
                        s
                    }
                    None => {
                        let start = match &cfg.start {
                            Some(s) => {
                                if s.len() != obs.dim() {
                                    return Err(Error::DimensionMismatch(format!(
                                        "start vector has length {}, data dimension {}",
                                        s.len(),
                                        obs.dim()
                                    )));
                                }
                                s.clone()
                            }
                            None => Array1::zeros(obs.dim()),
                        };
                        state.insert(OptimizerState::new(start))
                    }
                };

                let n_next = state.n + 1;
                let (gamma, cond) = schedule.next(n_next, || {
                    let eta = obs.x.dot(&state.theta);
                    let kappa = spec.lprime_saturating(eta, obs.y);
                    obs.x.mapv(|xj| kappa * xj)
                })?;

                match cfg.method {
                    Method::Esgd | Method::Asgd => {
                        explicit_step(state, spec, gamma, &cond, obs, pen)?
                    }
                    Method::Isgd | Method::AiSgd => {
                        implicit_step(state, spec, gamma, &cond, obs, pen, solver_cfg)?
                    }
                    Method::Momentum => {
                        momentum_step(state, spec, gamma, &cond, obs, pen, cfg.momentum_mu)?
                    }
                    Method::Nag => nag_step(state, spec, gamma, &cond, obs, pen, cfg.momentum_mu)?,
                }
                if cfg.method.averaged() {
                    state.update_average();
                }

                let estimate = if cfg.method.averaged() {
                    state.theta_bar()
                } else {
                    state.theta.clone()
                };

                if let (Some(records), Some(spec_trace)) = (&mut trace, &cfg.trace) {
                    if state.n % spec_trace.every == 0 {
                        let value = match &spec_trace.metric {
                            TraceMetric::EstimateNorm => estimate.dot(&estimate).sqrt(),
                            TraceMetric::MseToTruth(star) => {
                                diagnostics::mse_to_truth(&estimate, star)?
                            }
                        };
                        records.push((state.n, value));
                    }
                }

                if let Some(prev) = &prev_estimate {
                    let mut diff2 = 0.0;
                    let mut norm2 = 0.0;
                    for j in 0..estimate.len() {
                        let d = estimate[j] - prev[j];
                        diff2 += d * d;
                        norm2 += estimate[j] * estimate[j];
                    }
                    let rel = diff2.sqrt() / norm2.sqrt().max(1.0);
                    if recent_changes.len() == cfg.convergence_window {
                        recent_changes.pop_front();
                    }
                    recent_changes.push_back(rel);
                    converged = recent_changes.len() == cfg.convergence_window
                        && recent_changes.iter().all(|&c| c < report_tol);
                }
                prev_estimate = Some(estimate);

                if converged && cfg.stop_tolerance.is_some() {
                    break 'passes;
                }
            }
        }
    }

    let state = state.ok_or_else(|| Error::InvalidInput("empty data stream".into()))?;
    let estimate = if cfg.method.averaged() {
        state.theta_bar()
    } else {
        state.theta.clone()
    };
    Ok(FitResult {
        estimate,
        last_iterate: state.theta,
        updates: state.n,
        converged,
        trace,
    })
}
