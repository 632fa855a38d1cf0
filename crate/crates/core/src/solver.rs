//! Exact implicit (proximal) updates via a one-dimensional fixed point.
//!
//! For objectives that depend on `theta` only through `eta = x . theta`,
//! the gradient at the *next* iterate is a scalar multiple of the gradient
//! at the previous one, so the whole implicit update reduces to solving
//!
//! ```text
//! xi = gamma * l'(eta0 + d + xi * q; y),   q = x'Cx >= 0,
//! ```
//!
//! where `d` shifts the natural parameter by the (previous-iterate) penalty
//! pullback and `xi = gamma * s * kappa` is the scaled gradient. Because
//! `l'` is nonincreasing in `eta`, the map above is a decreasing function
//! of `xi`, the root is unique, and it lies between `0` and
//! `r = gamma * l'(eta0 + d; y)`. Bisection on that bracket is
//! derivative-free and unconditionally convergent.
//!
//! The bracket endpoint uses the penalty-shifted value `r` rather than the
//! unshifted `gamma * kappa`: with a nonzero penalty the fixed point is
//! pinned between `0` and the shifted value by the decreasing-map argument,
//! which is not true of the unshifted one. The two coincide when the
//! penalty strength is zero.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::model::{Objective, Observation, Penalty};
use crate::schedule::Conditioner;

/// Tunables for the scalar root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitConfig {
    /// Accuracy on the solved `xi`.
    pub root_tolerance: f64,
    /// Bisection iteration budget.
    pub max_root_iterations: usize,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self {
            root_tolerance: 1e-10,
            max_root_iterations: 200,
        }
    }
}

impl ImplicitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.root_tolerance <= 0.0 || !self.root_tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "root tolerance must be positive, got {}",
                self.root_tolerance
            )));
        }
        if self.max_root_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max root iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Output of the fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledGradientResult {
    /// Solved value `xi = gamma * s * kappa`.
    pub xi: f64,
    /// Scale factor `s`; in `[0, 1]` whenever the penalty is zero and
    /// `kappa != 0`, and `0` by convention when `kappa = 0`.
    pub scale: f64,
    /// Natural parameter at the previous iterate.
    pub eta_prev: f64,
    /// Gradient derivative at the previous iterate,
    /// `l'(eta_prev; y)`.
    pub kappa_prev: f64,
}

/// Search bounds for the fixed point: `[0, r]` when `r >= 0`, `[r, 0]`
/// otherwise. `r = 0` collapses to the degenerate bracket and the solver
/// returns `xi = 0` without iterating.
pub fn search_bracket(r_shifted: f64) -> Result<(f64, f64)> {
    if !r_shifted.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bracket endpoint must be finite, got {r_shifted}"
        )));
    }
    if r_shifted >= 0.0 {
        Ok((0.0, r_shifted))
    } else {
        Ok((r_shifted, 0.0))
    }
}

// Saturated Poisson endpoints can put the bracket at ~1e300; halve toward
// zero (keeping the root bracketed) before spending the iteration budget.
const PULL_IN_LIMIT: usize = 1200;
// Doublings attempted when the far endpoint shows no sign change, which
// only happens for a non-monotone custom derivative.
const WIDEN_LIMIT: usize = 64;

/// Solves the fixed point for one observation and returns the scaled
/// gradient. `cond_diag` entries must be positive; `gamma` strictly so.
pub fn solve_scale(
    spec: &Objective,
    gamma: f64,
    theta_prev: &Array1<f64>,
    obs: &Observation,
    cond_diag: &Conditioner,
    pen: &Penalty,
    cfg: &ImplicitConfig,
) -> Result<ScaledGradientResult> {
    cfg.validate()?;
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive and finite, got {gamma}"
        )));
    }
    if theta_prev.len() != obs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "iterate has length {}, observation {}",
            theta_prev.len(),
            obs.dim()
        )));
    }

    let eta_prev = obs.x.dot(theta_prev);
    if !eta_prev.is_finite() {
        return Err(Error::InvalidInput(format!(
            "natural parameter overflowed: x . theta = {eta_prev}"
        )));
    }
    let kappa_prev = spec.lprime_saturating(eta_prev, obs.y);

    // kappa = 0 means a zero likelihood gradient; skip the root-find so the
    // scale 0/0 never materializes and only the penalty step remains.
    if kappa_prev == 0.0 {
        return Ok(ScaledGradientResult {
            xi: 0.0,
            scale: 0.0,
            eta_prev,
            kappa_prev,
        });
    }

    let shift = penalty_shift(gamma, theta_prev, obs, cond_diag, pen);
    let q = cond_diag.quadratic_form(&obs.x);
    let fixed_point_rhs =
        |xi: f64| gamma * spec.lprime_saturating(eta_prev + shift + xi * q, obs.y);

    let r_shifted = fixed_point_rhs(0.0);
    let finish = |xi: f64| {
        let scale = xi / (gamma * kappa_prev);
        Ok(ScaledGradientResult {
            xi,
            scale,
            eta_prev,
            kappa_prev,
        })
    };

    if r_shifted == 0.0 {
        return finish(0.0);
    }
    // q = 0 (for example x = 0) makes the equation constant in xi.
    if q == 0.0 {
        return finish(r_shifted);
    }

    // Residual of the fixed-point equation; strictly decreasing in xi with
    // slope at most -1, so |residual| bounds the distance to the root.
    let f = |xi: f64| fixed_point_rhs(xi) - xi;

    let (mut lo, mut hi) = search_bracket(r_shifted)?;

    // One endpoint is xi = 0 where the residual equals r_shifted by
    // construction; verify the far endpoint, widening if the derivative is
    // not actually monotone.
    if r_shifted > 0.0 {
        let mut widened = 0;
        while f(hi) > 0.0 {
            widened += 1;
            if widened > WIDEN_LIMIT || !hi.is_finite() {
                return Err(Error::SolverFailure { lo, hi });
            }
            hi *= 2.0;
        }
        if !hi.is_finite() {
            return Err(Error::SolverFailure { lo, hi });
        }
        let mut pulls = 0;
        while hi - lo > 1.0 && pulls < PULL_IN_LIMIT {
            let half = hi * 0.5;
            if half <= lo {
                break;
            }
            if f(half) <= 0.0 {
                hi = half;
            } else {
                lo = half;
                break;
            }
            pulls += 1;
        }
    } else {
        let mut widened = 0;
        while f(lo) < 0.0 {
            widened += 1;
            if widened > WIDEN_LIMIT || !lo.is_finite() {
                return Err(Error::SolverFailure { lo, hi });
            }
            lo *= 2.0;
        }
        if !lo.is_finite() {
            return Err(Error::SolverFailure { lo, hi });
        }
        let mut pulls = 0;
        while hi - lo > 1.0 && pulls < PULL_IN_LIMIT {
            let half = lo * 0.5;
            if half >= hi {
                break;
            }
            if f(half) >= 0.0 {
                lo = half;
            } else {
                hi = half;
                break;
            }
            pulls += 1;
        }
    }

    // The residual target is scaled two decades under the configured
    // tolerance; |f| >= |xi - root|, so this pins xi well inside it.
    let target = gamma.min(1.0) * cfg.root_tolerance * 1e-2;
    let mut mid = 0.5 * (lo + hi);
    let mut residual = f(mid);
    for _ in 0..cfg.max_root_iterations {
        if residual.abs() <= target {
            return finish(mid);
        }
        if residual > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        // Float resolution floor: accept if the residual meets the loose
        // tolerance, otherwise let the budget run out and report failure.
        if hi - lo <= f64::EPSILON * (lo.abs().max(hi.abs()) + 1.0)
            && residual.abs() <= cfg.root_tolerance * gamma.max(1.0)
        {
            return finish(mid);
        }
        mid = 0.5 * (lo + hi);
        residual = f(mid);
    }
    if residual.abs() <= target {
        return finish(mid);
    }
    Err(Error::ConvergenceFailure {
        iterations: cfg.max_root_iterations,
        best_xi: mid,
        residual,
    })
}

/// Full implicit update: `theta + C (xi * x - gamma * grad_penalty)`, where
/// the penalty gradient is taken at the previous iterate.
pub fn implicit_update(
    spec: &Objective,
    gamma: f64,
    theta_prev: &Array1<f64>,
    obs: &Observation,
    cond_diag: &Conditioner,
    pen: &Penalty,
    cfg: &ImplicitConfig,
) -> Result<Array1<f64>> {
    let solved = solve_scale(spec, gamma, theta_prev, obs, cond_diag, pen, cfg)?;
    let mut theta = theta_prev.clone();
    apply_scaled_step(&mut theta, solved.xi, gamma, obs, cond_diag, pen);
    Ok(theta)
}

/// Applies `theta += C (xi * x - gamma * grad_penalty(theta))` in place.
pub(crate) fn apply_scaled_step(
    theta: &mut Array1<f64>,
    xi: f64,
    gamma: f64,
    obs: &Observation,
    cond_diag: &Conditioner,
    pen: &Penalty,
) {
    if pen.is_zero() {
        for (j, t) in theta.iter_mut().enumerate() {
            *t += cond_diag.entry(j) * xi * obs.x[j];
        }
    } else {
        for (j, t) in theta.iter_mut().enumerate() {
            let gp = pen.gradient_entry(*t);
            *t += cond_diag.entry(j) * (xi * obs.x[j] - gamma * gp);
        }
    }
}

/// `d = -gamma * x' C grad_penalty(theta_prev)`, the natural-parameter
/// shift induced by penalizing the previous iterate.
fn penalty_shift(
    gamma: f64,
    theta_prev: &Array1<f64>,
    obs: &Observation,
    cond_diag: &Conditioner,
    pen: &Penalty,
) -> f64 {
    if pen.is_zero() {
        return 0.0;
    }
    let grad = pen.gradient(theta_prev);
    -gamma * cond_diag.weighted_dot(&obs.x, &grad)
}
