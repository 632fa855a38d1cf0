//! Learning-rate schedules and diagonal conditioners.
//!
//! Two families: a one-dimensional decaying rate with identity
//! conditioning, and adaptive schedules (AdaGrad, RMSProp, Fisher) that
//! fold every magnitude into a diagonal conditioning matrix and report a
//! unit learning rate. The effective step is always `gamma * C`, so that
//! split is purely internal bookkeeping.
//!
//! Adaptive conditioners accumulate squared entries of the likelihood
//! gradient evaluated at the previous iterate (the explicit-side gradient),
//! even when they drive implicit updates.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Diagonal conditioning matrix. The identity case is kept symbolic so the
/// common unconditioned path does not allocate a vector per update.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioner {
    Identity,
    Diagonal(Array1<f64>),
}

impl Conditioner {
    /// `x' C x`.
    pub fn quadratic_form(&self, x: &Array1<f64>) -> f64 {
        match self {
            Conditioner::Identity => x.dot(x),
            Conditioner::Diagonal(d) => x.iter().zip(d.iter()).map(|(xi, di)| xi * xi * di).sum(),
        }
    }

    /// `a' C b`.
    pub fn weighted_dot(&self, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        match self {
            Conditioner::Identity => a.dot(b),
            Conditioner::Diagonal(d) => a
                .iter()
                .zip(b.iter())
                .zip(d.iter())
                .map(|((ai, bi), di)| ai * bi * di)
                .sum(),
        }
    }

    /// The `j`-th diagonal entry.
    pub fn entry(&self, j: usize) -> f64 {
        match self {
            Conditioner::Identity => 1.0,
            Conditioner::Diagonal(d) => d[j],
        }
    }
}

/// Decaying rate `gamma_n = gamma0 * (1 + a * gamma0 * n)^(-c)`.
///
/// `c = 1` is the statistically efficient choice for unaveraged methods and
/// `c = 2/3` for averaged ones; `n * gamma_n -> 1/a`, so `a` sets the
/// asymptotic learning-rate parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneDimSchedule {
    pub gamma0: f64,
    pub a: f64,
    pub c: f64,
}

impl OneDimSchedule {
    pub fn new(gamma0: f64, a: f64, c: f64) -> Result<Self> {
        if gamma0 <= 0.0 || !gamma0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma0 must be positive, got {gamma0}"
            )));
        }
        if a <= 0.0 || !a.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "decay constant a must be positive, got {a}"
            )));
        }
        if c.is_nan() || c <= 0.0 || c > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "decay exponent c must lie in (0, 1], got {c}"
            )));
        }
        Ok(Self { gamma0, a, c })
    }

    /// Default exponent for a method: 2/3 when iterates are averaged,
    /// 1 otherwise.
    pub fn default_for(gamma0: f64, a: f64, averaged: bool) -> Result<Self> {
        Self::new(gamma0, a, if averaged { 2.0 / 3.0 } else { 1.0 })
    }

    /// Rate at update `n` (1-based); `n = 0` returns `gamma0` by the
    /// initialization convention.
    pub fn rate(&self, n: u64) -> f64 {
        self.gamma0 * (1.0 + self.a * self.gamma0 * n as f64).powf(-self.c)
    }
}

/// Which adaptive conditioner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveKind {
    /// Cumulative squared gradients; `C = eta * (acc + eps)^(-1/2)`.
    AdaGrad,
    /// Discounted squared gradients; `C = eta * (acc + eps)^(-1/2)`.
    RmsProp,
    /// Running mean of squared gradients, an unbiased diagonal Fisher
    /// estimate; `C = (acc + eps)^(-1)`.
    Fisher,
}

/// State of an adaptive schedule: the accumulated diagonal curvature plus
/// the constants that turn it into a conditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    pub kind: AdaptiveKind,
    /// Scale constant for AdaGrad/RMSProp conditioners (the Fisher
    /// conditioner has no scale constant).
    pub eta: f64,
    /// Additive guard against division by zero.
    pub epsilon: f64,
    /// RMSProp discount factor.
    pub beta: f64,
    /// Diagonal curvature accumulator; meaning depends on `kind`.
    pub accumulator: Array1<f64>,
    /// Steps taken.
    pub n: u64,
}

impl AdaptiveState {
    /// Fresh state with the usual constants: `eta = 1`, `eps = 1e-6`,
    /// `beta = 0.9`, zero accumulator.
    pub fn new(kind: AdaptiveKind, dim: usize) -> Self {
        Self {
            kind,
            eta: 1.0,
            epsilon: 1e-6,
            beta: 0.9,
            accumulator: Array1::zeros(dim),
            n: 0,
        }
    }

    pub fn with_params(
        kind: AdaptiveKind,
        dim: usize,
        eta: f64,
        epsilon: f64,
        beta: f64,
    ) -> Result<Self> {
        if eta <= 0.0 || !eta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "adaptive scale eta must be positive, got {eta}"
            )));
        }
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidConfig(format!(
                "rmsprop discount beta must lie in [0, 1], got {beta}"
            )));
        }
        Ok(Self {
            kind,
            eta,
            epsilon,
            beta,
            accumulator: Array1::zeros(dim),
            n: 0,
        })
    }

    /// Dispatches on `kind`; returns the unit rate and the new conditioner.
    pub fn step(&mut self, gradient: &Array1<f64>) -> Result<(f64, Conditioner)> {
        match self.kind {
            AdaptiveKind::AdaGrad => self.adagrad_step(gradient),
            AdaptiveKind::RmsProp => self.rmsprop_step(gradient),
            AdaptiveKind::Fisher => self.fisher_step(gradient),
        }
    }

    /// `acc += g^2`, `C = eta * (acc + eps)^(-1/2)`.
    pub fn adagrad_step(&mut self, gradient: &Array1<f64>) -> Result<(f64, Conditioner)> {
        self.check_gradient(gradient)?;
        self.n += 1;
        for (a, g) in self.accumulator.iter_mut().zip(gradient.iter()) {
            *a += g * g;
        }
        Ok((1.0, self.sqrt_inverse_conditioner()))
    }

    /// `acc = beta * acc + (1 - beta) * g^2`, same conditioner shape as
    /// AdaGrad.
    pub fn rmsprop_step(&mut self, gradient: &Array1<f64>) -> Result<(f64, Conditioner)> {
        self.check_gradient(gradient)?;
        self.n += 1;
        for (a, g) in self.accumulator.iter_mut().zip(gradient.iter()) {
            *a = self.beta * *a + (1.0 - self.beta) * g * g;
        }
        Ok((1.0, self.sqrt_inverse_conditioner()))
    }

    /// Running mean of `g^2` with weight `1/n` (so the accumulator is the
    /// exact mean of all squared gradients seen), `C = (acc + eps)^(-1)`.
    pub fn fisher_step(&mut self, gradient: &Array1<f64>) -> Result<(f64, Conditioner)> {
        self.check_gradient(gradient)?;
        self.n += 1;
        let w = 1.0 / self.n as f64;
        for (a, g) in self.accumulator.iter_mut().zip(gradient.iter()) {
            *a += (g * g - *a) * w;
        }
        let cond = self.accumulator.mapv(|a| 1.0 / (a + self.epsilon));
        Ok((1.0, Conditioner::Diagonal(cond)))
    }

    fn sqrt_inverse_conditioner(&self) -> Conditioner {
        Conditioner::Diagonal(
            self.accumulator
                .mapv(|a| self.eta * (a + self.epsilon).powf(-0.5)),
        )
    }

    fn check_gradient(&mut self, gradient: &Array1<f64>) -> Result<()> {
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite gradient passed to adaptive schedule".into(),
            ));
        }
        // A state built with dim 0 sizes itself on first use.
        if self.accumulator.is_empty() && self.n == 0 {
            self.accumulator = Array1::zeros(gradient.len());
        }
        if gradient.len() != self.accumulator.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has length {}, accumulator {}",
                gradient.len(),
                self.accumulator.len()
            )));
        }
        Ok(())
    }
}

/// A complete per-update rate/conditioner source for the fit loop.
#[derive(Debug, Clone)]
pub enum Schedule {
    OneDim(OneDimSchedule),
    Adaptive(AdaptiveState),
}

impl Schedule {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Schedule::Adaptive(_))
    }

    /// Rate and conditioner for update `n` (1-based). The explicit-side
    /// likelihood gradient is only materialized when an adaptive schedule
    /// actually needs it.
    pub fn next(
        &mut self,
        n: u64,
        gradient: impl FnOnce() -> Array1<f64>,
    ) -> Result<(f64, Conditioner)> {
        match self {
            Schedule::OneDim(s) => Ok((s.rate(n), Conditioner::Identity)),
            Schedule::Adaptive(state) => state.step(&gradient()),
        }
    }
}
