//! Objective specifications and penalties.
//!
//! Every supported model interacts with the optimizer through a single
//! scalar hook: the derivative of its log-likelihood (or negative loss)
//! with respect to the natural parameter `eta = x . theta`. That derivative
//! is nonincreasing in `eta` for fixed `y`, which is what guarantees the
//! implicit update has a unique fixed point.

use std::fmt;
use std::sync::Arc;

use ndarray::Array1;

use crate::error::{Error, Result};

/// `exp(eta)` is evaluated through a cap at this natural parameter so a
/// single extreme draw yields a huge-but-finite derivative instead of
/// infinity. `exp(700)` is ~1.01e304, still inside f64 range.
pub const EXP_SATURATION_ETA: f64 = 700.0;

/// One streamed data point: covariates plus scalar outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Array1<f64>,
    pub y: f64,
}

impl Observation {
    /// Builds an observation, rejecting non-finite entries.
    pub fn new(x: Array1<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite outcome {y}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite covariate entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Checks family-specific outcome constraints (binomial outcomes must
    /// be 0 or 1).
    pub fn validate_for(&self, objective: &Objective) -> Result<()> {
        if matches!(objective, Objective::GlmBinomial) && self.y != 0.0 && self.y != 1.0 {
            return Err(Error::InvalidInput(format!(
                "binomial outcome must be 0 or 1, got {}",
                self.y
            )));
        }
        Ok(())
    }
}

/// A user-supplied M-estimation loss, given through the derivative `rho'`
/// of a convex `rho`. The derivative must be nondecreasing; that is sampled
/// by the solver's bracket check rather than proven.
#[derive(Clone)]
pub struct CustomLoss {
    derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CustomLoss {
    pub fn new(derivative: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            derivative: Arc::new(derivative),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.derivative)(z)
    }
}

impl fmt::Debug for CustomLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomLoss(..)")
    }
}

/// The objective being estimated. GLM kinds supply the transfer function
/// `h` of their canonical link; M-estimation kinds supply the loss
/// derivative `rho'`. The exponential-family dispersion is fixed to one
/// throughout: under canonical links it only rescales the score, so the
/// estimate of `theta` does not depend on it.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Linear regression; identity link.
    GlmGaussian,
    /// Logistic regression; outcomes in {0, 1}.
    GlmBinomial,
    /// Poisson regression; log link.
    GlmPoisson,
    /// Huber loss with threshold `delta`; quadratic near zero, linear tails.
    MEstHuber { delta: f64 },
    /// Arbitrary M-estimation loss given by its derivative.
    MEstCustom(CustomLoss),
}

impl Objective {
    pub fn huber(delta: f64) -> Result<Self> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "huber delta must be positive and finite, got {delta}"
            )));
        }
        Ok(Self::MEstHuber { delta })
    }

    pub fn custom(derivative: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::MEstCustom(CustomLoss::new(derivative))
    }

    pub fn is_glm(&self) -> bool {
        matches!(
            self,
            Objective::GlmGaussian | Objective::GlmBinomial | Objective::GlmPoisson
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Objective::GlmGaussian => "gaussian",
            Objective::GlmBinomial => "binomial",
            Objective::GlmPoisson => "poisson",
            Objective::MEstHuber { .. } => "huber",
            Objective::MEstCustom(_) => "custom",
        }
    }

    /// Derivative of the log-likelihood in the natural parameter:
    /// `y - h(eta)` for GLM kinds, `rho'(y - eta)` for M-estimation kinds.
    /// Nonincreasing in `eta` for every fixed `y`.
    ///
    /// A Poisson evaluation past the exponential range reports
    /// [`Error::NumericOverflow`] carrying the saturated value, so callers
    /// can decide whether the run survives.
    pub fn lprime(&self, eta: f64, y: f64) -> Result<f64> {
        if !eta.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lprime needs finite arguments, got eta={eta}, y={y}"
            )));
        }
        match self {
            Objective::GlmPoisson if eta > EXP_SATURATION_ETA => Err(Error::NumericOverflow {
                eta,
                saturated: y - EXP_SATURATION_ETA.exp(),
            }),
            Objective::MEstHuber { delta } if !delta.is_finite() || *delta <= 0.0 => Err(
                Error::InvalidInput(format!("huber delta must be positive, got {delta}")),
            ),
            _ => Ok(self.lprime_saturating(eta, y)),
        }
    }

    /// Same derivative with the Poisson exponential silently capped; this
    /// is what the root-finder evaluates so a saturated endpoint stays
    /// finite and the bracket logic keeps working.
    pub fn lprime_saturating(&self, eta: f64, y: f64) -> f64 {
        match self {
            Objective::GlmGaussian => y - eta,
            Objective::GlmBinomial => y - sigmoid(eta),
            Objective::GlmPoisson => y - eta.min(EXP_SATURATION_ETA).exp(),
            Objective::MEstHuber { delta } => huber_derivative(y - eta, *delta),
            Objective::MEstCustom(loss) => loss.eval(y - eta),
        }
    }

    /// GLM transfer function `h` (the derivative of the log normalizer):
    /// identity, sigmoid, or exp. Errs on M-estimation kinds, which have no
    /// mean function.
    pub fn transfer(&self, eta: f64) -> Result<f64> {
        match self {
            Objective::GlmGaussian => Ok(eta),
            Objective::GlmBinomial => Ok(sigmoid(eta)),
            Objective::GlmPoisson => Ok(eta.min(EXP_SATURATION_ETA).exp()),
            other => Err(Error::Unsupported(format!(
                "transfer function is undefined for {} objectives",
                other.name()
            ))),
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn huber_derivative(z: f64, delta: f64) -> f64 {
    if z.abs() <= delta {
        z
    } else {
        delta * z.signum()
    }
}

/// Elastic-net penalty: mixing weight `alpha` between ridge (0) and lasso
/// (1), overall strength `lambda`. `lambda = 0` means no penalty and makes
/// every penalized operation reduce exactly to its unpenalized form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub alpha: f64,
    pub lambda: f64,
}

impl Penalty {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "elastic-net alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "penalty strength must be nonnegative, got {lambda}"
            )));
        }
        Ok(Self { alpha, lambda })
    }

    /// No penalty at all.
    pub fn none() -> Self {
        Self {
            alpha: 0.0,
            lambda: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0
    }

    /// `lambda * ((1 - alpha)/2 * ||theta||_2^2 + alpha * ||theta||_1)`.
    pub fn value(&self, theta: &Array1<f64>) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let l2: f64 = theta.iter().map(|t| t * t).sum();
        let l1: f64 = theta.iter().map(|t| t.abs()).sum();
        self.lambda * ((1.0 - self.alpha) * 0.5 * l2 + self.alpha * l1)
    }

    /// `lambda * ((1 - alpha) * theta + alpha * sign(theta))`, with
    /// `sign(0) = 0` as the subgradient choice at the kink.
    pub fn gradient(&self, theta: &Array1<f64>) -> Array1<f64> {
        theta.mapv(|t| self.gradient_entry(t))
    }

    /// Single coordinate of the penalty gradient.
    pub fn gradient_entry(&self, t: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let sign = if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.lambda * ((1.0 - self.alpha) * t + self.alpha * sign)
    }
}
