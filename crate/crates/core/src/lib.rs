//! Streaming estimation for generalized linear models and M-estimators.
//!
//! The central recursion is stochastic gradient descent over single
//! observations, in four flavors: explicit updates, implicit (proximal)
//! updates solved exactly through a one-dimensional fixed point, and either
//! of those combined with running-average output. Implicit updates shrink
//! the explicit step and stay numerically stable for learning rates that
//! make explicit SGD diverge, while iterate averaging restores statistical
//! efficiency at larger rates.
//!
//! The pieces:
//!
//! * [`model`] — objective specifications (Gaussian / binomial / Poisson
//!   GLMs, Huber and custom M-estimation losses) exposing the scalar
//!   derivative with respect to the natural parameter, plus elastic-net
//!   penalties;
//! * [`solver`] — the exact implicit update via a bracketed scalar
//!   root-find;
//! * [`schedule`] — one-dimensional decaying learning rates and diagonal
//!   adaptive conditioners (AdaGrad, RMSProp, Fisher);
//! * [`optimizer`] — the six fitting methods and the pass-based fit loop;
//! * [`data`] — chunked streaming from delimited files and the two
//!   simulation benchmarks;
//! * [`diagnostics`] — prediction, error metrics, convergence detection.
//!
//! ```
//! use streamfit::data::{simulate_lasso, StreamSource};
//! use streamfit::schedule::OneDimSchedule;
//! use streamfit::solver::ImplicitConfig;
//! use streamfit::{fit, FitConfig, Method, Objective, Penalty, Schedule};
//!
//! # fn main() -> streamfit::Result<()> {
//! let sim = simulate_lasso(500, 10, 0.3, 3.0, 7)?;
//! let source = StreamSource::memory(sim.observations.clone());
//! let schedule = Schedule::OneDim(OneDimSchedule::new(1.0, 1.0, 2.0 / 3.0)?);
//! let mut cfg = FitConfig::new(Method::AiSgd);
//! cfg.passes = 5;
//! let result = fit(
//!     &source,
//!     &Objective::GlmGaussian,
//!     schedule,
//!     &Penalty::new(1.0, 0.01)?,
//!     &cfg,
//!     &ImplicitConfig::default(),
//! )?;
//! assert_eq!(result.updates, 2500);
//! assert!(result.estimate.iter().all(|v| v.is_finite()));
//! # Ok(())
//! # }
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Objective, Observation, Penalty};
pub use optimizer::{fit, FitConfig, FitResult, Method};
pub use schedule::{AdaptiveKind, AdaptiveState, Conditioner, OneDimSchedule, Schedule};
pub use solver::ImplicitConfig;
