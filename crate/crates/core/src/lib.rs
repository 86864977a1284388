//! Estimation of state-observation confusion matrices in MDPs.
//!
//! An agent sees its state through a noisy channel: when the true state is
//! `i`, state `j` is reported with probability `C[i][j]`. The transition
//! model is known; the confusion matrix `C` is not. This crate estimates `C`
//! from observed trajectories:
//!
//! * [`repetitive`] — repeat one action until the chain is stationary, count
//!   consecutive observation pairs, and solve the resulting quadratic matrix
//!   equation (numerically for any `n`, in closed form for `n = 2`, and via
//!   superstate partitions for symmetric `C`);
//! * [`bayes`] — first- and second-order Bayesian recursions over a fixed
//!   weighted ensemble of candidate matrices;
//! * [`identifiability`] — checks telling when those estimates are unique:
//!   the actions' stationary distributions must differ, subset by subset;
//! * [`harness`] — scenario files, experiment orchestration, and
//!   deterministic CSV/JSON artifacts.
//!
//! All numerics are generic over the scalar type ([`scalar::Scalar`], i.e.
//! `f32` or `f64`); the aliases below fix `f64` for everyday use.

pub mod bayes;
pub mod error;
pub mod harness;
pub mod identifiability;
pub mod mdp;
pub mod repetitive;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` MDP.
pub type Mdp64 = mdp::Mdp<f64>;
/// `f64` confusion matrix.
pub type ConfusionMatrix64 = mdp::ConfusionMatrix<f64>;
/// `f64` state distribution.
pub type StateDistribution64 = mdp::StateDistribution<f64>;
/// `f64` observed-transition matrix.
pub type ObservedTransitionMatrix64 = mdp::ObservedTransitionMatrix<f64>;
/// `f64` posterior ensemble.
pub type Posterior64 = bayes::PosteriorOverC<f64>;

/// `f32` MDP.
pub type Mdp32 = mdp::Mdp<f32>;
/// `f32` confusion matrix.
pub type ConfusionMatrix32 = mdp::ConfusionMatrix<f32>;
