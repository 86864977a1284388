//! Quadratic consistency loss between a candidate confusion matrix and
//! observed transition data.
//!
//! For one action the residual is `R(C) = Cᵀ diag(π) P C − diag(Cᵀπ) Q̂` and
//! the loss its squared Frobenius norm; rows of `Q̂` that were never visited
//! are masked out. The multi-action loss averages per-action losses.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::mdp::{ConfusionMatrix, ObservedTransitionMatrix, StateDistribution};
use crate::scalar::{cast, Scalar};

/// Per-action inputs of the estimation losses: exact stationary distribution,
/// transition matrix, and the (empirical or exact) observed-transition matrix.
#[derive(Debug, Clone)]
pub struct ActionObservations<T: Scalar> {
    pub stationary: StateDistribution<T>,
    pub transition: Array2<T>,
    pub q_hat: ObservedTransitionMatrix<T>,
}

/// Estimation data keyed by action index.
pub type LossData<T> = BTreeMap<usize, ActionObservations<T>>;

fn residual<T: Scalar>(
    c: &Array2<T>,
    pi: &StateDistribution<T>,
    p: &Array2<T>,
    q_hat: &ObservedTransitionMatrix<T>,
) -> Array2<T> {
    let weighted = pi.probs().clone().insert_axis(Axis(1)) * p;
    let lhs = c.t().dot(&weighted).dot(c);
    let reach = c.t().dot(pi.probs());
    let mut r = lhs;
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            r[[i, j]] -= reach[i] * q_hat.entries()[[i, j]];
        }
    }
    for i in 0..r.nrows() {
        if !q_hat.is_row_defined(i) {
            r.row_mut(i).fill(T::zero());
        }
    }
    r
}

/// Squared Frobenius norm of the single-action residual over defined rows.
/// Zero exactly when the candidate reproduces `Q̂` on those rows.
pub fn loss_single<T: Scalar>(
    candidate: &ConfusionMatrix<T>,
    pi: &StateDistribution<T>,
    p: &Array2<T>,
    q_hat: &ObservedTransitionMatrix<T>,
) -> T {
    let r = residual(candidate.entries(), pi, p, q_hat);
    r.iter().map(|v| *v * *v).sum()
}

/// Average of [`loss_single`] over all actions in `data`.
pub fn loss_total<T: Scalar>(candidate: &ConfusionMatrix<T>, data: &LossData<T>) -> T {
    debug_assert!(!data.is_empty());
    let sum: T = data
        .values()
        .map(|d| loss_single(candidate, &d.stationary, &d.transition, &d.q_hat))
        .sum();
    sum / cast::<T>(data.len() as f64)
}

/// Loss and ambient gradient with respect to the candidate matrix entries
/// (no simplex constraint applied). Used by the optimizer and verified
/// against central finite differences.
pub fn loss_and_gradient<T: Scalar>(candidate: &Array2<T>, data: &LossData<T>) -> (T, Array2<T>) {
    let n = candidate.nrows();
    let mut total = T::zero();
    let mut grad = Array2::<T>::zeros((n, n));
    for d in data.values() {
        let a = d.stationary.probs().clone().insert_axis(Axis(1)) * &d.transition;
        let r = residual(candidate, &d.stationary, &d.transition, &d.q_hat);
        total += r.iter().map(|v| *v * *v).sum();
        let g = r.mapv(|v| v + v);
        // h_i = Σ_j G_ij Q̂_ij (masked rows contribute zero)
        let mut h = Array1::<T>::zeros(n);
        for i in 0..n {
            if d.q_hat.is_row_defined(i) {
                let mut acc = T::zero();
                for j in 0..n {
                    acc += g[[i, j]] * d.q_hat.entries()[[i, j]];
                }
                h[i] = acc;
            }
        }
        let term = a.dot(candidate).dot(&g.t()) + a.t().dot(candidate).dot(&g);
        for i in 0..n {
            for j in 0..n {
                grad[[i, j]] = grad[[i, j]] + term[[i, j]] - d.stationary.probs()[i] * h[j];
            }
        }
    }
    let inv_n = cast::<T>(1.0 / data.len() as f64);
    (total * inv_n, grad * inv_n)
}

/// Dimension consistency check for a loss-data map.
pub fn validate_data<T: Scalar>(data: &LossData<T>) -> Result<usize> {
    let first = data
        .values()
        .next()
        .ok_or_else(|| Error::InvalidParameter("estimation data is empty".into()))?;
    let n = first.stationary.len();
    for d in data.values() {
        if d.stationary.len() != n || d.transition.nrows() != n || d.q_hat.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d.transition.nrows(),
            });
        }
    }
    Ok(n)
}
