//! The repetitive-action estimator.
//!
//! Repeating one action long enough drives the true-state distribution to the
//! stationary distribution of that action's transition matrix, which freezes
//! the observed-state transition matrix in time and makes it estimable from
//! consecutive observation pairs. The candidate confusion matrix is then
//! found by minimizing the quadratic consistency loss across actions
//! ([`minimize_loss`]), in closed form for two states ([`solve_two_state`]),
//! or through superstate partitions for symmetric matrices of any size
//! ([`estimate_by_partitions`]).

mod loss;
mod optimizer;
mod partition;
mod two_state;

pub use loss::{loss_and_gradient, loss_single, loss_total, ActionObservations, LossData};
pub use optimizer::{minimize_loss, softmax_rows, MinimizeOptions};
pub use partition::{estimate_by_partitions, PartitionConfig, PartitionDiagnostic, PartitionInput};
pub use two_state::{intersect_solutions, solve_two_state, spurious_solution, TwoStateSolutionSet};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::identifiability::IdentifiabilityReport;
use crate::mdp::{second_eigenvalue_modulus, ConfusionMatrix, Mdp, StateDistribution};
use crate::scalar::Scalar;
use crate::sim::{derive_seed, empirical_observed_transition, simulate, ActionSource};

/// Configuration of the data-collection protocol: which actions to repeat,
/// how long, and how much burn-in to discard.
#[derive(Debug, Clone)]
pub struct RepetitiveProtocolConfig {
    /// Actions to repeat (the estimation subset A₀).
    pub actions: Vec<usize>,
    /// Steps discarded at the start of each action block; `None` derives a
    /// default from the chain's mixing rate.
    pub burn_in: Option<usize>,
    /// Counted transitions per action block.
    pub steps_per_action: usize,
    /// Base seed; each action block gets an independent derived stream.
    pub seed: u64,
}

/// One candidate confusion matrix with its residual loss.
#[derive(Debug, Clone)]
pub struct Candidate<T: Scalar> {
    pub matrix: ConfusionMatrix<T>,
    pub residual: T,
    /// Whether the residual clears the feasibility threshold.
    pub feasible: bool,
}

/// Diagnostics attached to an estimation result.
#[derive(Debug, Clone)]
pub struct EstimationDiagnostics<T: Scalar> {
    /// Loss of the best candidate per action.
    pub per_action_loss: BTreeMap<usize, T>,
    /// Stationary-distribution identifiability report, when computed.
    pub identifiability: Option<IdentifiabilityReport>,
    /// Per-partition details (partition estimator only).
    pub partitions: Vec<PartitionDiagnostic<T>>,
}

/// Result of an estimation run: candidates sorted by residual, the selected
/// index when exactly one candidate is feasible, and diagnostics.
#[derive(Debug, Clone)]
pub struct EstimationResult<T: Scalar> {
    pub candidates: Vec<Candidate<T>>,
    pub selected: Option<usize>,
    pub diagnostics: EstimationDiagnostics<T>,
}

impl<T: Scalar> EstimationResult<T> {
    /// The matrix to report: the selected candidate, or the best-residual one.
    pub fn best(&self) -> &ConfusionMatrix<T> {
        let idx = self.selected.unwrap_or(0);
        &self.candidates[idx].matrix
    }
}

/// Default burn-in from the mixing rate: `ceil(ln(1/1e-3) / (1 − λ₂))` when
/// the second eigenvalue modulus `λ₂ < 1` is computable, else a flat 1000
/// (periodic chains still average correctly over time).
pub fn default_burn_in<T: Scalar>(p: &ndarray::Array2<T>, pi: &StateDistribution<T>) -> usize {
    match second_eigenvalue_modulus(p, pi) {
        Some(rho) if rho < 1.0 => {
            let steps = ((1e3f64).ln() / (1.0 - rho)).ceil();
            (steps as usize).clamp(1, 100_000)
        }
        _ => 1000,
    }
}

/// Run the data-collection protocol: repeat each action in `cfg.actions` for
/// `burn_in + steps_per_action` transitions from a uniform start and estimate
/// that action's observed-transition matrix over the post-burn-in window.
/// Stationary distributions come from the known model, not from data.
pub fn run_protocol<T: Scalar>(
    mdp: &Mdp<T>,
    c_true: &ConfusionMatrix<T>,
    cfg: &RepetitiveProtocolConfig,
) -> Result<LossData<T>> {
    if cfg.actions.is_empty() {
        return Err(Error::InvalidParameter(
            "the protocol needs at least one action".into(),
        ));
    }
    if cfg.steps_per_action == 0 {
        return Err(Error::InvalidParameter(
            "steps_per_action must be at least 1".into(),
        ));
    }
    let mut data = LossData::new();
    let initial = StateDistribution::uniform(mdp.states());
    for (block, &action) in cfg.actions.iter().enumerate() {
        let p = mdp.transition(action)?;
        let pi = mdp.stationary(action)?;
        let burn_in = cfg.burn_in.unwrap_or_else(|| default_burn_in(p, &pi));
        let total = burn_in + cfg.steps_per_action;
        let traj = simulate(
            mdp,
            c_true,
            &ActionSource::Repeat(action),
            total,
            &initial,
            derive_seed(cfg.seed, block as u64),
        )?;
        let q_hat = empirical_observed_transition(&traj, action, burn_in..total);
        for i in 0..mdp.states() {
            if !q_hat.is_row_defined(i) {
                log::warn!(
                    "action {action}: observed state {i} never visited in the counting window"
                );
            }
        }
        data.insert(
            action,
            ActionObservations {
                stationary: pi,
                transition: p.clone(),
                q_hat,
            },
        );
    }
    Ok(data)
}

/// Exact-data variant of the protocol: the observed-transition matrices come
/// from the closed-form identity instead of simulation.
pub fn exact_protocol_data<T: Scalar>(
    mdp: &Mdp<T>,
    c_true: &ConfusionMatrix<T>,
    actions: &[usize],
) -> Result<LossData<T>> {
    let mut data = LossData::new();
    for &action in actions {
        let p = mdp.transition(action)?;
        let pi = mdp.stationary(action)?;
        let q = crate::mdp::exact_observed_transition(c_true, &pi, p)?;
        data.insert(
            action,
            ActionObservations {
                stationary: pi,
                transition: p.clone(),
                q_hat: q,
            },
        );
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn default_burn_in_uses_the_mixing_rate() {
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let pi = crate::mdp::stationary_distribution(&p).unwrap();
        // lambda_2 = 0.4: ceil(ln(1000)/0.6) = 12
        assert_eq!(default_burn_in(&p, &pi), 12);

        let periodic = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let pi = crate::mdp::stationary_distribution(&periodic).unwrap();
        assert_eq!(default_burn_in(&periodic, &pi), 1000);
    }

    #[test]
    fn single_step_blocks_leave_rows_undefined() {
        let mdp = Mdp::new(vec![arr2(&[[0.3, 0.7], [0.7, 0.3]])]).unwrap();
        let c = ConfusionMatrix::identity(2);
        let cfg = RepetitiveProtocolConfig {
            actions: vec![0],
            burn_in: Some(0),
            steps_per_action: 1,
            seed: 3,
        };
        let data = run_protocol(&mdp, &c, &cfg).unwrap();
        let q = &data[&0].q_hat;
        let defined: usize = (0..2).filter(|&i| q.is_row_defined(i)).count();
        assert_eq!(defined, 1, "one transition defines exactly one row");
    }

    #[test]
    fn noiseless_protocol_estimates_converge_to_the_transition_rows() {
        let p = arr2(&[[0.3f64, 0.7], [0.7, 0.3]]);
        let mdp = Mdp::new(vec![p.clone()]).unwrap();
        let c = ConfusionMatrix::identity(2);
        let cfg = RepetitiveProtocolConfig {
            actions: vec![0],
            burn_in: None,
            steps_per_action: 100_000,
            seed: 12,
        };
        let data = run_protocol(&mdp, &c, &cfg).unwrap();
        let q = data[&0].q_hat.entries();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (q[[i, j]] - p[[i, j]]).abs() <= 0.02,
                    "entry ({i},{j}) off by more than the sampling band"
                );
            }
        }
    }
}
