//! Partition-based estimation of a symmetric confusion matrix.
//!
//! Every singleton partition `{i}` exposes the diagonal entry `C_ii` through
//! the aggregated two-superstate system; every pair partition `{i, j}` then
//! pins the off-diagonal `C_ij = C_ji`. Per partition the two-state solver
//! runs once per action and the intersection across actions removes the
//! mirrored companion root (possible whenever the superstate masses differ
//! between two actions). The aggregated two-state relation is exact when each
//! block's row-mass profile is flat; otherwise it is the stationary
//! approximation the aggregation defines, which the intersection tolerance
//! must absorb.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::identifiability::{
    aggregate_partition, aggregate_transition, check_subset_condition, reconstruct_symmetric,
    Partition2,
};
use crate::mdp::{
    exact_observed_transition, ConfusionMatrix, Mdp, ObservedTransitionMatrix, StateDistribution,
};
use crate::scalar::{cast, Scalar};
use crate::sim::Trajectory;

use super::two_state::{intersect_solutions, solve_two_state, TwoStateSolutionSet};
use super::{Candidate, EstimationDiagnostics, EstimationResult};

/// Data source of the partition estimator.
#[derive(Debug, Clone, Copy)]
pub enum PartitionInput<'a, T: Scalar> {
    /// Per-action trajectories (each produced by repeating that action);
    /// superstate transitions are counted empirically.
    Trajectories(&'a BTreeMap<usize, Trajectory>),
    /// Oracle mode: aggregated observed transitions are computed exactly from
    /// the true confusion matrix.
    ExactFromTruth(&'a ConfusionMatrix<T>),
}

/// Options of [`estimate_by_partitions`].
#[derive(Debug, Clone)]
pub struct PartitionConfig<T: Scalar> {
    /// Matching radius when intersecting solution points across actions.
    pub intersect_tol: T,
    /// Tolerance of the stationary-mass identifiability check.
    pub identifiability_tol: T,
    /// Abort instead of warn when the identifiability condition fails.
    pub abort_on_violation: bool,
    /// Band outside `[0,1]` tolerated (and clamped) during reconstruction.
    pub reconstruct_tol: T,
    /// Transitions discarded from the start of each trajectory.
    pub burn_in: usize,
}

impl<T: Scalar> PartitionConfig<T> {
    /// Tight tolerances for exact aggregated data.
    pub fn exact() -> Self {
        Self {
            intersect_tol: cast(1e-6),
            identifiability_tol: cast(1e-6),
            abort_on_violation: false,
            reconstruct_tol: cast(1e-7),
            burn_in: 0,
        }
    }

    /// Tolerances sized for Monte Carlo data.
    pub fn monte_carlo() -> Self {
        Self {
            intersect_tol: cast(0.05),
            identifiability_tol: cast(1e-6),
            abort_on_violation: false,
            reconstruct_tol: cast(0.05),
            burn_in: 0,
        }
    }
}

/// Per-partition diagnostic attached to the estimation result.
#[derive(Debug, Clone)]
pub struct PartitionDiagnostic<T: Scalar> {
    pub block: Vec<usize>,
    /// Actions whose two-state system was solvable for this partition.
    pub actions_used: Vec<usize>,
    /// Number of intersection survivors (1 on success; >1 flags ambiguity).
    pub consistent_points: usize,
    /// The selected aggregated value `C̄₁₁`.
    pub value: T,
    /// Spread (∞-norm) among the matched points that were averaged.
    pub spread: T,
}

/// Estimate a symmetric confusion matrix from aggregated superstate data.
///
/// Requires the subset identifiability condition to hold for the actions'
/// stationary distributions (checked; warning or abort per config). Returns a
/// single reconstructed candidate; the result is marked unselected when any
/// partition keeps more than one consistent point or the identifiability
/// check fails.
pub fn estimate_by_partitions<T: Scalar>(
    mdp: &Mdp<T>,
    input: PartitionInput<'_, T>,
    cfg: &PartitionConfig<T>,
) -> Result<EstimationResult<T>> {
    let n = mdp.states();
    let actions: Vec<usize> = match input {
        PartitionInput::Trajectories(t) => t.keys().copied().collect(),
        PartitionInput::ExactFromTruth(_) => (0..mdp.actions()).collect(),
    };
    if actions.is_empty() {
        return Err(Error::InvalidParameter("no actions supplied".into()));
    }
    let mut stationaries = BTreeMap::new();
    for &a in &actions {
        stationaries.insert(a, mdp.stationary(a)?);
    }
    let report = check_subset_condition(&stationaries, cfg.identifiability_tol)?;
    if !report.satisfied {
        if cfg.abort_on_violation {
            return Err(Error::IdentifiabilityNotSatisfied {
                violations: report.violating_subsets.len(),
            });
        }
        log::warn!(
            "identifiability condition violated for {} subsets; the estimate may be non-unique",
            report.violating_subsets.len()
        );
    }

    let mut partitions: Vec<Partition2> = Vec::new();
    for i in 0..n {
        partitions.push(Partition2::new(n, vec![i])?);
    }
    if n > 2 {
        for i in 0..n {
            for j in (i + 1)..n {
                partitions.push(Partition2::new(n, vec![i, j])?);
            }
        }
    }

    let mut diag = vec![T::zero(); n];
    let mut pairs: BTreeMap<(usize, usize), T> = BTreeMap::new();
    let mut diagnostics: Vec<PartitionDiagnostic<T>> = Vec::new();
    let mut ambiguous = false;

    for part in &partitions {
        let mut sets: Vec<TwoStateSolutionSet<T>> = Vec::new();
        let mut used: Vec<usize> = Vec::new();
        for &a in &actions {
            let pi = &stationaries[&a];
            let p_bar = aggregate_transition(mdp.transition(a)?, pi, part)?;
            let agg = aggregate_partition(&ConfusionMatrix::identity(n), pi, part)?;
            let pi_bar = StateDistribution::new(ndarray::arr1(&agg.pi_bar))?;
            let q_bar: ObservedTransitionMatrix<T> = match input {
                PartitionInput::ExactFromTruth(c_true) => {
                    let agg_c = aggregate_partition(c_true, pi, part)?;
                    exact_observed_transition(&agg_c.confusion()?, &pi_bar, &p_bar)?
                }
                PartitionInput::Trajectories(trajs) => {
                    let traj = &trajs[&a];
                    empirical_superstate_q(traj, part, cfg.burn_in)?
                }
            };
            match solve_two_state(&pi_bar, &p_bar, &q_bar) {
                Ok(set) if !set.solutions.is_empty() => {
                    sets.push(set);
                    used.push(a);
                }
                Ok(_) => {}
                Err(Error::Underdetermined) => {
                    // this action's aggregated system carries no constraint
                    // for this partition; skip it
                }
                Err(e) => return Err(e),
            }
        }
        if sets.is_empty() {
            return Err(Error::NoConsistentSolution);
        }
        let common = intersect_solutions(&sets, cfg.intersect_tol)?;
        if common.solutions.len() != 1 {
            ambiguous = true;
        }
        let (x, _y) = common.solutions[0];
        let spread = intersection_spread(&sets, common.solutions[0], cfg.intersect_tol);
        diagnostics.push(PartitionDiagnostic {
            block: part.block().to_vec(),
            actions_used: used,
            consistent_points: common.solutions.len(),
            value: x,
            spread,
        });
        if part.block().len() == 1 {
            diag[part.block()[0]] = x;
        } else {
            pairs.insert((part.block()[0], part.block()[1]), x);
        }
    }

    let reference = stationaries
        .values()
        .next()
        .expect("at least one action checked above");
    let reconstructed = reconstruct_symmetric(&diag, &pairs, reference, cfg.reconstruct_tol)?;
    let residual = diagnostics.iter().map(|d| d.spread).fold(T::zero(), T::max);
    let non_unique = ambiguous || !report.satisfied;
    Ok(EstimationResult {
        selected: if non_unique { None } else { Some(0) },
        candidates: vec![Candidate {
            matrix: reconstructed,
            residual,
            feasible: !non_unique,
        }],
        diagnostics: EstimationDiagnostics {
            per_action_loss: BTreeMap::new(),
            identifiability: Some(report),
            partitions: diagnostics,
        },
    })
}

/// Empirical 2×2 observed-transition matrix of the superstate process.
fn empirical_superstate_q<T: Scalar>(
    traj: &Trajectory,
    part: &Partition2,
    burn_in: usize,
) -> Result<ObservedTransitionMatrix<T>> {
    if part.states() != traj.state_count() {
        return Err(Error::DimensionMismatch {
            expected: traj.state_count(),
            found: part.states(),
        });
    }
    let supers = part.superstate_sequence(traj.observations());
    let mut counts = ndarray::Array2::<u64>::zeros((2, 2));
    let lo = burn_in.min(traj.transitions());
    for t in lo..traj.transitions() {
        counts[[supers[t], supers[t + 1]]] += 1;
    }
    ObservedTransitionMatrix::from_counts(&counts)
}

fn intersection_spread<T: Scalar>(sets: &[TwoStateSolutionSet<T>], point: (T, T), tol: T) -> T {
    let mut spread = T::zero();
    for set in sets {
        let nearest = set
            .solutions
            .iter()
            .map(|&(x, y)| (x - point.0).abs().max((y - point.1).abs()))
            .fold(T::infinity(), T::min);
        if nearest <= tol {
            spread = spread.max(nearest);
        }
    }
    spread
}
