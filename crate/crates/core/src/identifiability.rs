//! Identifiability checks and superstate aggregation.
//!
//! Two actions with distinct stationary distributions pin down a unique
//! two-state confusion matrix. For general `n` (and a symmetric confusion
//! matrix) the sufficient condition quantifies over every nonempty strict
//! subset `B` of states: some action pair must disagree on the stationary
//! mass of `B`. The aggregation machinery here collapses an `n`-state system
//! onto a two-superstate system, and the reconstruction inverts the
//! aggregation once the per-partition values are known.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mdp::{ConfusionMatrix, StateDistribution};
use crate::scalar::{cast, renorm_tol, Scalar};

/// Largest state count accepted by [`check_subset_condition`]; the subset
/// family has `2^n − 2` members.
pub const SUBSET_ENUMERATION_CAP: usize = 15;

/// A two-block state partition, stored as the explicit block `B`; the
/// complement is implied.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Partition2 {
    states: usize,
    block: Vec<usize>,
}

impl Partition2 {
    /// Build a partition from a nonempty strict subset of `0..n`.
    pub fn new(states: usize, mut block: Vec<usize>) -> Result<Self> {
        block.sort_unstable();
        block.dedup();
        if block.is_empty() || block.len() >= states {
            return Err(Error::InvalidParameter(format!(
                "partition block must be a nonempty strict subset of 0..{states}"
            )));
        }
        if let Some(&s) = block.iter().find(|&&s| s >= states) {
            return Err(Error::InvalidState { state: s, states });
        }
        Ok(Self { states, block })
    }

    /// Block members, sorted.
    pub fn block(&self) -> &[usize] {
        &self.block
    }

    /// Number of states `n`.
    pub fn states(&self) -> usize {
        self.states
    }

    /// Complement block, sorted.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.states)
            .filter(|s| !self.block.contains(s))
            .collect()
    }

    /// Whether state `s` falls in the explicit block.
    pub fn contains(&self, s: usize) -> bool {
        self.block.binary_search(&s).is_ok()
    }

    /// Map a state sequence onto superstate indices (0 = block, 1 = complement).
    pub fn superstate_sequence(&self, states: &[usize]) -> Vec<usize> {
        states
            .iter()
            .map(|&s| usize::from(!self.contains(s)))
            .collect()
    }
}

/// The two-superstate system induced by a partition: superstate stationary
/// mass and the diagonal entries of the aggregated confusion matrix.
#[derive(Debug, Clone)]
pub struct AggregatedSystem<T: Scalar> {
    pub pi_bar: [T; 2],
    pub c_bar_11: T,
    pub c_bar_22: T,
}

impl<T: Scalar> AggregatedSystem<T> {
    /// The implied 2×2 row-stochastic confusion matrix.
    pub fn confusion(&self) -> Result<ConfusionMatrix<T>> {
        ConfusionMatrix::new(ndarray::arr2(&[
            [self.c_bar_11, T::one() - self.c_bar_11],
            [T::one() - self.c_bar_22, self.c_bar_22],
        ]))
    }

    /// The superstate stationary distribution as a vector.
    pub fn stationary(&self) -> Result<StateDistribution<T>> {
        StateDistribution::new(Array1::from(vec![self.pi_bar[0], self.pi_bar[1]]))
    }
}

/// Result of the subset identifiability check.
#[derive(Debug, Clone)]
pub struct IdentifiabilityReport {
    pub satisfied: bool,
    /// Subsets on which every action pair agrees (within tolerance), sorted
    /// by size then lexicographically.
    pub violating_subsets: Vec<Partition2>,
    pub tolerance: f64,
}

/// True iff the two stationary distributions differ by more than `tol` in
/// the ∞-norm.
pub fn check_pairwise<T: Scalar>(
    pi_a: &StateDistribution<T>,
    pi_b: &StateDistribution<T>,
    tol: T,
) -> Result<bool> {
    if pi_a.len() != pi_b.len() {
        return Err(Error::DimensionMismatch {
            expected: pi_a.len(),
            found: pi_b.len(),
        });
    }
    let max_diff = pi_a
        .probs()
        .iter()
        .zip(pi_b.probs().iter())
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);
    Ok(max_diff > tol)
}

/// Check the subset condition over a set of per-action stationary
/// distributions: every nonempty strict subset `B` must have two actions
/// whose stationary mass on `B` differs by more than `tol`.
///
/// Only subsets with `1 ≤ |B| ≤ ⌊n/2⌋` are enumerated (a block and its
/// complement give equal-magnitude differences); `n` is capped at
/// [`SUBSET_ENUMERATION_CAP`].
pub fn check_subset_condition<T: Scalar>(
    stationaries: &BTreeMap<usize, StateDistribution<T>>,
    tol: T,
) -> Result<IdentifiabilityReport> {
    let mut iter = stationaries.values();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("need at least one stationary".into()))?;
    let n = first.len();
    if stationaries.values().any(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: 0,
        });
    }
    if n > SUBSET_ENUMERATION_CAP {
        return Err(Error::SubsetCapExceeded {
            n,
            cap: SUBSET_ENUMERATION_CAP,
        });
    }
    let mut violating = Vec::new();
    for mask in 1u32..(1u32 << n) - 1 {
        let size = mask.count_ones() as usize;
        if size > n / 2 {
            continue;
        }
        // at |B| = n/2 keep only the representative containing state 0
        if n % 2 == 0 && size == n / 2 && mask & 1 == 0 {
            continue;
        }
        let block: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for pi in stationaries.values() {
            let s: T = block.iter().map(|&i| pi.probs()[i]).sum();
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if hi - lo <= tol {
            violating.push(Partition2::new(n, block)?);
        }
    }
    violating.sort_by(|a, b| (a.block.len(), &a.block).cmp(&(b.block.len(), &b.block)));
    Ok(IdentifiabilityReport {
        satisfied: violating.is_empty(),
        violating_subsets: violating,
        tolerance: tol.to_f64().unwrap_or(f64::NAN),
    })
}

/// Aggregate `(C, π)` onto the two superstates of `part`:
/// `C̄₁₁ = Σ_{i∈B} π_i (Σ_{j∈B} C_ij) / Σ_{j∈B} π_j`, mirrored for `C̄₂₂`,
/// and `π̄ = (Σ_B π, 1 − Σ_B π)`.
pub fn aggregate_partition<T: Scalar>(
    c: &ConfusionMatrix<T>,
    pi: &StateDistribution<T>,
    part: &Partition2,
) -> Result<AggregatedSystem<T>> {
    let n = c.dim();
    if pi.len() != n || part.states() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: pi.len().min(part.states()),
        });
    }
    let comp = part.complement();
    let mass_b: T = part.block().iter().map(|&i| pi.probs()[i]).sum();
    let mass_c: T = comp.iter().map(|&i| pi.probs()[i]).sum();
    if mass_b <= T::zero() || mass_c <= T::zero() {
        return Err(Error::ZeroMassBlock);
    }
    let block_sum = |rows: &[usize], cols: &[usize]| -> T {
        rows.iter()
            .map(|&i| {
                let row_mass: T = cols.iter().map(|&j| c.entries()[[i, j]]).sum();
                pi.probs()[i] * row_mass
            })
            .sum()
    };
    let c11 = block_sum(part.block(), part.block()) / mass_b;
    let c22 = block_sum(&comp, &comp) / mass_c;
    Ok(AggregatedSystem {
        pi_bar: [mass_b, mass_c],
        c_bar_11: c11,
        c_bar_22: c22,
    })
}

/// Aggregate a transition matrix onto the two superstates at stationarity:
/// `P̄_IJ = Σ_{i∈I, j∈J} π_i P_ij / Σ_{i∈I} π_i`.
pub fn aggregate_transition<T: Scalar>(
    p: &Array2<T>,
    pi: &StateDistribution<T>,
    part: &Partition2,
) -> Result<Array2<T>> {
    let n = pi.len();
    if p.nrows() != n || p.ncols() != n || part.states() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.nrows(),
        });
    }
    let blocks = [part.block().to_vec(), part.complement()];
    let mut out = Array2::zeros((2, 2));
    for (bi, rows) in blocks.iter().enumerate() {
        let mass: T = rows.iter().map(|&i| pi.probs()[i]).sum();
        if mass <= T::zero() {
            return Err(Error::ZeroMassBlock);
        }
        for (bj, cols) in blocks.iter().enumerate() {
            let w: T = rows
                .iter()
                .map(|&i| {
                    let row: T = cols.iter().map(|&j| p[[i, j]]).sum();
                    pi.probs()[i] * row
                })
                .sum();
            out[[bi, bj]] = w / mass;
        }
    }
    Ok(out)
}

/// Rebuild a symmetric confusion matrix from its diagonal (singleton
/// partitions) and the aggregated `C̄₁₁` of each pair partition `{i, j}`.
///
/// For the pair `{i,j}` the aggregation is linear in the single unknown
/// `C_ij = C_ji`:
/// `C̄₁₁ (π_i + π_j) = π_i (C_ii + C_ij) + π_j (C_ji + C_jj)`.
/// Entries within `tol` outside `[0, 1]` are clamped; larger violations (and
/// row sums off by more than `tol`) are reconstruction errors. For `n = 2`
/// the off-diagonals follow from row sums alone, so `pairs` may be empty.
pub fn reconstruct_symmetric<T: Scalar>(
    diag: &[T],
    pairs: &BTreeMap<(usize, usize), T>,
    pi: &StateDistribution<T>,
    tol: T,
) -> Result<ConfusionMatrix<T>> {
    let n = diag.len();
    if pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: pi.len(),
        });
    }
    if pi.probs().iter().any(|p| *p <= T::zero()) {
        return Err(Error::ZeroMassBlock);
    }
    let mut c = Array2::<T>::zeros((n, n));
    for i in 0..n {
        c[[i, i]] = diag[i];
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let value = match pairs.get(&(i, j)) {
                Some(&c11) => {
                    let wi = pi.probs()[i];
                    let wj = pi.probs()[j];
                    (c11 * (wi + wj) - wi * diag[i] - wj * diag[j]) / (wi + wj)
                }
                None if n == 2 => T::one() - diag[i],
                None => {
                    return Err(Error::InconsistentReconstruction {
                        detail: format!("missing pair value for states ({i},{j})"),
                    })
                }
            };
            c[[i, j]] = value;
            c[[j, i]] = value;
        }
    }
    // clamp statistical dust, reject genuine inconsistencies
    for i in 0..n {
        for j in 0..n {
            let v = c[[i, j]];
            if v < -tol || v > T::one() + tol {
                return Err(Error::InconsistentReconstruction {
                    detail: format!(
                        "entry ({i},{j}) = {} outside [-tol, 1+tol]",
                        v.to_f64().unwrap_or(f64::NAN)
                    ),
                });
            }
            c[[i, j]] = v.max(T::zero()).min(T::one());
        }
    }
    for i in 0..n {
        let sum: T = c.row(i).iter().copied().sum();
        if (sum - T::one()).abs() > tol.max(renorm_tol::<T>()) {
            return Err(Error::InconsistentReconstruction {
                detail: format!(
                    "row {i} sums to {} after reconstruction",
                    sum.to_f64().unwrap_or(f64::NAN)
                ),
            });
        }
        for j in 0..n {
            c[[i, j]] /= sum;
        }
    }
    // renormalization can break exact symmetry at the last digit; resymmetrize
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (c[[i, j]] + c[[j, i]]) / cast::<T>(2.0);
            c[[i, j]] = avg;
            c[[j, i]] = avg;
        }
    }
    let mut fixed = c;
    for i in 0..n {
        let sum: T = fixed.row(i).iter().copied().sum();
        let d = fixed[[i, i]] + (T::one() - sum);
        fixed[[i, i]] = d.max(T::zero()).min(T::one());
    }
    ConfusionMatrix::new_symmetric(fixed)
}
