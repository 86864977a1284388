//! Core domain types and the exact observed-transition identity.
//!
//! A finite MDP with `n` states and `m` actions is described by one
//! row-stochastic transition matrix per action. Observations are corrupted by
//! a row-stochastic confusion matrix `C`: when the true state is `i`, state
//! `j` is reported with probability `C[i][j]`. The central identity relates
//! the transition matrix of the *observed* state process to `(C, π, P)`:
//!
//! ```text
//! diag(Cᵀπ) · Q = Cᵀ · diag(π) · P · C
//! ```
//!
//! where `π` is the distribution of the true state. [`exact_observed_transition`]
//! evaluates it; everything downstream (losses, solvers, Bayesian updates) is
//! tested against it.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::{cast, renorm_tol, strict_tol, Scalar};

/// Validate (and if mildly violated, renormalize) the rows of a probability
/// matrix. Violations within `renorm_tol` are repaired with a warning; larger
/// ones are rejected.
fn validate_rows<T: Scalar>(context: &'static str, entries: &mut Array2<T>) -> Result<()> {
    let strict = strict_tol::<T>();
    let renorm = renorm_tol::<T>();
    for (r, mut row) in entries.rows_mut().into_iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() || *v < -strict || *v > T::one() + renorm {
                return Err(Error::EntryOutOfRange {
                    context,
                    row: r,
                    col: c,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let sum: T = row.iter().copied().sum();
        let dev = (sum - T::one()).abs();
        if dev > strict {
            if dev > renorm {
                return Err(Error::RowSumInvalid {
                    context,
                    row: r,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
            log::warn!(
                "{context} row {r} sums to {sum}; renormalizing (deviation within {:e})",
                renorm.to_f64().unwrap_or(f64::NAN)
            );
            row.mapv_inplace(|v| (v / sum).max(T::zero()).min(T::one()));
        } else {
            // absorb harmless negative dust
            row.mapv_inplace(|v| v.max(T::zero()));
        }
    }
    Ok(())
}

fn require_square<T: Scalar>(m: &Array2<T>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch {
            expected: r,
            found: c,
        });
    }
    Ok(r)
}

/// A finite MDP: one row-stochastic `n×n` transition matrix per action.
#[derive(Debug, Clone)]
pub struct Mdp<T: Scalar> {
    states: usize,
    transitions: Vec<Array2<T>>,
}

impl<T: Scalar> Mdp<T> {
    /// Build an MDP from per-action transition matrices. Requires at least one
    /// action, `n >= 2` states, and row-stochastic matrices of equal size.
    pub fn new(transitions: Vec<Array2<T>>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidParameter(
                "an MDP needs at least one action".into(),
            ));
        }
        let n = require_square(&transitions[0])?;
        if n < 2 {
            return Err(Error::InvalidParameter(
                "an MDP needs at least two states".into(),
            ));
        }
        let mut transitions = transitions;
        for p in transitions.iter_mut() {
            let k = require_square(p)?;
            if k != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: k,
                });
            }
            validate_rows("transition matrix", p)?;
        }
        Ok(Self {
            states: n,
            transitions,
        })
    }

    /// Number of states `n`.
    pub fn states(&self) -> usize {
        self.states
    }

    /// Number of actions `m`.
    pub fn actions(&self) -> usize {
        self.transitions.len()
    }

    /// Transition matrix of action `a`.
    pub fn transition(&self, action: usize) -> Result<&Array2<T>> {
        self.transitions.get(action).ok_or(Error::InvalidAction {
            action,
            actions: self.transitions.len(),
        })
    }

    /// Stationary distribution of action `a`'s transition matrix.
    pub fn stationary(&self, action: usize) -> Result<StateDistribution<T>> {
        stationary_distribution(self.transition(action)?)
    }
}

/// Row-stochastic state-observation confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<T: Scalar> {
    entries: Array2<T>,
    symmetric: bool,
}

impl<T: Scalar> ConfusionMatrix<T> {
    /// Validate a confusion matrix (no symmetry requirement).
    pub fn new(mut entries: Array2<T>) -> Result<Self> {
        require_square(&entries)?;
        validate_rows("confusion matrix", &mut entries)?;
        Ok(Self {
            entries,
            symmetric: false,
        })
    }

    /// Validate a confusion matrix and require `C[i][j] = C[j][i]` within the
    /// strict tolerance.
    pub fn new_symmetric(entries: Array2<T>) -> Result<Self> {
        let mut m = Self::new(entries)?;
        let n = m.dim();
        let tol = strict_tol::<T>();
        for i in 0..n {
            for j in (i + 1)..n {
                let delta = (m.entries[[i, j]] - m.entries[[j, i]]).abs();
                if delta > tol {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        delta: delta.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        m.symmetric = true;
        Ok(m)
    }

    /// The identity matrix: noiseless observation.
    pub fn identity(n: usize) -> Self {
        Self {
            entries: Array2::eye(n),
            symmetric: true,
        }
    }

    /// The two-state family `[[1-α, α], [β, 1-β]]`.
    pub fn two_state_alpha_beta(alpha: T, beta: T) -> Result<Self> {
        let entries = ndarray::arr2(&[[T::one() - alpha, alpha], [beta, T::one() - beta]]);
        Self::new(entries)
    }

    /// Matrix dimension `n`.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Whether the matrix was constructed under the symmetry constraint.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry access.
    pub fn entries(&self) -> &Array2<T> {
        &self.entries
    }
}

/// Probability vector over true states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution<T: Scalar> {
    probs: Array1<T>,
}

impl<T: Scalar> StateDistribution<T> {
    /// Validate a probability vector (sum 1 within tolerance, entries in [0,1]).
    pub fn new(probs: Array1<T>) -> Result<Self> {
        let mut m = probs.insert_axis(ndarray::Axis(0));
        validate_rows("state distribution", &mut m)?;
        Ok(Self {
            probs: m.remove_axis(ndarray::Axis(0)),
        })
    }

    /// Uniform distribution over `n` states.
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: Array1::from_elem(n, cast::<T>(1.0 / n as f64)),
        }
    }

    /// Point mass on state `i`.
    pub fn point_mass(n: usize, state: usize) -> Result<Self> {
        if state >= n {
            return Err(Error::InvalidState { state, states: n });
        }
        let mut probs = Array1::zeros(n);
        probs[state] = T::one();
        Ok(Self { probs })
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// Whether the vector is empty (never true for validated values).
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability vector access.
    pub fn probs(&self) -> &Array1<T> {
        &self.probs
    }
}

/// Transition matrix of the *observed* state process, either exact or
/// estimated from counts. Rows that were never visited stay explicitly
/// undefined instead of being imputed.
#[derive(Debug, Clone)]
pub struct ObservedTransitionMatrix<T: Scalar> {
    entries: Array2<T>,
    row_counts: Option<Vec<u64>>,
}

impl<T: Scalar> ObservedTransitionMatrix<T> {
    /// Wrap an exactly computed observed-transition matrix. All rows defined.
    pub fn exact(mut entries: Array2<T>) -> Result<Self> {
        require_square(&entries)?;
        validate_rows("observed transition matrix", &mut entries)?;
        Ok(Self {
            entries,
            row_counts: None,
        })
    }

    /// Build an empirical estimate from pair counts. Rows with zero visits are
    /// flagged undefined (entries zero, excluded from downstream losses).
    pub fn from_counts(counts: &Array2<u64>) -> Result<Self> {
        let n = {
            let (r, c) = counts.dim();
            if r != c || r == 0 {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    found: c,
                });
            }
            r
        };
        let mut entries = Array2::zeros((n, n));
        let mut row_counts = Vec::with_capacity(n);
        for i in 0..n {
            let total: u64 = (0..n).map(|j| counts[[i, j]]).sum();
            row_counts.push(total);
            if total > 0 {
                for j in 0..n {
                    entries[[i, j]] = cast::<T>(counts[[i, j]] as f64 / total as f64);
                }
            }
        }
        Ok(Self {
            entries,
            row_counts: Some(row_counts),
        })
    }

    /// Matrix dimension `n`.
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Entry access. Undefined rows are all-zero; check [`Self::is_row_defined`].
    pub fn entries(&self) -> &Array2<T> {
        &self.entries
    }

    /// Whether row `i` carries information (visited at least once, or exact).
    pub fn is_row_defined(&self, i: usize) -> bool {
        match &self.row_counts {
            None => true,
            Some(c) => c[i] > 0,
        }
    }

    /// Per-row visit counts (`None` for exact matrices).
    pub fn row_counts(&self) -> Option<&[u64]> {
        self.row_counts.as_deref()
    }
}

/// Solve `πᵀP = πᵀ, Σπ = 1` for an irreducible chain.
///
/// Uses the direct linear system `(I − Pᵀ + 11ᵀ) x = 1`, which is nonsingular
/// for irreducible chains, so periodic chains (where power iteration
/// oscillates) are handled. Periodic chains are accepted with a warning.
pub fn stationary_distribution<T: Scalar>(p: &Array2<T>) -> Result<StateDistribution<T>> {
    let n = require_square(p)?;
    {
        let mut pm = p.clone();
        validate_rows("transition matrix", &mut pm)?;
    }
    if !strongly_connected(p) {
        return Err(Error::ReducibleChain);
    }
    if let Some(period) = graph_period(p) {
        if period > 1 {
            log::warn!(
                "transition matrix is periodic (period {period}); empirical transition \
                 frequencies still converge through time averaging"
            );
        }
    }
    let mut a = Array2::from_elem((n, n), T::one());
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] -= p[[j, i]];
            if i == j {
                a[[i, j]] += T::one();
            }
        }
    }
    let b = Array1::from_elem(n, T::one());
    let mut x = solve_linear(a, b).ok_or(Error::ReducibleChain)?;
    x.mapv_inplace(|v| v.max(T::zero()));
    let total: T = x.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::ReducibleChain);
    }
    x.mapv_inplace(|v| v / total);
    StateDistribution::new(x)
}

/// Exact transition matrix of the observed-state process:
/// `Q = diag(Cᵀπ)⁻¹ · Cᵀ · diag(π) · P · C`.
///
/// Requires every observation symbol to be reachable (`(Cᵀπ)_j > 0`).
pub fn exact_observed_transition<T: Scalar>(
    c: &ConfusionMatrix<T>,
    pi: &StateDistribution<T>,
    p: &Array2<T>,
) -> Result<ObservedTransitionMatrix<T>> {
    let n = c.dim();
    if pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: pi.len(),
        });
    }
    if require_square(p)? != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.nrows(),
        });
    }
    let ct = c.entries().t();
    let reach = ct.dot(pi.probs());
    for (j, v) in reach.iter().enumerate() {
        if *v <= T::zero() {
            return Err(Error::UnreachableObservation(j));
        }
    }
    let weighted = pi.probs().clone().insert_axis(ndarray::Axis(1)) * p;
    let mut q = ct.dot(&weighted).dot(c.entries());
    for (i, mut row) in q.rows_mut().into_iter().enumerate() {
        let d = reach[i];
        row.mapv_inplace(|v| v / d);
    }
    ObservedTransitionMatrix::exact(q)
}

/// Estimate of the modulus of the second-largest eigenvalue of an irreducible
/// `P` with stationary `pi`, via repeated squaring of `P − 1πᵀ`. Returns
/// `None` when the estimate sits at 1 (periodic or non-mixing chains).
pub fn second_eigenvalue_modulus<T: Scalar>(
    p: &Array2<T>,
    pi: &StateDistribution<T>,
) -> Option<f64> {
    let n = p.nrows();
    let mut m = p.clone();
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] -= pi.probs()[j];
        }
    }
    let mut log_scale = 0.0f64;
    for _ in 0..6 {
        let norm = inf_norm(&m).to_f64()?;
        if norm <= 0.0 {
            return Some(0.0);
        }
        let scaled = m.mapv(|v| v / cast::<T>(norm));
        m = scaled.dot(&scaled);
        log_scale = 2.0 * (log_scale + norm.ln());
    }
    let final_norm = inf_norm(&m).to_f64()?;
    if final_norm <= 0.0 {
        return Some(0.0);
    }
    let rho = ((log_scale + final_norm.ln()) / 64.0).exp();
    if rho >= 1.0 - 1e-9 {
        None
    } else {
        Some(rho)
    }
}

fn inf_norm<T: Scalar>(m: &Array2<T>) -> T {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<T>())
        .fold(T::zero(), T::max)
}

/// Gaussian elimination with partial pivoting. Returns `None` for (near)
/// singular systems.
pub(crate) fn solve_linear<T: Scalar>(mut a: Array2<T>, mut b: Array1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    let scale = a.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    let tiny = scale * T::epsilon() * cast::<T>(n as f64 * 8.0);
    for col in 0..n {
        let pivot_row =
            (col..n).max_by(|&i, &j| a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).unwrap())?;
        if a[[pivot_row, col]].abs() <= tiny {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                let tmp = a[[col, k]];
                a[[col, k]] = a[[pivot_row, k]];
                a[[pivot_row, k]] = tmp;
            }
            b.swap(col, pivot_row);
        }
        for row in (col + 1)..n {
            let f = a[[row, col]] / a[[col, col]];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                a[[row, k]] = a[[row, k]] - f * a[[col, k]];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[[row, k]] * x[k];
        }
        x[row] = acc / a[[row, row]];
    }
    Some(x)
}

/// Strong connectivity of the positive-entry digraph: every node reachable
/// from node 0 in the graph and in its reverse.
fn strongly_connected<T: Scalar>(p: &Array2<T>) -> bool {
    let n = p.nrows();
    let reach = |reverse: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if reverse { p[[v, u]] } else { p[[u, v]] };
                if w > T::zero() && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// Period of a strongly connected positive-entry digraph (gcd of cycle
/// lengths); `None` if the graph is not fully reachable from node 0.
fn graph_period<T: Scalar>(p: &Array2<T>) -> Option<u64> {
    let n = p.nrows();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[[u, v]] > T::zero() && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if level.contains(&usize::MAX) {
        return None;
    }
    let mut g: u64 = 0;
    for u in 0..n {
        for v in 0..n {
            if p[[u, v]] > T::zero() {
                let d = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, d);
            }
        }
    }
    Some(g.max(1))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    #[test]
    fn stationary_of_symmetric_swap_is_uniform() {
        let p = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi.probs()[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(pi.probs()[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn stationary_of_symmetric_mixing_is_uniform() {
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi.probs()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn stationary_solves_the_two_state_system_by_hand() {
        // pi1 * 0.1 = pi2 * 0.5 with pi1 + pi2 = 1 gives (5/6, 1/6)
        let p = arr2(&[[0.9, 0.1], [0.5, 0.5]]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi.probs()[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.probs()[1], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            stationary_distribution(&p),
            Err(Error::ReducibleChain)
        ));
    }

    #[test]
    fn stationary_residual_is_tiny() {
        let p = arr2(&[[0.2f64, 0.5, 0.3], [0.4, 0.1, 0.5], [0.25, 0.25, 0.5]]);
        let pi = stationary_distribution(&p).unwrap();
        let lhs = pi.probs().dot(&p);
        for i in 0..3 {
            assert!((lhs[i] - pi.probs()[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn observed_transition_matches_known_values() {
        let c = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let pi = StateDistribution::new(arr1(&[0.5, 0.5])).unwrap();

        let q = exact_observed_transition(&c, &pi, &arr2(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        let expect = arr2(&[[0.45, 0.55], [0.825, 0.175]]);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(q.entries()[[i, j]], expect[[i, j]], epsilon = 1e-12);
            }
        }

        let q2 = exact_observed_transition(&c, &pi, &arr2(&[[0.3, 0.7], [0.7, 0.3]])).unwrap();
        let expect2 = arr2(&[[0.54, 0.46], [0.69, 0.31]]);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(q2.entries()[[i, j]], expect2[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_confusion_returns_the_transition_matrix() {
        let c = ConfusionMatrix::identity(3);
        let p = arr2(&[[0.2, 0.5, 0.3], [0.4, 0.1, 0.5], [0.25, 0.25, 0.5]]);
        let pi = stationary_distribution(&p).unwrap();
        let q = exact_observed_transition(&c, &pi, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(q.entries()[[i, j]], p[[i, j]], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn unreachable_observation_is_reported() {
        // observation symbol 1 has probability zero under both states
        let c = ConfusionMatrix::new(arr2(&[[1.0, 0.0], [1.0, 0.0]])).unwrap();
        let pi = StateDistribution::uniform(2);
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        assert!(matches!(
            exact_observed_transition(&c, &pi, &p),
            Err(Error::UnreachableObservation(1))
        ));
    }

    #[test]
    fn rows_slightly_off_are_renormalized_and_bad_rows_rejected() {
        let ok = ConfusionMatrix::new(arr2(&[[0.9, 0.1 + 5e-10], [0.3, 0.7]]));
        assert!(ok.is_ok());
        let sum: f64 = ok.unwrap().entries().row(0).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);

        let bad = ConfusionMatrix::new(arr2(&[[0.8, 0.1], [0.3, 0.7]]));
        assert!(matches!(bad, Err(Error::RowSumInvalid { row: 0, .. })));
    }

    #[test]
    fn symmetric_constructor_rejects_asymmetry() {
        let asym = arr2(&[[0.9, 0.1], [0.3, 0.7]]);
        assert!(matches!(
            ConfusionMatrix::new_symmetric(asym),
            Err(Error::NotSymmetric { .. })
        ));
        let sym = arr2(&[[0.9, 0.1], [0.1, 0.9]]);
        assert!(ConfusionMatrix::new_symmetric(sym).unwrap().is_symmetric());
    }

    #[test]
    fn second_eigenvalue_estimates() {
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let pi = stationary_distribution(&p).unwrap();
        let rho = second_eigenvalue_modulus(&p, &pi).unwrap();
        assert_abs_diff_eq!(rho, 0.4, epsilon = 1e-6);

        // periodic chain: estimate pegged at 1
        let swap = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let pi = stationary_distribution(&swap).unwrap();
        assert!(second_eigenvalue_modulus(&swap, &pi).is_none());
    }

    #[test]
    fn generic_scalar_f32_smoke() {
        let p = arr2(&[[0.3f32, 0.7], [0.7, 0.3]]);
        let pi = stationary_distribution(&p).unwrap();
        assert!((pi.probs()[0] - 0.5).abs() < 1e-5);
    }
}
