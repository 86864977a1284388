//! Bayesian estimation of the confusion matrix over a finite weighted
//! ensemble of candidates.
//!
//! The continuous posterior density over confusion matrices is approximated
//! by a fixed support (a parameter grid or i.i.d. prior draws) whose weights
//! evolve; the support itself never changes. Two recursions are provided:
//!
//! * first order — conditions on the latest observation through a belief
//!   state over the true state;
//! * second order — conditions on the latest observation *pair* through the
//!   observed-transition matrix evaluated at a modified belief state (one that
//!   only conditions through the previous observation).
//!
//! Weights are stored and updated in log space: runs of 10⁵ multiplicative
//! updates underflow linear weights.

mod summary;

pub use summary::{grid_line_fit, posterior_summary, LineFit, PosteriorSummary};

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mdp::{ConfusionMatrix, Mdp, StateDistribution};
use crate::scalar::{cast, Scalar};
use crate::sim::{simulate, ActionSource, Trajectory};

/// How a posterior support is generated.
#[derive(Debug, Clone)]
pub enum PosteriorInit {
    /// Regular lattice over the two-state `(α, β)` family with cell-center
    /// placement: `resolution²` points at `((i+0.5)/r, (j+0.5)/r)`.
    GridAlphaBeta { resolution: usize },
    /// `count` i.i.d. draws from the uniform prior over row-stochastic
    /// matrices (each row an independent uniform simplex sample).
    Ensemble {
        count: usize,
        states: usize,
        seed: u64,
    },
}

/// Grid geometry of a lattice-backed posterior.
#[derive(Debug, Clone)]
pub struct GridLayout<T: Scalar> {
    pub resolution: usize,
    /// Per-point `(α, β)` coordinates, row-major in `α`.
    pub points: Vec<(T, T)>,
}

#[derive(Debug)]
pub(crate) struct Support<T: Scalar> {
    pub matrices: Vec<ConfusionMatrix<T>>,
    pub grid: Option<GridLayout<T>>,
}

/// Discrete approximation of the posterior density over confusion matrices:
/// an immutable support and a normalized weight vector (kept in log space).
#[derive(Debug, Clone)]
pub struct PosteriorOverC<T: Scalar> {
    support: Arc<Support<T>>,
    log_weights: Vec<T>,
}

impl<T: Scalar> PosteriorOverC<T> {
    /// Build a posterior from an explicit support and weight vector
    /// (ensemble kind). Weights must form a probability vector; they are
    /// stored in log space.
    pub fn from_support(matrices: Vec<ConfusionMatrix<T>>, weights: &[T]) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                found: weights.len(),
            });
        }
        let n = matrices[0].dim();
        if matrices.iter().any(|m| m.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: 0,
            });
        }
        StateDistribution::new(Array1::from(weights.to_vec()))?;
        let log_weights = weights
            .iter()
            .map(|w| {
                if *w > T::zero() {
                    w.ln()
                } else {
                    T::neg_infinity()
                }
            })
            .collect();
        Ok(Self {
            support: Arc::new(Support {
                matrices,
                grid: None,
            }),
            log_weights,
        })
    }

    /// Number of support points `K`.
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    /// Whether the support is empty (never true for initialized posteriors).
    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Support matrices (fixed for the lifetime of the run).
    pub fn support(&self) -> &[ConfusionMatrix<T>] {
        &self.support.matrices
    }

    /// Grid geometry, when the support is a parameter lattice.
    pub fn grid(&self) -> Option<&GridLayout<T>> {
        self.support.grid.as_ref()
    }

    /// Normalized linear weights.
    pub fn weights(&self) -> Vec<T> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    /// Normalized log weights.
    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    /// Index of the maximum-weight support point (lowest index on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (k, lw) in self.log_weights.iter().enumerate() {
            if *lw > self.log_weights[best] {
                best = k;
            }
        }
        best
    }

    /// Posterior mean matrix `Σ_k w_k C⁽ᵏ⁾`.
    pub fn mean_matrix(&self) -> Array2<T> {
        let n = self.support.matrices[0].dim();
        let mut mean = Array2::zeros((n, n));
        for (k, c) in self.support.matrices.iter().enumerate() {
            let w = self.log_weights[k].exp();
            mean += &(c.entries() * w);
        }
        mean
    }

    /// Shannon entropy `−Σ w ln w` of the weight vector.
    pub fn entropy(&self) -> T {
        let mut h = T::zero();
        for lw in &self.log_weights {
            let w = lw.exp();
            if w > T::zero() {
                h -= w * *lw;
            }
        }
        h.max(T::zero())
    }

    /// Total weight of support points within an ∞-norm ball around `center`.
    pub fn mass_within(&self, center: &Array2<T>, radius: T) -> T {
        let mut mass = T::zero();
        for (k, c) in self.support.matrices.iter().enumerate() {
            let dist = c
                .entries()
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            if dist <= radius {
                mass += self.log_weights[k].exp();
            }
        }
        mass
    }

    fn with_log_weights(&self, log_weights: Vec<T>) -> Self {
        Self {
            support: Arc::clone(&self.support),
            log_weights,
        }
    }

    #[cfg(test)]
    pub(crate) fn clone_with_log_weights_for_tests(&self, log_weights: Vec<T>) -> Self {
        self.with_log_weights(log_weights)
    }

    /// Shared-support identity check, used to verify support immutability.
    pub fn shares_support_with(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.support, &other.support)
    }
}

/// Belief over the true state conditioned through the latest observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState<T: Scalar>(Array1<T>);

/// Belief over the true state conditioned only through the previous
/// observation (the second-order recursion's state summary).
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedBeliefState<T: Scalar>(Array1<T>);

macro_rules! belief_impl {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            /// Validate a simplex vector.
            pub fn new(probs: Array1<T>) -> Result<Self> {
                let d = StateDistribution::new(probs)?;
                Ok(Self(d.probs().clone()))
            }

            /// Uniform belief over `n` states.
            pub fn uniform(n: usize) -> Self {
                Self(Array1::from_elem(n, cast::<T>(1.0 / n as f64)))
            }

            /// Probability vector access.
            pub fn probs(&self) -> &Array1<T> {
                &self.0
            }
        }
    };
}
belief_impl!(BeliefState);
belief_impl!(ModifiedBeliefState);

/// Initialize a posterior per the requested support scheme, with uniform
/// weights.
pub fn init_posterior<T: Scalar>(init: &PosteriorInit) -> Result<PosteriorOverC<T>> {
    let support = match init {
        PosteriorInit::GridAlphaBeta { resolution } => {
            let r = *resolution;
            if r < 2 {
                return Err(Error::InvalidParameter(
                    "grid resolution must be at least 2 per axis".into(),
                ));
            }
            let mut matrices = Vec::with_capacity(r * r);
            let mut points = Vec::with_capacity(r * r);
            for i in 0..r {
                let alpha = cast::<T>((i as f64 + 0.5) / r as f64);
                for j in 0..r {
                    let beta = cast::<T>((j as f64 + 0.5) / r as f64);
                    matrices.push(ConfusionMatrix::two_state_alpha_beta(alpha, beta)?);
                    points.push((alpha, beta));
                }
            }
            Support {
                matrices,
                grid: Some(GridLayout {
                    resolution: r,
                    points,
                }),
            }
        }
        PosteriorInit::Ensemble {
            count,
            states,
            seed,
        } => {
            use rand::{Rng, SeedableRng};
            if *count == 0 {
                return Err(Error::InvalidParameter(
                    "ensemble needs at least one support point".into(),
                ));
            }
            if *states < 2 {
                return Err(Error::InvalidParameter(
                    "ensemble needs at least two states".into(),
                ));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
            let n = *states;
            let mut matrices = Vec::with_capacity(*count);
            for _ in 0..*count {
                let mut m = Array2::<T>::zeros((n, n));
                for i in 0..n {
                    let mut sum = 0.0f64;
                    let mut row = vec![0.0f64; n];
                    for v in row.iter_mut() {
                        *v = -(rng.gen::<f64>().max(1e-300)).ln();
                        sum += *v;
                    }
                    for (j, v) in row.iter().enumerate() {
                        m[[i, j]] = cast::<T>(v / sum);
                    }
                }
                matrices.push(ConfusionMatrix::new(m)?);
            }
            Support {
                matrices,
                grid: None,
            }
        }
    };
    let k = support.matrices.len();
    let lw = cast::<T>(-(k as f64).ln());
    Ok(PosteriorOverC {
        support: Arc::new(support),
        log_weights: vec![lw; k],
    })
}

/// Shift-normalize log weights in place; errors when every weight vanished.
fn normalize_log_weights<T: Scalar>(log_weights: &mut [T], step: usize) -> Result<()> {
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::InconsistentObservation { step });
    }
    let sum: T = log_weights.iter().map(|lw| (*lw - max).exp()).sum();
    let log_z = max + sum.ln();
    for lw in log_weights.iter_mut() {
        *lw -= log_z;
    }
    Ok(())
}

/// One first-order update: reweight every support point by the likelihood of
/// the next observation and refresh the shared belief state.
///
/// Support points with zero likelihood get zero weight and contribute nothing
/// to the belief (0/0 terms are defined as 0).
pub fn first_order_step<T: Scalar>(
    post: &PosteriorOverC<T>,
    belief: &BeliefState<T>,
    transition: &Array2<T>,
    observed_next: usize,
) -> Result<(PosteriorOverC<T>, BeliefState<T>)> {
    let n = belief.probs().len();
    if observed_next >= n {
        return Err(Error::InvalidState {
            state: observed_next,
            states: n,
        });
    }
    let predicted = transition.t().dot(belief.probs());
    observation_update(post, &predicted, observed_next, 0).map(|(p, b)| (p, BeliefState(b)))
}

/// Initialize the first-order belief from a uniform state prior refined by
/// the first observation (the recursion's base case).
pub fn first_order_init<T: Scalar>(
    post: &PosteriorOverC<T>,
    observed_first: usize,
) -> Result<(PosteriorOverC<T>, BeliefState<T>)> {
    let n = post.support()[0].dim();
    let uniform = Array1::from_elem(n, cast::<T>(1.0 / n as f64));
    observation_update(post, &uniform, observed_first, 0).map(|(p, b)| (p, BeliefState(b)))
}

/// Shared core of the first-order update: `predicted` is the pre-observation
/// state distribution (`Pᵀb`, or the prior at t = 0).
fn observation_update<T: Scalar>(
    post: &PosteriorOverC<T>,
    predicted: &Array1<T>,
    observed: usize,
    step: usize,
) -> Result<(PosteriorOverC<T>, Array1<T>)> {
    let n = predicted.len();
    let k = post.len();
    let mut log_weights = post.log_weights.clone();
    let mut likelihoods = vec![T::zero(); k];
    for (kk, c) in post.support().iter().enumerate() {
        let mut lk = T::zero();
        for i in 0..n {
            lk += c.entries()[[i, observed]] * predicted[i];
        }
        likelihoods[kk] = lk;
        log_weights[kk] = if lk > T::zero() {
            log_weights[kk] + lk.ln()
        } else {
            T::neg_infinity()
        };
    }
    normalize_log_weights(&mut log_weights, step)?;
    let mut belief = Array1::<T>::zeros(n);
    for (kk, c) in post.support().iter().enumerate() {
        let w = log_weights[kk].exp();
        if w > T::zero() && likelihoods[kk] > T::zero() {
            for i in 0..n {
                belief[i] += w * c.entries()[[i, observed]] * predicted[i] / likelihoods[kk];
            }
        }
    }
    let total: T = belief.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::InconsistentObservation { step });
    }
    belief.mapv_inplace(|v| v / total);
    Ok((post.with_log_weights(log_weights), belief))
}

/// One second-order update: reweight every support point by the entry
/// `(s̃_t, s̃_{t+1})` of its implied observed-transition matrix (evaluated at
/// the modified belief) and refresh the modified belief state.
pub fn second_order_step<T: Scalar>(
    post: &PosteriorOverC<T>,
    belief: &ModifiedBeliefState<T>,
    transition: &Array2<T>,
    observed_now: usize,
    observed_next: usize,
) -> Result<(PosteriorOverC<T>, ModifiedBeliefState<T>)> {
    let n = belief.probs().len();
    if observed_now >= n || observed_next >= n {
        return Err(Error::InvalidState {
            state: observed_now.max(observed_next),
            states: n,
        });
    }
    let k = post.len();
    let b = belief.probs();
    let mut log_weights = post.log_weights.clone();
    // per point: u = (Cᵀ b̃)_{s̃_t}; r = (C_{·,s̃_t} ∘ b̃)ᵀ P;
    // multiplier = (r · C_{·,s̃_{t+1}}) / u; belief term = Pᵀ(C_{·,s̃_t} ∘ b̃)/u
    let mut predicted = vec![Array1::<T>::zeros(n); k];
    let mut denominators = vec![T::zero(); k];
    for (kk, c) in post.support().iter().enumerate() {
        let ce = c.entries();
        let mut u = T::zero();
        let mut weighted = Array1::<T>::zeros(n);
        for j in 0..n {
            let v = ce[[j, observed_now]] * b[j];
            u += v;
            weighted[j] = v;
        }
        denominators[kk] = u;
        if u > T::zero() {
            let pred = transition.t().dot(&weighted);
            let mut numer = T::zero();
            for jj in 0..n {
                numer += pred[jj] * ce[[jj, observed_next]];
            }
            let multiplier = numer / u;
            log_weights[kk] = if multiplier > T::zero() {
                log_weights[kk] + multiplier.ln()
            } else {
                T::neg_infinity()
            };
            predicted[kk] = pred;
        } else {
            log_weights[kk] = T::neg_infinity();
        }
    }
    normalize_log_weights(&mut log_weights, 0)?;
    let mut next = Array1::<T>::zeros(n);
    for kk in 0..k {
        let w = log_weights[kk].exp();
        if w > T::zero() && denominators[kk] > T::zero() {
            for i in 0..n {
                next[i] += w * predicted[kk][i] / denominators[kk];
            }
        }
    }
    let total: T = next.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::InconsistentObservation { step: 0 });
    }
    next.mapv_inplace(|v| v / total);
    Ok((
        post.with_log_weights(log_weights),
        ModifiedBeliefState(next),
    ))
}

/// Which recursion a Bayesian run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayesOrder {
    First,
    Second,
}

/// Posterior state captured at one time step.
#[derive(Debug, Clone)]
pub struct BayesSnapshot<T: Scalar> {
    pub t: usize,
    pub weights: Vec<T>,
    pub belief: Vec<T>,
    pub mode: usize,
    pub mean: Array2<T>,
    pub entropy: T,
}

/// Output of [`run_bayes`]: periodic snapshots plus the final posterior and
/// the trajectory that produced them.
#[derive(Debug, Clone)]
pub struct BayesRun<T: Scalar> {
    pub snapshots: Vec<BayesSnapshot<T>>,
    pub posterior: PosteriorOverC<T>,
    pub trajectory: Trajectory,
}

/// Simulate a trajectory and fold the requested Bayesian recursion over it.
///
/// Actions may vary freely each step (default policy: uniform random). The
/// first-order belief is initialized by refining a uniform prior with the
/// first observation; the second-order modified belief starts uniform.
/// Snapshots are taken every `snapshot_every` observations (0 = final only)
/// plus the final step.
#[allow(clippy::too_many_arguments)]
pub fn run_bayes<T: Scalar>(
    mdp: &Mdp<T>,
    c_true: &ConfusionMatrix<T>,
    order: BayesOrder,
    policy: &ActionSource,
    steps: usize,
    init: &PosteriorInit,
    snapshot_every: usize,
    seed: u64,
) -> Result<BayesRun<T>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let trajectory = simulate(
        mdp,
        c_true,
        policy,
        steps,
        &StateDistribution::uniform(mdp.states()),
        seed,
    )?;
    let obs = trajectory.observations();
    let acts = trajectory.actions();

    let mut post = init_posterior::<T>(init)?;
    let mut snapshots = Vec::new();
    let snap = |post: &PosteriorOverC<T>, belief: &Array1<T>, t: usize| BayesSnapshot {
        t,
        weights: post.weights(),
        belief: belief.to_vec(),
        mode: post.mode(),
        mean: post.mean_matrix(),
        entropy: post.entropy(),
    };
    let due = |t: usize| snapshot_every > 0 && t.is_multiple_of(snapshot_every);

    match order {
        BayesOrder::First => {
            let (p2, mut belief) = first_order_init(&post, obs[0])?;
            post = p2;
            if due(0) {
                snapshots.push(snap(&post, belief.probs(), 0));
            }
            for t in 0..steps {
                let p = mdp.transition(acts[t])?;
                let (p2, b2) = first_order_step(&post, &belief, p, obs[t + 1])?;
                post = p2;
                belief = b2;
                if due(t + 1) && t + 1 < steps {
                    snapshots.push(snap(&post, belief.probs(), t + 1));
                }
            }
            snapshots.push(snap(&post, belief.probs(), steps));
        }
        BayesOrder::Second => {
            let mut belief = ModifiedBeliefState::uniform(mdp.states());
            if due(0) {
                snapshots.push(snap(&post, belief.probs(), 0));
            }
            for t in 0..steps {
                let p = mdp.transition(acts[t])?;
                let (p2, b2) = second_order_step(&post, &belief, p, obs[t], obs[t + 1])?;
                post = p2;
                belief = b2;
                if due(t + 1) && t + 1 < steps {
                    snapshots.push(snap(&post, belief.probs(), t + 1));
                }
            }
            snapshots.push(snap(&post, belief.probs(), steps));
        }
    }
    Ok(BayesRun {
        snapshots,
        posterior: post,
        trajectory,
    })
}

/// Weight-vector sanity check used by long-run drift tests.
pub fn weight_sum_error<T: Scalar>(post: &PosteriorOverC<T>) -> T {
    let sum: T = post.weights().iter().copied().sum();
    (sum - T::one()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};

    #[test]
    fn grid_init_counts_points_and_weights() {
        let post =
            init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: 101 }).unwrap();
        assert_eq!(post.len(), 10201);
        let w = post.weights();
        assert_abs_diff_eq!(w[0], 1.0 / 10201.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn resolution_two_grid_uses_cell_centers() {
        let post = init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: 2 }).unwrap();
        let grid = post.grid().unwrap();
        let pts: Vec<(f64, f64)> = grid.points.clone();
        assert_eq!(
            pts,
            vec![(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
        );
    }

    #[test]
    fn singleton_ensemble_has_weight_one() {
        let post = init_posterior::<f64>(&PosteriorInit::Ensemble {
            count: 1,
            states: 3,
            seed: 4,
        })
        .unwrap();
        assert_eq!(post.len(), 1);
        assert_abs_diff_eq!(post.weights()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn noiseless_point_mass_filter_tracks_the_state() {
        // single support point = identity, deterministic transition
        let support = init_posterior::<f64>(&PosteriorInit::Ensemble {
            count: 1,
            states: 2,
            seed: 0,
        })
        .unwrap();
        // replace by a posterior whose only support point is the identity
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![ConfusionMatrix::identity(2)],
                grid: None,
            }),
            log_weights: support.log_weights.clone(),
        };
        let belief = BeliefState::new(arr1(&[1.0, 0.0])).unwrap();
        let p = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let (post2, b2) = first_order_step(&post, &belief, &p, 1).unwrap();
        assert_abs_diff_eq!(post2.weights()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b2.probs()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_likelihood_support_points_are_eliminated() {
        let c_ok = ConfusionMatrix::new(arr2(&[[0.5, 0.5], [0.5, 0.5]])).unwrap();
        let c_dead = ConfusionMatrix::new(arr2(&[[1.0, 0.0], [1.0, 0.0]])).unwrap();
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c_ok, c_dead],
                grid: None,
            }),
            log_weights: vec![(0.5f64).ln(), (0.5f64).ln()],
        };
        let belief = BeliefState::uniform(2);
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        // observing symbol 1 kills the second point (its column 1 is zero)
        let (post2, _) = first_order_step(&post, &belief, &p, 1).unwrap();
        let w = post2.weights();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-15);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn uniform_prediction_weights_by_column_mean() {
        // uniform belief and uniform transition rows make the likelihood of a
        // support point proportional to the observed column's mean
        let c1 = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let c2 = ConfusionMatrix::new(arr2(&[[0.6, 0.4], [0.2, 0.8]])).unwrap();
        let c3 = ConfusionMatrix::new(arr2(&[[0.5, 0.5], [0.5, 0.5]])).unwrap();
        let cols: Vec<f64> = [&c1, &c2, &c3]
            .iter()
            .map(|c| (c.entries()[[0, 1]] + c.entries()[[1, 1]]) / 2.0)
            .collect();
        let post = PosteriorOverC::from_support(vec![c1, c2, c3], &[1.0 / 3.0; 3]).unwrap();
        let belief = BeliefState::uniform(2);
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let (post2, _) = first_order_step(&post, &belief, &p, 1).unwrap();
        let w = post2.weights();
        let total: f64 = cols.iter().sum();
        for (k, expect) in cols.iter().enumerate() {
            assert_abs_diff_eq!(w[k], expect / total, epsilon = 1e-14);
        }
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let c_dead = ConfusionMatrix::new(arr2(&[[1.0, 0.0], [1.0, 0.0]])).unwrap();
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c_dead],
                grid: None,
            }),
            log_weights: vec![0.0],
        };
        let belief = BeliefState::uniform(2);
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        assert!(matches!(
            first_order_step(&post, &belief, &p, 1),
            Err(Error::InconsistentObservation { .. })
        ));
    }

    #[test]
    fn second_order_multiplier_reduces_to_transition_under_identity() {
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![ConfusionMatrix::identity(2)],
                grid: None,
            }),
            log_weights: vec![0.0f64],
        };
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let belief = ModifiedBeliefState::new(arr1(&[0.5, 0.5])).unwrap();
        // the weight multiplier is P[s̃_t, s̃_{t+1}]; with one support point the
        // weight stays 1 and the belief becomes the conditioned prediction
        let (post2, b2) = second_order_step(&post, &belief, &p, 0, 1).unwrap();
        assert_abs_diff_eq!(post2.weights()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b2.probs()[0], 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(b2.probs()[1], 0.7, epsilon = 1e-14);
    }

    #[test]
    fn second_order_matches_the_observed_transition_identity() {
        // with the modified belief at the stationary distribution, the weight
        // multiplier equals the exact observed-transition entry
        let c1 = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let p = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let pi = crate::mdp::stationary_distribution(&p).unwrap();
        let q = crate::mdp::exact_observed_transition(&c1, &pi, &p).unwrap();
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c1],
                grid: None,
            }),
            log_weights: vec![0.0f64],
        };
        for s_now in 0..2 {
            for s_next in 0..2 {
                let belief = ModifiedBeliefState::new(pi.probs().clone()).unwrap();
                let before = post.clone();
                // the multiplier is recoverable from the log-weight shift of a
                // second, constant-likelihood reference point; here simply
                // recompute through the identity
                let (_post2, _b2) = second_order_step(&before, &belief, &p, s_now, s_next).unwrap();
                let expect = q.entries()[[s_now, s_next]];
                // single support point: weight stays 1; verify via raw formula
                let ce = post.support()[0].entries();
                let mut u = 0.0;
                let mut weighted = [0.0f64; 2];
                for j in 0..2 {
                    weighted[j] = ce[[j, s_now]] * pi.probs()[j];
                    u += weighted[j];
                }
                let mut numer = 0.0;
                for jj in 0..2 {
                    let pred: f64 = (0..2).map(|j| weighted[j] * p[[j, jj]]).sum();
                    numer += pred * ce[[jj, s_next]];
                }
                assert_abs_diff_eq!(numer / u, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn equal_likelihood_support_points_keep_their_ratio() {
        // two support points generating identical observed-transition entries
        let c = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let mirrored = ConfusionMatrix::new(arr2(&[[0.3, 0.7], [0.9, 0.1]])).unwrap();
        let post = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c, mirrored],
                grid: None,
            }),
            log_weights: vec![(0.7f64).ln(), (0.3f64).ln()],
        };
        let p = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let belief = ModifiedBeliefState::uniform(2);
        let (post2, _) = second_order_step(&post, &belief, &p, 0, 1).unwrap();
        let w = post2.weights();
        assert_abs_diff_eq!(w[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_support_point_changes_nothing() {
        let c1 = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let c2 = ConfusionMatrix::new(arr2(&[[0.6, 0.4], [0.2, 0.8]])).unwrap();
        let base = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c1.clone()],
                grid: None,
            }),
            log_weights: vec![0.0f64],
        };
        let padded = PosteriorOverC {
            support: Arc::new(Support {
                matrices: vec![c1, c2],
                grid: None,
            }),
            log_weights: vec![0.0f64, f64::NEG_INFINITY],
        };
        let belief = BeliefState::uniform(2);
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let (pa, ba) = first_order_step(&base, &belief, &p, 1).unwrap();
        let (pb, bb) = first_order_step(&padded, &belief, &p, 1).unwrap();
        assert_abs_diff_eq!(pa.weights()[0], pb.weights()[0], epsilon = 1e-15);
        assert_eq!(pb.weights()[1], 0.0);
        for i in 0..2 {
            assert_abs_diff_eq!(ba.probs()[i], bb.probs()[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn run_bayes_noiseless_grid_mode_sits_at_the_identity_corner() {
        // identity truth: the grid cell nearest (α, β) = (0, 0) must win
        let mdp = Mdp::new(vec![
            arr2(&[[0.3, 0.7], [0.7, 0.3]]),
            arr2(&[[0.9, 0.1], [0.5, 0.5]]),
        ])
        .unwrap();
        let c = ConfusionMatrix::identity(2);
        let run = run_bayes(
            &mdp,
            &c,
            BayesOrder::First,
            &ActionSource::UniformRandom,
            400,
            &PosteriorInit::GridAlphaBeta { resolution: 11 },
            0,
            9,
        )
        .unwrap();
        let grid = run.posterior.grid().unwrap();
        let (alpha, beta) = grid.points[run.posterior.mode()];
        assert!(alpha < 0.1 && beta < 0.1, "mode at ({alpha},{beta})");
    }

    #[test]
    fn support_is_shared_and_immutable_across_steps() {
        let post = init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: 5 }).unwrap();
        let belief = BeliefState::uniform(2);
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let (post2, _) = first_order_step(&post, &belief, &p, 0).unwrap();
        assert!(post.shares_support_with(&post2));
    }
}
