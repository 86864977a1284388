//! Seeded trajectory simulation and empirical observed-transition estimation.
//!
//! Reproducibility contract: a trajectory is fully determined by
//! `(mdp, confusion, action source, steps, initial, seed)`. State and
//! observation draws come from one counter-based stream in the fixed order
//! `s_0, s̃_0, s_1, s̃_1, …`; stochastic policies draw from a second,
//! independent stream derived from the same seed, so adding or removing policy
//! randomness never perturbs the state draws.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ConfusionMatrix, Mdp, ObservedTransitionMatrix, StateDistribution};
use crate::scalar::Scalar;

/// Where actions come from during simulation.
#[derive(Debug, Clone)]
pub enum ActionSource {
    /// The same action at every step.
    Repeat(usize),
    /// An explicit per-step schedule; must cover every simulated step.
    Schedule(Vec<usize>),
    /// A repeating cycle of actions.
    Cycle(Vec<usize>),
    /// Uniformly random action each step (drawn from the policy stream).
    UniformRandom,
}

impl ActionSource {
    fn action_at(&self, t: usize, actions: usize, policy_rng: &mut ChaCha8Rng) -> Result<usize> {
        let a = match self {
            ActionSource::Repeat(a) => *a,
            ActionSource::Schedule(s) => *s.get(t).ok_or_else(|| {
                Error::InvalidParameter(format!("action schedule ends before step {t}"))
            })?,
            ActionSource::Cycle(c) => {
                if c.is_empty() {
                    return Err(Error::InvalidParameter("empty action cycle".into()));
                }
                c[t % c.len()]
            }
            ActionSource::UniformRandom => policy_rng.gen_range(0..actions),
        };
        if a >= actions {
            return Err(Error::InvalidAction { action: a, actions });
        }
        Ok(a)
    }
}

/// One simulated record: true state, observed state, and the action applied
/// at this step (`None` on the final record).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub state: usize,
    pub observed: usize,
    pub action: Option<usize>,
}

/// A simulated trajectory of `T` transitions: `T + 1` states and
/// observations, `T` actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    states: Vec<usize>,
    observations: Vec<usize>,
    actions: Vec<usize>,
    state_count: usize,
    action_count: usize,
    seed: u64,
}

impl Trajectory {
    /// Assemble a trajectory from raw sequences, checking ranges and lengths.
    pub fn from_parts(
        states: Vec<usize>,
        observations: Vec<usize>,
        actions: Vec<usize>,
        state_count: usize,
        action_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if states.len() != observations.len() || states.len() != actions.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: observations.len().min(actions.len() + 1),
            });
        }
        for &s in states.iter().chain(observations.iter()) {
            if s >= state_count {
                return Err(Error::InvalidState {
                    state: s,
                    states: state_count,
                });
            }
        }
        for &a in &actions {
            if a >= action_count {
                return Err(Error::InvalidAction {
                    action: a,
                    actions: action_count,
                });
            }
        }
        Ok(Self {
            states,
            observations,
            actions,
            state_count,
            action_count,
            seed,
        })
    }

    /// Number of transitions `T` (records number `T + 1`).
    pub fn transitions(&self) -> usize {
        self.actions.len()
    }

    /// Number of states of the generating MDP.
    pub fn state_count(&self) -> usize {
        self.state_count
    }

    /// Number of actions of the generating MDP.
    pub fn action_count(&self) -> usize {
        self.action_count
    }

    /// Seed the trajectory was generated with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// True-state sequence (`T + 1` entries).
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Observed-state sequence (`T + 1` entries).
    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    /// Action sequence (`T` entries).
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Iterate over step records with contiguous indices from 0.
    pub fn steps(&self) -> impl Iterator<Item = TrajectoryStep> + '_ {
        (0..self.states.len()).map(move |t| TrajectoryStep {
            t,
            state: self.states[t],
            observed: self.observations[t],
            action: self.actions.get(t).copied(),
        })
    }
}

/// Draw an index from a categorical row. The uniform variate is always an
/// `f64`, so draws are bit-identical across scalar types.
fn sample_index<T: Scalar>(
    rng: &mut ChaCha8Rng,
    probs: impl Iterator<Item = T>,
    len: usize,
) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0f64;
    let mut last_positive = 0usize;
    for (i, p) in probs.enumerate() {
        let p = p.to_f64().unwrap_or(0.0);
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding pushed the cumulative sum below 1: return the last usable index
    let _ = len;
    last_positive
}

/// Simulate a trajectory of `steps` transitions.
///
/// `s_0 ~ initial`, `s̃_t ~ C[s_t]`, `s_{t+1} ~ P(a_t)[s_t]`. Equal inputs
/// (including the seed) produce bit-identical trajectories.
pub fn simulate<T: Scalar>(
    mdp: &Mdp<T>,
    confusion: &ConfusionMatrix<T>,
    source: &ActionSource,
    steps: usize,
    initial: &StateDistribution<T>,
    seed: u64,
) -> Result<Trajectory> {
    let n = mdp.states();
    if confusion.dim() != n || initial.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: confusion.dim().min(initial.len()),
        });
    }
    let mut state_rng = ChaCha8Rng::seed_from_u64(seed);
    state_rng.set_stream(0);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    policy_rng.set_stream(1);

    let mut states = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);

    let mut s = sample_index(&mut state_rng, initial.probs().iter().copied(), n);
    states.push(s);
    observations.push(sample_index(
        &mut state_rng,
        confusion.entries().row(s).iter().copied(),
        n,
    ));
    for t in 0..steps {
        let a = source.action_at(t, mdp.actions(), &mut policy_rng)?;
        actions.push(a);
        let p = mdp.transition(a)?;
        s = sample_index(&mut state_rng, p.row(s).iter().copied(), n);
        states.push(s);
        observations.push(sample_index(
            &mut state_rng,
            confusion.entries().row(s).iter().copied(),
            n,
        ));
    }
    Trajectory::from_parts(states, observations, actions, n, mdp.actions(), seed)
}

/// Count observed-state pairs `(s̃_t, s̃_{t+1})` with `a_t = action` for
/// `t ∈ window`, and normalize per row. Rows never visited stay undefined.
/// The window is clamped to the available transitions.
pub fn empirical_observed_transition<T: Scalar>(
    trajectory: &Trajectory,
    action: usize,
    window: std::ops::Range<usize>,
) -> ObservedTransitionMatrix<T> {
    let n = trajectory.state_count();
    let hi = window.end.min(trajectory.transitions());
    let lo = window.start.min(hi);
    let mut counts = Array2::<u64>::zeros((n, n));
    let obs = trajectory.observations();
    let acts = trajectory.actions();
    for t in lo..hi {
        if acts[t] == action {
            counts[[obs[t], obs[t + 1]]] += 1;
        }
    }
    ObservedTransitionMatrix::from_counts(&counts).expect("square count matrix is always accepted")
}

/// Deterministically derive an independent stream seed, used to give each
/// action block or scenario job its own RNG stream.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn cycle_mdp() -> Mdp<f64> {
        Mdp::new(vec![arr2(&[[0.0, 1.0], [1.0, 0.0]])]).unwrap()
    }

    #[test]
    fn noiseless_cycle_observes_true_states() {
        let mdp = cycle_mdp();
        let c = ConfusionMatrix::identity(2);
        let init = StateDistribution::point_mass(2, 0).unwrap();
        let traj = simulate(&mdp, &c, &ActionSource::Repeat(0), 3, &init, 7).unwrap();
        assert_eq!(traj.states(), &[0, 1, 0, 1]);
        assert_eq!(traj.observations(), traj.states());
    }

    #[test]
    fn zero_steps_yields_one_record() {
        let mdp = cycle_mdp();
        let c = ConfusionMatrix::identity(2);
        let init = StateDistribution::uniform(2);
        let traj = simulate(&mdp, &c, &ActionSource::Repeat(0), 0, &init, 1).unwrap();
        assert_eq!(traj.transitions(), 0);
        assert_eq!(traj.states().len(), 1);
        let rec: Vec<_> = traj.steps().collect();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].action, None);
    }

    #[test]
    fn equal_seeds_are_bit_identical_and_different_seeds_differ() {
        let mdp = Mdp::new(vec![arr2(&[[0.3, 0.7], [0.7, 0.3]])]).unwrap();
        let c = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let init = StateDistribution::uniform(2);
        let a = simulate(&mdp, &c, &ActionSource::Repeat(0), 500, &init, 42).unwrap();
        let b = simulate(&mdp, &c, &ActionSource::Repeat(0), 500, &init, 42).unwrap();
        assert_eq!(a, b);
        let d = simulate(&mdp, &c, &ActionSource::Repeat(0), 500, &init, 43).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn invalid_action_in_schedule_is_rejected() {
        let mdp = cycle_mdp();
        let c = ConfusionMatrix::identity(2);
        let init = StateDistribution::uniform(2);
        let err = simulate(&mdp, &c, &ActionSource::Schedule(vec![3]), 1, &init, 0);
        assert!(matches!(err, Err(Error::InvalidAction { action: 3, .. })));
    }

    #[test]
    fn observation_noise_frequency_matches_confusion_row() {
        // empirical frequency of observing 1 while in state 0 must sit within
        // a 3-sigma binomial band around C[0][1] = 0.1
        let mdp = Mdp::new(vec![arr2(&[[0.3, 0.7], [0.7, 0.3]])]).unwrap();
        let c = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let init = StateDistribution::uniform(2);
        let traj = simulate(&mdp, &c, &ActionSource::Repeat(0), 100_000, &init, 5).unwrap();
        let mut in0 = 0u64;
        let mut mis = 0u64;
        for step in traj.steps() {
            if step.state == 0 {
                in0 += 1;
                if step.observed == 1 {
                    mis += 1;
                }
            }
        }
        let freq = mis as f64 / in0 as f64;
        let sigma = (0.1 * 0.9 / in0 as f64).sqrt();
        assert!(
            (freq - 0.1).abs() <= 3.0 * sigma,
            "freq {freq} outside binomial band"
        );
    }

    #[test]
    fn empirical_counts_match_hand_tally() {
        // observed pairs (0,1), (1,0), (0,1) under a single action
        let traj =
            Trajectory::from_parts(vec![0, 1, 0, 1], vec![0, 1, 0, 1], vec![0, 0, 0], 2, 1, 0)
                .unwrap();
        let q = empirical_observed_transition::<f64>(&traj, 0, 0..3);
        assert_eq!(q.row_counts().unwrap(), &[2, 1]);
        assert_eq!(q.entries()[[0, 1]], 1.0);
        assert_eq!(q.entries()[[1, 0]], 1.0);
        assert!(q.is_row_defined(0) && q.is_row_defined(1));
    }

    #[test]
    fn empty_window_leaves_all_rows_undefined() {
        let traj = Trajectory::from_parts(vec![0], vec![0], vec![], 2, 1, 0).unwrap();
        let q = empirical_observed_transition::<f64>(&traj, 0, 0..0);
        assert_eq!(q.row_counts().unwrap(), &[0, 0]);
        assert!(!q.is_row_defined(0));
    }

    #[test]
    fn empirical_transition_frequencies_converge_to_rows() {
        let p = arr2(&[[0.3, 0.7], [0.7, 0.3]]);
        let mdp = Mdp::new(vec![p.clone()]).unwrap();
        let c = ConfusionMatrix::identity(2);
        let init = StateDistribution::uniform(2);
        let traj = simulate(&mdp, &c, &ActionSource::Repeat(0), 100_000, &init, 11).unwrap();
        let q = empirical_observed_transition::<f64>(&traj, 0, 0..traj.transitions());
        for i in 0..2 {
            let count = q.row_counts().unwrap()[i] as f64;
            for j in 0..2 {
                let sigma = (p[[i, j]] * (1.0 - p[[i, j]]) / count).sqrt();
                assert!((q.entries()[[i, j]] - p[[i, j]]).abs() <= 4.0 * sigma);
            }
        }
    }

    #[test]
    fn derived_seeds_are_spread() {
        let s: Vec<u64> = (0..4).map(|i| derive_seed(0, i)).collect();
        assert!(s.windows(2).all(|w| w[0] != w[1]));
    }
}
