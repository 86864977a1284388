//! Multi-start minimization of the consistency loss over row-stochastic
//! matrices.
//!
//! Each row of the candidate lives on the probability simplex through an
//! unconstrained softmax map, so a quasi-Newton method can run without
//! explicit constraints. The loss is multimodal (two-state systems generically
//! admit a mirrored second solution), so the minimizer runs from many starts,
//! deduplicates the minima it finds, and reports all of them with residuals
//! instead of pretending the best one is unique.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::ConfusionMatrix;
use crate::scalar::{cast, Scalar};

use super::loss::{loss_and_gradient, validate_data, LossData};
use super::{Candidate, EstimationDiagnostics, EstimationResult};

/// Options of [`minimize_loss`].
#[derive(Debug, Clone)]
pub struct MinimizeOptions<T: Scalar> {
    /// Random starts in addition to the identity-biased and uniform starts.
    pub starts: usize,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Convergence threshold on the ∞-norm of the parameter-space gradient.
    pub tol_grad: T,
    /// Residual threshold below which a candidate counts as a feasible
    /// solution of the matrix equation.
    pub tol_loss: T,
    /// Seed for the start sampler.
    pub seed: u64,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            starts: 32,
            max_iters: 500,
            tol_grad: cast(1e-10),
            tol_loss: cast(1e-8),
            seed: 0,
        }
    }
}

impl<T: Scalar> MinimizeOptions<T> {
    /// Residual threshold matched to the sampling error of an empirical `Q̂`
    /// estimated from `t` transitions: `10 n² / t`.
    pub fn tol_loss_for_sample_size(mut self, n: usize, t: usize) -> Self {
        self.tol_loss = cast::<T>(10.0 * (n * n) as f64 / t.max(1) as f64);
        self
    }
}

/// Candidate-matrix deduplication radius (∞-norm).
const DEDUP_RADIUS: f64 = 1e-3;

/// Minimize the averaged consistency loss and return every distinct local
/// minimum found, sorted by residual. `selected` is set only when exactly one
/// candidate passes the feasibility threshold; ties are never auto-broken.
pub fn minimize_loss<T: Scalar>(
    data: &LossData<T>,
    opts: &MinimizeOptions<T>,
) -> Result<EstimationResult<T>> {
    let n = validate_data(data)?;
    let dim = n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let objective = |theta: &[T], grad: &mut [T]| -> T {
        let c = softmax_rows(theta, n);
        let (loss, g_c) = loss_and_gradient(&c, data);
        chain_rule_softmax(&c, &g_c, grad);
        loss
    };

    let mut found: Vec<(Array2<T>, T)> = Vec::new();
    let total_starts = opts.starts + 2;
    for start in 0..total_starts {
        let theta0 = match start {
            0 => identity_biased_start::<T>(n),
            1 => vec![T::zero(); dim],
            _ => random_simplex_start::<T>(n, &mut rng),
        };
        if let Some((theta, loss)) = lbfgs(&objective, theta0, opts.max_iters, opts.tol_grad) {
            if loss.is_finite() {
                found.push((softmax_rows(&theta, n), loss));
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoStartConverged);
    }

    // deduplicate minima; keep the lowest-loss representative of each cluster
    found.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let radius = cast::<T>(DEDUP_RADIUS);
    let mut unique: Vec<(Array2<T>, T)> = Vec::new();
    for (c, loss) in found {
        if !unique.iter().any(|(u, _)| inf_dist(u, &c) <= radius) {
            unique.push((c, loss));
        }
    }

    // deterministic order: residual, then distance to the uniform matrix,
    // then lexicographic entries
    let uniform = cast::<T>(1.0 / n as f64);
    unique.sort_by(|(ca, la), (cb, lb)| {
        la.partial_cmp(lb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let da = ca
                    .iter()
                    .map(|v| (*v - uniform).abs())
                    .fold(T::zero(), T::max);
                let db = cb
                    .iter()
                    .map(|v| (*v - uniform).abs())
                    .fold(T::zero(), T::max);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| {
                for (a, b) in ca.iter().zip(cb.iter()) {
                    match a.partial_cmp(b) {
                        Some(std::cmp::Ordering::Equal) | None => continue,
                        Some(o) => return o,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });

    let mut candidates = Vec::with_capacity(unique.len());
    for (c, loss) in unique {
        candidates.push(Candidate {
            matrix: ConfusionMatrix::new(c)?,
            residual: loss,
            feasible: loss <= opts.tol_loss,
        });
    }
    let feasible_count = candidates.iter().filter(|c| c.feasible).count();
    let selected = if feasible_count == 1 {
        candidates.iter().position(|c| c.feasible)
    } else {
        None
    };

    let per_action_loss = {
        let best = &candidates[0].matrix;
        data.iter()
            .map(|(a, d)| {
                (
                    *a,
                    super::loss::loss_single(best, &d.stationary, &d.transition, &d.q_hat),
                )
            })
            .collect()
    };

    Ok(EstimationResult {
        candidates,
        selected,
        diagnostics: EstimationDiagnostics {
            per_action_loss,
            identifiability: None,
            partitions: Vec::new(),
        },
    })
}

/// Row-wise softmax from flat parameters (row-major) with max-shift.
pub fn softmax_rows<T: Scalar>(theta: &[T], n: usize) -> Array2<T> {
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        let row = &theta[i * n..(i + 1) * n];
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (j, t) in row.iter().enumerate() {
            let e = (*t - m).exp();
            c[[i, j]] = e;
            sum += e;
        }
        for j in 0..n {
            c[[i, j]] /= sum;
        }
    }
    c
}

/// Pull an ambient matrix gradient back through the row-wise softmax:
/// `dL/dθ_ik = C_ik (G_ik − Σ_j G_ij C_ij)`.
fn chain_rule_softmax<T: Scalar>(c: &Array2<T>, g_c: &Array2<T>, out: &mut [T]) {
    let n = c.nrows();
    for i in 0..n {
        let mut inner = T::zero();
        for j in 0..n {
            inner += g_c[[i, j]] * c[[i, j]];
        }
        for k in 0..n {
            out[i * n + k] = c[[i, k]] * (g_c[[i, k]] - inner);
        }
    }
}

fn identity_biased_start<T: Scalar>(n: usize) -> Vec<T> {
    let off = cast::<T>(0.01 / (n.max(2) - 1) as f64);
    let diag = T::one() - off * cast::<T>((n - 1) as f64);
    let mut theta = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            theta[i * n + j] = if i == j { diag.ln() } else { off.ln() };
        }
    }
    theta
}

fn random_simplex_start<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    // theta = ln(row) with rows uniform on the simplex (normalized exponentials)
    let mut theta = vec![T::zero(); n * n];
    for i in 0..n {
        let mut sum = 0.0f64;
        let mut vals = vec![0.0f64; n];
        for v in vals.iter_mut() {
            let u: f64 = rng.gen::<f64>().max(1e-300);
            *v = -u.ln();
            sum += *v;
        }
        for (j, v) in vals.iter().enumerate() {
            theta[i * n + j] = cast::<T>((v / sum).max(1e-12).ln());
        }
    }
    theta
}

fn inf_dist<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).abs())
        .fold(T::zero(), T::max)
}

/// Limited-memory BFGS with Armijo backtracking. Returns the final point and
/// loss, or `None` when the objective is non-finite at the start.
fn lbfgs<T: Scalar>(
    objective: &impl Fn(&[T], &mut [T]) -> T,
    mut x: Vec<T>,
    max_iters: usize,
    tol_grad: T,
) -> Option<(Vec<T>, T)> {
    const HISTORY: usize = 8;
    let dim = x.len();
    let mut g = vec![T::zero(); dim];
    let mut f = objective(&x, &mut g);
    if !f.is_finite() {
        return None;
    }
    let loss_floor = cast::<T>(1e-26).max(T::epsilon() * T::epsilon());
    let mut s_hist: Vec<Vec<T>> = Vec::new();
    let mut y_hist: Vec<Vec<T>> = Vec::new();
    let mut rho_hist: Vec<T> = Vec::new();

    for _ in 0..max_iters {
        let g_inf = g.iter().map(|v| v.abs()).fold(T::zero(), T::max);
        if g_inf <= tol_grad || f <= loss_floor {
            break;
        }
        // two-loop recursion
        let mut dir: Vec<T> = g.iter().map(|v| -*v).collect();
        let k = s_hist.len();
        let mut alphas = vec![T::zero(); k];
        for i in (0..k).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &dir);
            alphas[i] = a;
            axpy(&mut dir, -a, &y_hist[i]);
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            if gamma.is_finite() && gamma > T::zero() {
                for d in dir.iter_mut() {
                    *d *= gamma;
                }
            }
        }
        for i in 0..k {
            let b = rho_hist[i] * dot(&y_hist[i], &dir);
            axpy(&mut dir, alphas[i] - b, &s_hist[i]);
        }
        let mut descent = dot(&g, &dir);
        let is_descent = descent.partial_cmp(&T::zero()) == Some(std::cmp::Ordering::Less);
        if !is_descent {
            dir = g.iter().map(|v| -*v).collect();
            descent = dot(&g, &dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Armijo backtracking
        let c1 = cast::<T>(1e-4);
        let mut step = T::one();
        let mut accepted = false;
        let mut x_new = vec![T::zero(); dim];
        let mut g_new = vec![T::zero(); dim];
        let mut f_new = f;
        for _ in 0..45 {
            for i in 0..dim {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + c1 * step * descent {
                accepted = true;
                break;
            }
            step *= cast::<T>(0.5);
        }
        if !accepted {
            break;
        }

        let s: Vec<T> = x_new.iter().zip(x.iter()).map(|(a, b)| *a - *b).collect();
        let y: Vec<T> = g_new.iter().zip(g.iter()).map(|(a, b)| *a - *b).collect();
        let ys = dot(&y, &s);
        if ys > cast::<T>(1e-13) {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(T::one() / ys);
            s_hist.push(s);
            y_hist.push(y);
        }
        x = x_new.clone();
        g = g_new.clone();
        f = f_new;
    }
    Some((x, f))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| *x * *y).sum()
}

fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    for (o, v) in out.iter_mut().zip(x.iter()) {
        *o += a * *v;
    }
}
