//! Closed-form solution of the two-state matrix equation.
//!
//! With `X = [[x, 1−x], [y, 1−y]]` the consistency equation
//! `Xᵀ diag(π) P X = diag(Xᵀπ) Q` reduces to two quadratics in `(x, y)` whose
//! quadratic parts are exact negatives of each other, so their sum is a line.
//! Substituting the line back into either quadratic leaves one univariate
//! quadratic: at most two intersection points. On data generated by an actual
//! confusion matrix the two points are the generating `(c, d)` and its
//! mirrored companion, which depends only on the stationary distribution.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mdp::{ObservedTransitionMatrix, StateDistribution};
use crate::scalar::{cast, strict_tol, Scalar};

/// Solution set of the two-state system: the in-range intersection points,
/// any out-of-range algebraic roots (reported, never selected), and a
/// degeneracy flag for coinciding roots.
#[derive(Debug, Clone)]
pub struct TwoStateSolutionSet<T: Scalar> {
    /// Intersection points inside `[0,1]²`, sorted by `(x, y)`.
    pub solutions: Vec<(T, T)>,
    /// Real roots falling outside the probability square.
    pub infeasible: Vec<(T, T)>,
    /// Set when the two algebraic roots coincide.
    pub degenerate: bool,
}

impl<T: Scalar> TwoStateSolutionSet<T> {
    fn from_roots(roots: Vec<(T, T)>) -> Self {
        let pad = cast::<T>(1e-9).max(strict_tol::<T>());
        let mut solutions = Vec::new();
        let mut infeasible = Vec::new();
        for (x, y) in roots.iter().copied() {
            let lo = -pad;
            let hi = T::one() + pad;
            if x >= lo && x <= hi && y >= lo && y <= hi {
                solutions.push((
                    x.max(T::zero()).min(T::one()),
                    y.max(T::zero()).min(T::one()),
                ));
            } else {
                infeasible.push((x, y));
            }
        }
        // a double root computed through a float-zero discriminant splits by
        // about sqrt(machine epsilon)
        let coincide = cast::<T>(1e-6).max(T::epsilon().sqrt() * cast(8.0));
        let mut degenerate = false;
        if roots.len() == 2 {
            let dx = (roots[0].0 - roots[1].0).abs();
            let dy = (roots[0].1 - roots[1].1).abs();
            if dx.max(dy) <= coincide {
                degenerate = true;
                solutions.dedup_by(|a, b| (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= coincide);
            }
        }
        sort_points(&mut solutions);
        sort_points(&mut infeasible);
        Self {
            solutions,
            infeasible,
            degenerate,
        }
    }
}

fn sort_points<T: Scalar>(points: &mut [(T, T)]) {
    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// The mirrored second root implied by `(c, d)` and the stationary mass
/// `α = π_1`: `(2d − c + 2αc − 2αd, d + 2αc − 2αd)`. Applying the map twice
/// returns the original point; it does not depend on the transition entries.
pub fn spurious_solution<T: Scalar>(c: T, d: T, alpha: T) -> (T, T) {
    let two = cast::<T>(2.0);
    let shift = two * alpha * (c - d);
    (two * d - c + shift, d + shift)
}

/// Solve the two-state system for the first-column parameters `(x, y)` of the
/// candidate matrix, given the stationary distribution, transition matrix and
/// observed-transition matrix of one action.
pub fn solve_two_state<T: Scalar>(
    pi: &StateDistribution<T>,
    p: &Array2<T>,
    q: &ObservedTransitionMatrix<T>,
) -> Result<TwoStateSolutionSet<T>> {
    if pi.len() != 2 || p.nrows() != 2 || p.ncols() != 2 || q.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: pi.len().max(p.nrows()).max(q.dim()),
        });
    }
    let a = pi.probs()[0];
    let one_m_a = pi.probs()[1];
    if a <= T::zero() || one_m_a <= T::zero() {
        return Err(Error::ZeroMassBlock);
    }
    if !q.is_row_defined(0) || !q.is_row_defined(1) {
        // an unvisited observed state leaves one conic unconstrained
        return Err(Error::Underdetermined);
    }
    let (p11, p12, p21, p22) = (p[[0, 0]], p[[0, 1]], p[[1, 0]], p[[1, 1]]);
    let (q11, q21) = (q.entries()[[0, 0]], q.entries()[[1, 0]]);

    // first quadratic (observed column 1, row 1 of the matrix equation)
    let axx = a * p11;
    let ayy = one_m_a * p22;
    let axy = a * p12 + one_m_a * p21;
    let ax = -a * q11;
    let ay = -one_m_a * q11;
    let a0 = T::zero();
    // second quadratic (row 2) has the opposite quadratic part, so the sum of
    // the two equations is linear
    let bx = a * p11 + one_m_a * p21 + a * q21;
    let by = a * p12 + one_m_a * p22 + one_m_a * q21;
    let b0 = -q21;

    let cx = ax + bx;
    let cy = ay + by;
    let c0 = a0 + b0;

    let tol = strict_tol::<T>() * cast::<T>(10.0);
    if cx.abs() <= tol && cy.abs() <= tol {
        return Err(Error::Underdetermined);
    }

    // substitute the line into the first quadratic along the better-conditioned axis
    let roots: Vec<(T, T)> = if cy.abs() >= cx.abs() {
        let k1 = -cx / cy;
        let k0 = -c0 / cy;
        let qa = axx + ayy * k1 * k1 + axy * k1;
        let qb = (ayy * k1 * k0) * cast::<T>(2.0) + axy * k0 + ax + ay * k1;
        let qc = ayy * k0 * k0 + ay * k0 + a0;
        match solve_quadratic(qa, qb, qc) {
            None => return Err(Error::Underdetermined),
            Some(xs) => xs.into_iter().map(|x| (x, k1 * x + k0)).collect(),
        }
    } else {
        let k1 = -cy / cx;
        let k0 = -c0 / cx;
        let qa = ayy + axx * k1 * k1 + axy * k1;
        let qb = (axx * k1 * k0) * cast::<T>(2.0) + axy * k0 + ay + ax * k1;
        let qc = axx * k0 * k0 + ax * k0 + a0;
        match solve_quadratic(qa, qb, qc) {
            None => return Err(Error::Underdetermined),
            Some(ys) => ys.into_iter().map(|y| (k1 * y + k0, y)).collect(),
        }
    };
    Ok(TwoStateSolutionSet::from_roots(roots))
}

/// Real roots of `a t² + b t + c = 0` with a numerically stable formula.
/// `None` when all coefficients vanish (continuum of solutions); an empty
/// vector when the roots are complex.
fn solve_quadratic<T: Scalar>(a: T, b: T, c: T) -> Option<Vec<T>> {
    let tol = strict_tol::<T>() * cast::<T>(10.0);
    if a.abs() <= tol {
        if b.abs() <= tol {
            return if c.abs() <= tol { None } else { Some(vec![]) };
        }
        return Some(vec![-c / b]);
    }
    let mut disc = b * b - cast::<T>(4.0) * a * c;
    if disc < T::zero() {
        // tolerate a grazing double root drowned in rounding error
        let scale = (b * b).max((cast::<T>(4.0) * a * c).abs());
        if disc >= -scale * cast::<T>(1e-9) - strict_tol::<T>() {
            disc = T::zero();
        } else {
            return Some(vec![]);
        }
    }
    let s = disc.sqrt();
    let q = if b >= T::zero() {
        -(b + s) / cast::<T>(2.0)
    } else {
        -(b - s) / cast::<T>(2.0)
    };
    let r1 = q / a;
    let r2 = if q.abs() > T::zero() { c / q } else { r1 };
    Some(vec![r1, r2])
}

/// Intersect solution sets across actions: keep points present (within `tol`
/// in the ∞-norm) in every set, averaging the matched points. A single set is
/// returned unchanged.
pub fn intersect_solutions<T: Scalar>(
    sets: &[TwoStateSolutionSet<T>],
    tol: T,
) -> Result<TwoStateSolutionSet<T>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidParameter("no solution sets to intersect".into()))?;
    if sets.len() == 1 {
        return Ok(first.clone());
    }
    let close = |a: (T, T), b: (T, T)| -> bool { (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= tol };
    let mut common: Vec<(T, T)> = Vec::new();
    for &anchor in &first.solutions {
        if common.iter().any(|&c| close(c, anchor)) {
            continue; // already matched through an earlier anchor
        }
        let mut matched = vec![anchor];
        let mut ok = true;
        for set in &sets[1..] {
            match set
                .solutions
                .iter()
                .filter(|&&p| close(p, anchor))
                .min_by(|&&p, &&q| {
                    let dp = (p.0 - anchor.0).abs().max((p.1 - anchor.1).abs());
                    let dq = (q.0 - anchor.0).abs().max((q.1 - anchor.1).abs());
                    dp.partial_cmp(&dq).unwrap_or(std::cmp::Ordering::Equal)
                }) {
                Some(&p) => matched.push(p),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let inv = cast::<T>(1.0 / matched.len() as f64);
            let x: T = matched.iter().map(|m| m.0).sum::<T>() * inv;
            let y: T = matched.iter().map(|m| m.1).sum::<T>() * inv;
            common.push((x, y));
        }
    }
    if common.is_empty() {
        return Err(Error::NoConsistentSolution);
    }
    sort_points(&mut common);
    Ok(TwoStateSolutionSet {
        solutions: common,
        infeasible: Vec::new(),
        degenerate: false,
    })
}
