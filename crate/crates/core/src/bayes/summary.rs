//! Posterior summaries: mode, mean, entropy, grid local modes, and the line
//! fit used to detect degenerate (curve-shaped) posteriors.

use ndarray::Array2;

use crate::scalar::{cast, Scalar};

use super::PosteriorOverC;

/// Point summary of a posterior.
#[derive(Debug, Clone)]
pub struct PosteriorSummary<T: Scalar> {
    /// Index of the maximum-weight support point (lowest index on ties).
    pub mode: usize,
    /// Posterior mean matrix.
    pub mean: Array2<T>,
    /// Shannon entropy of the weights.
    pub entropy: T,
    /// Grid-only: indices of weight-dominant cells over their 8-neighborhood,
    /// heaviest first, capped at `top_k`.
    pub local_modes: Vec<usize>,
}

/// Summarize a posterior. `top_k` caps the reported local modes.
pub fn posterior_summary<T: Scalar>(post: &PosteriorOverC<T>, top_k: usize) -> PosteriorSummary<T> {
    let local_modes = match post.grid() {
        Some(grid) => {
            let r = grid.resolution;
            let w = post.weights();
            let mut modes: Vec<usize> = Vec::new();
            for i in 0..r {
                for j in 0..r {
                    let k = i * r + j;
                    let mut dominant = true;
                    'scan: for di in -1i64..=1 {
                        for dj in -1i64..=1 {
                            if di == 0 && dj == 0 {
                                continue;
                            }
                            let ni = i as i64 + di;
                            let nj = j as i64 + dj;
                            if ni < 0 || nj < 0 || ni >= r as i64 || nj >= r as i64 {
                                continue;
                            }
                            if w[ni as usize * r + nj as usize] > w[k] {
                                dominant = false;
                                break 'scan;
                            }
                        }
                    }
                    if dominant && w[k] > T::zero() {
                        modes.push(k);
                    }
                }
            }
            modes.sort_by(|&a, &b| {
                w[b].partial_cmp(&w[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            modes.truncate(top_k);
            modes
        }
        None => vec![post.mode()],
    };
    PosteriorSummary {
        mode: post.mode(),
        mean: post.mean_matrix(),
        entropy: post.entropy(),
        local_modes,
    }
}

/// Orthogonal least-squares line fit through the heaviest grid cells.
#[derive(Debug, Clone)]
pub struct LineFit<T: Scalar> {
    /// RMS orthogonal distance of the selected cell centers to the fitted
    /// line, in parameter units (multiply by the resolution for cell widths).
    pub rms_residual: T,
    /// Unit direction of the fitted line in `(α, β)` coordinates.
    pub direction: (T, T),
    /// Centroid of the selected cells.
    pub centroid: (T, T),
    /// Number of cells used in the fit.
    pub cells_used: usize,
}

/// Fit a line through the top-weight grid cells: cells are ranked by weight
/// and taken (heaviest first) until they jointly hold `mass_fraction` of the
/// posterior mass; the fit is unweighted total least squares on the selected
/// cell centers. Returns `None` for non-grid posteriors or fewer than two
/// selected cells.
pub fn grid_line_fit<T: Scalar>(post: &PosteriorOverC<T>, mass_fraction: T) -> Option<LineFit<T>> {
    let grid = post.grid()?;
    let w = post.weights();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        w[b].partial_cmp(&w[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected = Vec::new();
    let mut mass = T::zero();
    for k in order {
        selected.push(grid.points[k]);
        mass += w[k];
        if mass >= mass_fraction {
            break;
        }
    }
    if selected.len() < 2 {
        return None;
    }
    let inv = cast::<T>(1.0 / selected.len() as f64);
    let cx: T = selected.iter().map(|p| p.0).sum::<T>() * inv;
    let cy: T = selected.iter().map(|p| p.1).sum::<T>() * inv;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (x, y) in &selected {
        let dx = *x - cx;
        let dy = *y - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx *= inv;
    sxy *= inv;
    syy *= inv;
    // eigenvalues of the 2x2 covariance; the major axis is the line direction
    let half_trace = (sxx + syy) / cast::<T>(2.0);
    let det = sxx * syy - sxy * sxy;
    let gap = (half_trace * half_trace - det).max(T::zero()).sqrt();
    let minor = (half_trace - gap).max(T::zero());
    let major = half_trace + gap;
    let direction = if sxy.abs() > T::epsilon() {
        let dx = major - syy;
        let norm = (dx * dx + sxy * sxy).sqrt();
        (dx / norm, sxy / norm)
    } else if sxx >= syy {
        (T::one(), T::zero())
    } else {
        (T::zero(), T::one())
    };
    Some(LineFit {
        rms_residual: minor.sqrt(),
        direction,
        centroid: (cx, cy),
        cells_used: selected.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{init_posterior, PosteriorInit, PosteriorOverC};
    use approx::assert_abs_diff_eq;

    fn with_weights(post: &PosteriorOverC<f64>, weights: &[f64]) -> PosteriorOverC<f64> {
        let mut raw: Vec<f64> = weights
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = raw.iter().map(|lw| (lw - m).exp()).sum();
        let logz = m + z.ln();
        for lw in raw.iter_mut() {
            *lw -= logz;
        }
        post.clone_with_log_weights_for_tests(raw)
    }

    #[test]
    fn uniform_weights_have_log_k_entropy() {
        let post = init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: 7 }).unwrap();
        assert_abs_diff_eq!(post.entropy(), (49f64).ln(), epsilon = 1e-10);
    }

    #[test]
    fn point_mass_has_zero_entropy_and_its_own_mode() {
        let post = init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: 3 }).unwrap();
        let mut w = vec![0.0; 9];
        w[5] = 1.0;
        let post = with_weights(&post, &w);
        assert_abs_diff_eq!(post.entropy(), 0.0, epsilon = 1e-12);
        assert_eq!(post.mode(), 5);
        let s = posterior_summary(&post, 4);
        assert_eq!(s.local_modes, vec![5]);
    }

    #[test]
    fn synthetic_bimodal_weights_expose_both_bumps() {
        let res = 21usize;
        let post =
            init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: res }).unwrap();
        let grid = post.grid().unwrap().points.clone();
        let bump = |x: f64, y: f64, cx: f64, cy: f64| {
            (-((x - cx).powi(2) + (y - cy).powi(2)) / 0.004).exp()
        };
        let w: Vec<f64> = grid
            .iter()
            .map(|&(a, b)| bump(a, b, 0.25, 0.25) + bump(a, b, 0.75, 0.75))
            .collect();
        let post = with_weights(&post, &w);
        let s = posterior_summary(&post, 2);
        assert_eq!(s.local_modes.len(), 2);
        let centers: Vec<(f64, f64)> = s.local_modes.iter().map(|&k| grid[k]).collect();
        for (expect_a, expect_b) in [(0.25, 0.25), (0.75, 0.75)] {
            assert!(
                centers
                    .iter()
                    .any(|&(a, b)| (a - expect_a).abs() < 0.05 && (b - expect_b).abs() < 0.05),
                "missing bump near ({expect_a},{expect_b}): {centers:?}"
            );
        }
    }

    #[test]
    fn weights_on_a_diagonal_ridge_fit_a_line() {
        let res = 51usize;
        let post =
            init_posterior::<f64>(&PosteriorInit::GridAlphaBeta { resolution: res }).unwrap();
        let grid = post.grid().unwrap().points.clone();
        // ridge along beta = alpha - 0.2
        let w: Vec<f64> = grid
            .iter()
            .map(|&(a, b)| (-((b - a + 0.2).powi(2)) / 0.0005).exp())
            .collect();
        let post = with_weights(&post, &w);
        let fit = grid_line_fit(&post, 0.9).unwrap();
        assert!(fit.cells_used > 10);
        assert!(
            fit.rms_residual * res as f64 <= 2.0,
            "rms {}",
            fit.rms_residual
        );
        let slope = (fit.direction.1 / fit.direction.0).abs();
        assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
    }
}
