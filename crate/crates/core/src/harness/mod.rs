//! Scenario configuration, experiment orchestration, metrics and file output.

mod config;
pub mod output;
mod run;

pub use config::{
    load_scenario, load_scenario_file, resolve_scenario, EstimatorConfig, EstimatorSpec, Scenario,
    ScenarioFile, SupportSpec,
};
pub use run::{run_experiment, CandidateReport, IdentifiabilityOut, PosteriorOut, RunReport};

use thiserror::Error;

use crate::error::{Error as CoreError, Result as CoreResult};
use crate::mdp::ConfusionMatrix;
use crate::scalar::Scalar;

/// Harness-level failures, mapped onto process exit codes by the CLI:
/// validation 2, estimator 3, identifiability abort 4.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("estimator failed: {0}")]
    Estimator(String),
    #[error("identifiability abort: {0}")]
    Identifiability(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for scripting.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Estimator(_) => 3,
            HarnessError::Identifiability(_) => 4,
            HarnessError::Io(_) => 1,
        }
    }
}

/// Frobenius distance `√Σ (A−B)²` between two confusion matrices.
pub fn frobenius_error<T: Scalar>(
    estimate: &ConfusionMatrix<T>,
    truth: &ConfusionMatrix<T>,
) -> CoreResult<T> {
    if estimate.dim() != truth.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: truth.dim(),
            found: estimate.dim(),
        });
    }
    let sum: T = estimate
        .entries()
        .iter()
        .zip(truth.entries().iter())
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum();
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn frobenius_error_examples() {
        let c1 = ConfusionMatrix::new(arr2(&[[0.9, 0.1], [0.3, 0.7]])).unwrap();
        let c2 = ConfusionMatrix::new(arr2(&[[0.3, 0.7], [0.9, 0.1]])).unwrap();
        assert_eq!(frobenius_error(&c1, &c1).unwrap(), 0.0);
        // four cells differing by ±0.6
        assert_abs_diff_eq!(
            frobenius_error(&c1, &c2).unwrap(),
            (4.0f64 * 0.36).sqrt(),
            epsilon = 1e-15
        );
        let id = ConfusionMatrix::identity(2);
        let uniform = ConfusionMatrix::new(arr2(&[[0.5, 0.5], [0.5, 0.5]])).unwrap();
        assert_abs_diff_eq!(
            frobenius_error(&id, &uniform).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = ConfusionMatrix::<f64>::identity(2);
        let b = ConfusionMatrix::<f64>::identity(3);
        assert!(frobenius_error(&a, &b).is_err());
    }
}
