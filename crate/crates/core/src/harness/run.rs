//! Experiment orchestration: dispatch a scenario to its estimator, write the
//! artifacts, and return a machine-readable report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bayes::{posterior_summary, run_bayes, BayesRun, PosteriorInit};
use crate::error::Error;
use crate::identifiability::{check_subset_condition, IdentifiabilityReport};
use crate::mdp::ConfusionMatrix;
use crate::repetitive::{
    estimate_by_partitions, exact_protocol_data, minimize_loss, run_protocol, EstimationResult,
    MinimizeOptions, PartitionConfig, PartitionInput, RepetitiveProtocolConfig,
};
use crate::scalar::Scalar;
use crate::sim::{derive_seed, simulate, ActionSource, Trajectory};

use super::config::{EstimatorConfig, Scenario, SupportSpec};
use super::output;
use super::{frobenius_error, HarnessError};

/// Candidate matrix as reported in `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateReport {
    pub matrix: Vec<Vec<f64>>,
    pub residual: f64,
    pub feasible: bool,
}

/// Identifiability section of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiabilityOut {
    pub satisfied: bool,
    pub violating_subsets: Vec<Vec<usize>>,
    pub tolerance: f64,
}

impl From<&IdentifiabilityReport> for IdentifiabilityOut {
    fn from(r: &IdentifiabilityReport) -> Self {
        Self {
            satisfied: r.satisfied,
            violating_subsets: r
                .violating_subsets
                .iter()
                .map(|p| p.block().to_vec())
                .collect(),
            tolerance: r.tolerance,
        }
    }
}

/// Posterior section of the report (Bayesian runs only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorOut {
    pub entropy: f64,
    pub mean: Vec<Vec<f64>>,
    /// `(α, β)` of the mode cell on grid runs.
    pub mode_point: Option<(f64, f64)>,
    /// Posterior mass within an ∞-ball of radius 0.05 around the mode.
    pub mode_ball_mass: f64,
}

/// Machine-readable result of one experiment run; serialized as
/// `summary.json` in the scenario output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub estimator: EstimatorConfig,
    pub candidates: Vec<CandidateReport>,
    pub selected: Option<usize>,
    /// Distance of the reported matrix to the scenario truth (absent when
    /// the estimator failed before producing one).
    pub frobenius_error: Option<f64>,
    pub identifiability: Option<IdentifiabilityOut>,
    pub steps: usize,
    pub seed: u64,
    pub scenario_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<PathBuf>,
}

/// Run one scenario end to end. Estimator failures are embedded in the
/// written report and surfaced as [`HarnessError`] (nonzero exit code).
pub fn run_experiment(scenario: &Scenario) -> Result<RunReport, HarnessError> {
    std::fs::create_dir_all(&scenario.output_dir)?;
    let mut report = RunReport {
        estimator: scenario.estimator.clone(),
        candidates: Vec::new(),
        selected: None,
        frobenius_error: None,
        identifiability: None,
        steps: scenario.estimator.steps(),
        seed: scenario.seed,
        scenario_digest: scenario.digest.clone(),
        posterior: None,
        error: None,
        artifacts: Vec::new(),
    };

    let outcome = dispatch(scenario, &mut report);
    if let Err(err) = &outcome {
        report.error = Some(err.to_string());
    }
    report.artifacts.push(PathBuf::from("summary.json"));
    let summary_path = scenario.output_dir.join("summary.json");
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&summary_path, body + "\n")?;

    match outcome {
        Ok(()) => Ok(report),
        Err(e) => Err(e),
    }
}

fn dispatch(scenario: &Scenario, report: &mut RunReport) -> Result<(), HarnessError> {
    match &scenario.estimator {
        EstimatorConfig::Repetitive {
            steps,
            burn_in,
            starts,
            max_iters,
            tol_loss,
            exact_q,
        } => {
            let actions: Vec<usize> = (0..scenario.mdp.actions()).collect();
            let data = if *exact_q {
                exact_protocol_data(&scenario.mdp, &scenario.confusion, &actions)
                    .map_err(estimator_err)?
            } else {
                run_protocol(
                    &scenario.mdp,
                    &scenario.confusion,
                    &RepetitiveProtocolConfig {
                        actions,
                        burn_in: *burn_in,
                        steps_per_action: *steps,
                        seed: scenario.seed,
                    },
                )
                .map_err(estimator_err)?
            };
            let mut stationaries = BTreeMap::new();
            for (a, d) in &data {
                stationaries.insert(*a, d.stationary.clone());
            }
            let ident = check_subset_condition(&stationaries, 1e-6).map_err(estimator_err)?;
            report.identifiability = Some((&ident).into());
            let opts = MinimizeOptions::<f64> {
                starts: *starts,
                max_iters: *max_iters,
                tol_loss: *tol_loss,
                seed: scenario.seed,
                ..MinimizeOptions::default()
            };
            let result = minimize_loss(&data, &opts).map_err(estimator_err)?;
            fill_candidates(report, &result);
            report.frobenius_error =
                Some(frobenius_error(result.best(), &scenario.confusion).map_err(estimator_err)?);
            Ok(())
        }
        EstimatorConfig::Bayes1 { steps, support } | EstimatorConfig::Bayes2 { steps, support } => {
            let order = scenario.estimator.bayes_order().expect("bayes config");
            let init = match support {
                SupportSpec::Grid { resolution } => {
                    if scenario.mdp.states() != 2 {
                        return Err(HarnessError::Validation(
                            "the (alpha, beta) grid support requires a two-state scenario".into(),
                        ));
                    }
                    PosteriorInit::GridAlphaBeta {
                        resolution: *resolution,
                    }
                }
                SupportSpec::Ensemble { particles } => PosteriorInit::Ensemble {
                    count: *particles,
                    states: scenario.mdp.states(),
                    seed: derive_seed(scenario.seed, 0xB),
                },
            };
            let run = run_bayes(
                &scenario.mdp,
                &scenario.confusion,
                order,
                &ActionSource::UniformRandom,
                *steps,
                &init,
                scenario.snapshot_every,
                scenario.seed,
            )
            .map_err(estimator_err)?;
            finish_bayes(scenario, report, &run)?;
            Ok(())
        }
        EstimatorConfig::Partition {
            steps,
            burn_in,
            exact_q,
            intersect_tol,
            abort_on_violation,
        } => {
            let mut cfg = if *exact_q {
                PartitionConfig::exact()
            } else {
                PartitionConfig::monte_carlo()
            };
            cfg.intersect_tol = *intersect_tol;
            cfg.abort_on_violation = *abort_on_violation;
            cfg.burn_in = *burn_in;
            let result = if *exact_q {
                estimate_by_partitions(
                    &scenario.mdp,
                    PartitionInput::ExactFromTruth(&scenario.confusion),
                    &cfg,
                )
            } else {
                let mut trajectories: BTreeMap<usize, Trajectory> = BTreeMap::new();
                let initial = crate::mdp::StateDistribution::uniform(scenario.mdp.states());
                for a in 0..scenario.mdp.actions() {
                    let traj = simulate(
                        &scenario.mdp,
                        &scenario.confusion,
                        &ActionSource::Repeat(a),
                        *burn_in + *steps,
                        &initial,
                        derive_seed(scenario.seed, a as u64),
                    )
                    .map_err(estimator_err)?;
                    trajectories.insert(a, traj);
                }
                estimate_by_partitions(
                    &scenario.mdp,
                    PartitionInput::Trajectories(&trajectories),
                    &cfg,
                )
            }
            .map_err(estimator_err)?;
            if let Some(ident) = &result.diagnostics.identifiability {
                report.identifiability = Some(ident.into());
            }
            fill_candidates(report, &result);
            report.frobenius_error =
                Some(frobenius_error(result.best(), &scenario.confusion).map_err(estimator_err)?);
            Ok(())
        }
    }
}

fn fill_candidates<T: Scalar>(report: &mut RunReport, result: &EstimationResult<T>) {
    report.candidates = result
        .candidates
        .iter()
        .map(|c| CandidateReport {
            matrix: output::matrix_rows(c.matrix.entries()),
            residual: c.residual.to_f64().unwrap_or(f64::NAN),
            feasible: c.feasible,
        })
        .collect();
    report.selected = result.selected;
}

fn finish_bayes(
    scenario: &Scenario,
    report: &mut RunReport,
    run: &BayesRun<f64>,
) -> Result<(), HarnessError> {
    let post = &run.posterior;
    let summary = posterior_summary(post, 2);
    let ball = 0.05;
    // candidates: the top local modes, scored by how much mass sits nearby
    let mut candidates = Vec::new();
    for &k in &summary.local_modes {
        let matrix = post.support()[k].clone();
        let mass = post.mass_within(matrix.entries(), ball);
        candidates.push(CandidateReport {
            matrix: output::matrix_rows(matrix.entries()),
            residual: 1.0 - mass,
            feasible: mass >= 0.5,
        });
    }
    if candidates.is_empty() {
        let k = summary.mode;
        let matrix = &post.support()[k];
        let mass = post.mass_within(matrix.entries(), ball);
        candidates.push(CandidateReport {
            matrix: output::matrix_rows(matrix.entries()),
            residual: 1.0 - mass,
            feasible: mass >= 0.5,
        });
    }
    report.selected = if candidates[0].feasible {
        Some(0)
    } else {
        None
    };
    report.candidates = candidates;

    let mode_matrix = ConfusionMatrix::new(
        ndarray::Array2::from_shape_vec(
            (scenario.mdp.states(), scenario.mdp.states()),
            report.candidates[0]
                .matrix
                .iter()
                .flatten()
                .copied()
                .collect(),
        )
        .expect("square"),
    )
    .map_err(estimator_err)?;
    report.frobenius_error =
        Some(frobenius_error(&mode_matrix, &scenario.confusion).map_err(estimator_err)?);
    report.posterior = Some(PosteriorOut {
        entropy: summary.entropy,
        mean: output::matrix_rows(&summary.mean),
        mode_point: post.grid().map(|g| g.points[summary.mode]),
        mode_ball_mass: post.mass_within(post.support()[summary.mode].entries(), ball),
    });

    // snapshot artifacts (report paths are relative to the output directory)
    let csv = scenario.output_dir.join("snapshots.csv");
    if post.grid().is_some() {
        output::write_grid_snapshots(run, post, &csv)?;
    } else {
        output::write_ensemble_snapshots(run, &csv)?;
        output::write_ensemble_support(post, &scenario.output_dir.join("support.json"))?;
        report.artifacts.push(PathBuf::from("support.json"));
    }
    report.artifacts.push(PathBuf::from("snapshots.csv"));
    Ok(())
}

fn estimator_err(e: Error) -> HarnessError {
    match e {
        Error::IdentifiabilityNotSatisfied { .. } => HarnessError::Identifiability(e.to_string()),
        other => HarnessError::Estimator(other.to_string()),
    }
}
