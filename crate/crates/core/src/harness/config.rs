//! Scenario files: JSON schema, validation, and defaults.
//!
//! Schema (all matrices as lists of rows):
//!
//! ```json
//! {
//!   "n": 2,
//!   "actions": { "swap": [[0,1],[1,0]], "mix": [[0.3,0.7],[0.7,0.3]] },
//!   "confusion": [[0.9,0.1],[0.3,0.7]],
//!   "seed": 0,
//!   "estimator": { "type": "repetitive", "steps": 100000, "exact_q": true },
//!   "output_dir": "out/example",
//!   "snapshot_every": 500
//! }
//! ```
//!
//! Action order in the file defines action indices. Omitted optional fields
//! are filled with documented defaults and echoed into the run report.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bayes::BayesOrder;
use crate::mdp::{ConfusionMatrix, Mdp};

use super::HarnessError;

/// Raw scenario file as parsed from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub n: usize,
    pub actions: IndexMap<String, Vec<Vec<f64>>>,
    pub confusion: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

/// Estimator block of a scenario file; every knob optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Repetitive {
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        burn_in: Option<usize>,
        #[serde(default)]
        starts: Option<usize>,
        #[serde(default)]
        max_iters: Option<usize>,
        #[serde(default)]
        tol_loss: Option<f64>,
        #[serde(default)]
        exact_q: Option<bool>,
    },
    Bayes1 {
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        grid_res: Option<usize>,
        #[serde(default)]
        particles: Option<usize>,
    },
    Bayes2 {
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        grid_res: Option<usize>,
        #[serde(default)]
        particles: Option<usize>,
    },
    Partition {
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        burn_in: Option<usize>,
        #[serde(default)]
        exact_q: Option<bool>,
        #[serde(default)]
        intersect_tol: Option<f64>,
        #[serde(default)]
        abort_on_violation: Option<bool>,
    },
}

/// Posterior support requested for a Bayesian run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SupportSpec {
    Grid { resolution: usize },
    Ensemble { particles: usize },
}

/// Fully resolved estimator configuration (defaults applied), echoed into the
/// run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimatorConfig {
    Repetitive {
        steps: usize,
        burn_in: Option<usize>,
        starts: usize,
        max_iters: usize,
        tol_loss: f64,
        exact_q: bool,
    },
    #[serde(rename = "bayes1")]
    Bayes1 { steps: usize, support: SupportSpec },
    #[serde(rename = "bayes2")]
    Bayes2 { steps: usize, support: SupportSpec },
    Partition {
        steps: usize,
        burn_in: usize,
        exact_q: bool,
        intersect_tol: f64,
        abort_on_violation: bool,
    },
}

impl EstimatorConfig {
    /// Step budget of the configured estimator.
    pub fn steps(&self) -> usize {
        match self {
            EstimatorConfig::Repetitive { steps, .. }
            | EstimatorConfig::Bayes1 { steps, .. }
            | EstimatorConfig::Bayes2 { steps, .. }
            | EstimatorConfig::Partition { steps, .. } => *steps,
        }
    }

    /// Bayesian order, when this is a Bayesian configuration.
    pub fn bayes_order(&self) -> Option<BayesOrder> {
        match self {
            EstimatorConfig::Bayes1 { .. } => Some(BayesOrder::First),
            EstimatorConfig::Bayes2 { .. } => Some(BayesOrder::Second),
            _ => None,
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mdp: Mdp<f64>,
    pub confusion: ConfusionMatrix<f64>,
    pub action_names: Vec<String>,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    pub output_dir: PathBuf,
    pub snapshot_every: usize,
    pub digest: String,
}

fn rows_to_array(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Array2<f64>, HarnessError> {
    if rows.len() != n {
        return Err(HarnessError::Validation(format!(
            "{what}: expected {n} rows, found {}",
            rows.len()
        )));
    }
    let mut m = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(HarnessError::Validation(format!(
                "{what} row {i}: expected {n} entries, found {}",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            m[[i, j]] = *v;
        }
    }
    Ok(m)
}

/// Read and parse a scenario file without resolving defaults (the CLI edits
/// the raw file with flag overrides before resolution).
pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, HarnessError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&body).map_err(|e| {
        HarnessError::Validation(format!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// Load and fully validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let file = load_scenario_file(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    resolve_scenario(file, &name)
}

/// Apply defaults and validate a parsed scenario file.
pub fn resolve_scenario(file: ScenarioFile, name: &str) -> Result<Scenario, HarnessError> {
    if file.actions.is_empty() {
        return Err(HarnessError::Validation(
            "scenario declares no actions".into(),
        ));
    }
    let n = file.n;
    let mut matrices = Vec::with_capacity(file.actions.len());
    let mut action_names = Vec::with_capacity(file.actions.len());
    for (aname, rows) in &file.actions {
        let m = rows_to_array(rows, n, &format!("action \"{aname}\""))?;
        matrices.push(m);
        action_names.push(aname.clone());
    }
    let mdp = Mdp::new(matrices)
        .map_err(|e| HarnessError::Validation(format!("transition matrices rejected: {e}")))?;
    let confusion_m = rows_to_array(&file.confusion, n, "confusion matrix")?;
    let confusion = ConfusionMatrix::new(confusion_m)
        .map_err(|e| HarnessError::Validation(format!("confusion matrix rejected: {e}")))?;

    let seed = file.seed.unwrap_or(0);
    let estimator = resolve_estimator(&file.estimator, n)?;
    let output_dir = file
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    let snapshot_every = file.snapshot_every.unwrap_or(0);

    // digest over the resolved scenario, minus the output location
    #[derive(Serialize)]
    struct DigestView<'a> {
        n: usize,
        actions: &'a IndexMap<String, Vec<Vec<f64>>>,
        confusion: &'a [Vec<f64>],
        seed: u64,
        estimator: &'a EstimatorConfig,
        snapshot_every: usize,
    }
    let digest_body = serde_json::to_string(&DigestView {
        n,
        actions: &file.actions,
        confusion: &file.confusion,
        seed,
        estimator: &estimator,
        snapshot_every,
    })
    .expect("serializable");
    let digest = super::output::fnv1a_hex(digest_body.as_bytes());

    Ok(Scenario {
        name: name.to_string(),
        mdp,
        confusion,
        action_names,
        seed,
        estimator,
        output_dir,
        snapshot_every,
        digest,
    })
}

fn resolve_estimator(spec: &EstimatorSpec, n: usize) -> Result<EstimatorConfig, HarnessError> {
    Ok(match spec {
        EstimatorSpec::Repetitive {
            steps,
            burn_in,
            starts,
            max_iters,
            tol_loss,
            exact_q,
        } => {
            let steps = steps.unwrap_or(100_000);
            let exact_q = exact_q.unwrap_or(false);
            EstimatorConfig::Repetitive {
                steps,
                burn_in: *burn_in,
                starts: starts.unwrap_or(32),
                max_iters: max_iters.unwrap_or(500),
                tol_loss: tol_loss.unwrap_or(if exact_q {
                    1e-8
                } else {
                    10.0 * (n * n) as f64 / steps as f64
                }),
                exact_q,
            }
        }
        EstimatorSpec::Bayes1 {
            steps,
            grid_res,
            particles,
        } => EstimatorConfig::Bayes1 {
            steps: steps.unwrap_or(5000),
            support: resolve_support(*grid_res, *particles)?,
        },
        EstimatorSpec::Bayes2 {
            steps,
            grid_res,
            particles,
        } => EstimatorConfig::Bayes2 {
            steps: steps.unwrap_or(5000),
            support: resolve_support(*grid_res, *particles)?,
        },
        EstimatorSpec::Partition {
            steps,
            burn_in,
            exact_q,
            intersect_tol,
            abort_on_violation,
        } => {
            let exact_q = exact_q.unwrap_or(false);
            EstimatorConfig::Partition {
                steps: steps.unwrap_or(1_000_000),
                burn_in: burn_in.unwrap_or(1000),
                exact_q,
                intersect_tol: intersect_tol.unwrap_or(if exact_q { 1e-6 } else { 0.05 }),
                abort_on_violation: abort_on_violation.unwrap_or(false),
            }
        }
    })
}

fn resolve_support(
    grid_res: Option<usize>,
    particles: Option<usize>,
) -> Result<SupportSpec, HarnessError> {
    match (grid_res, particles) {
        (Some(_), Some(_)) => Err(HarnessError::Validation(
            "estimator: grid_res and particles are mutually exclusive".into(),
        )),
        (None, Some(p)) => Ok(SupportSpec::Ensemble { particles: p }),
        (Some(r), None) => Ok(SupportSpec::Grid { resolution: r }),
        (None, None) => Ok(SupportSpec::Grid { resolution: 101 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json(confusion_row0: &str) -> String {
        format!(
            r#"{{
  "n": 2,
  "actions": {{ "swap": [[0.0, 1.0], [1.0, 0.0]], "mix": [[0.3, 0.7], [0.7, 0.3]] }},
  "confusion": [{confusion_row0}, [0.3, 0.7]],
  "estimator": {{ "type": "repetitive", "exact_q": true }}
}}"#
        )
    }

    #[test]
    fn valid_file_resolves_with_defaults_echoed() {
        let file: ScenarioFile = serde_json::from_str(&sample_json("[0.9, 0.1]")).unwrap();
        let s = resolve_scenario(file, "sample").unwrap();
        assert_eq!(s.seed, 0, "default seed must be echoed");
        assert_eq!(s.action_names, vec!["swap", "mix"]);
        match s.estimator {
            EstimatorConfig::Repetitive {
                steps,
                starts,
                tol_loss,
                exact_q,
                ..
            } => {
                assert_eq!(steps, 100_000);
                assert_eq!(starts, 32);
                assert_eq!(tol_loss, 1e-8);
                assert!(exact_q);
            }
            _ => panic!("wrong estimator"),
        }
        assert_eq!(s.output_dir, PathBuf::from("out/sample"));
    }

    #[test]
    fn bad_row_sum_is_named() {
        let file: ScenarioFile = serde_json::from_str(&sample_json("[0.8, 0.1]")).unwrap();
        let err = resolve_scenario(file, "sample").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 0"), "message should name the row: {msg}");
    }

    #[test]
    fn digest_changes_with_content_not_location() {
        let f1: ScenarioFile = serde_json::from_str(&sample_json("[0.9, 0.1]")).unwrap();
        let mut f2 = f1.clone();
        f2.output_dir = Some(PathBuf::from("elsewhere"));
        let s1 = resolve_scenario(f1, "a").unwrap();
        let s2 = resolve_scenario(f2, "a").unwrap();
        assert_eq!(s1.digest, s2.digest);

        let f3: ScenarioFile = serde_json::from_str(&sample_json("[0.85, 0.15]")).unwrap();
        let s3 = resolve_scenario(f3, "a").unwrap();
        assert_ne!(s1.digest, s3.digest);
    }
}
