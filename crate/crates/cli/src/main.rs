//! Command-line toolkit for confusion-matrix estimation experiments.
//!
//! Exit codes: 0 success, 2 validation failure, 3 estimator failure,
//! 4 identifiability violation/abort.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};

use mdp_confusion::harness::{
    load_scenario_file, output, resolve_scenario, run_experiment, EstimatorSpec, HarnessError,
    RunReport, Scenario,
};
use mdp_confusion::identifiability::check_subset_condition;
use mdp_confusion::sim::{simulate, ActionSource};
use mdp_confusion::StateDistribution64;

#[derive(Parser)]
#[command(
    name = "mdp-confusion",
    version,
    about = "Estimate state-observation confusion matrices of MDPs from noisy trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Repetitive,
    Bayes1,
    Bayes2,
    Partition,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory under the scenario's model and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Transitions to simulate (default 1000).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run estimation for one or more scenarios and write reports.
    Estimate {
        /// Scenario file; repeat the flag to batch several scenarios.
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        /// Override the estimator type declared in the scenario.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        grid_res: Option<usize>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        snapshot_every: Option<usize>,
        /// Use the exact observed-transition matrices instead of simulating.
        #[arg(long)]
        exact_q: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Concurrent scenario jobs (each scenario stays single-threaded).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the stationary-distribution identifiability condition.
    CheckIdentifiability {
        #[arg(long)]
        config: PathBuf,
        /// Tolerance on stationary-mass differences (default 1e-6).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print a previously written run report and re-verify its error metric.
    Report {
        #[arg(long)]
        output_dir: PathBuf,
        /// Scenario file for recomputing the error against the true matrix.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Simulate {
            config,
            steps,
            seed,
            output_dir,
        } => {
            let mut file = load_scenario_file(&config)?;
            if let Some(s) = seed {
                file.seed = Some(s);
            }
            if let Some(dir) = output_dir {
                file.output_dir = Some(dir);
            }
            let scenario = resolve_scenario(file, &scenario_name(&config))?;
            let steps = steps.unwrap_or(1000);
            let traj = simulate(
                &scenario.mdp,
                &scenario.confusion,
                &ActionSource::UniformRandom,
                steps,
                &StateDistribution64::uniform(scenario.mdp.states()),
                scenario.seed,
            )
            .map_err(|e| HarnessError::Estimator(e.to_string()))?;
            std::fs::create_dir_all(&scenario.output_dir)?;
            let path = scenario.output_dir.join("trajectory.csv");
            output::write_trajectory_csv(&traj, &path)?;
            println!(
                "simulated {steps} transitions (seed {}) -> {}",
                scenario.seed,
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            config,
            method,
            seed,
            steps,
            burn_in,
            grid_res,
            particles,
            snapshot_every,
            exact_q,
            output_dir,
            jobs,
        } => {
            let overrides = Overrides {
                method,
                seed,
                steps,
                burn_in,
                grid_res,
                particles,
                snapshot_every,
                exact_q,
                output_dir,
            };
            let mut scenarios = Vec::new();
            for path in &config {
                let mut file = load_scenario_file(path)?;
                overrides.apply(&mut file, config.len() > 1)?;
                scenarios.push(resolve_scenario(file, &scenario_name(path))?);
            }
            let code = run_batch(scenarios, jobs.max(1));
            Ok(ExitCode::from(code as u8))
        }
        Command::CheckIdentifiability { config, tol } => {
            let file = load_scenario_file(&config)?;
            let scenario = resolve_scenario(file, &scenario_name(&config))?;
            let tol = tol.unwrap_or(1e-6);
            let mut stationaries = BTreeMap::new();
            for a in 0..scenario.mdp.actions() {
                stationaries.insert(
                    a,
                    scenario
                        .mdp
                        .stationary(a)
                        .map_err(|e| HarnessError::Estimator(e.to_string()))?,
                );
            }
            let report = check_subset_condition(&stationaries, tol)
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            let out = serde_json::json!({
                "satisfied": report.satisfied,
                "violating_subsets": report
                    .violating_subsets
                    .iter()
                    .map(|p| p.block().to_vec())
                    .collect::<Vec<_>>(),
                "tolerance": report.tolerance,
                "actions": scenario.action_names,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("serializable")
            );
            if report.satisfied {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(4))
            }
        }
        Command::Report { output_dir, config } => {
            let path = output_dir.join("summary.json");
            let body = std::fs::read_to_string(&path).map_err(|e| {
                HarnessError::Validation(format!("cannot read {}: {e}", path.display()))
            })?;
            let report: RunReport = serde_json::from_str(&body)
                .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
            print_report(&path.display().to_string(), &report);
            if let Some(cfg) = config {
                let scenario = resolve_scenario(load_scenario_file(&cfg)?, &scenario_name(&cfg))?;
                verify_report(&report, &scenario)?;
                println!("error metric re-verified against {}", cfg.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

struct Overrides {
    method: Option<Method>,
    seed: Option<u64>,
    steps: Option<usize>,
    burn_in: Option<usize>,
    grid_res: Option<usize>,
    particles: Option<usize>,
    snapshot_every: Option<usize>,
    exact_q: bool,
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(
        &self,
        file: &mut mdp_confusion::harness::ScenarioFile,
        batch: bool,
    ) -> Result<(), HarnessError> {
        if let Some(s) = self.seed {
            file.seed = Some(s);
        }
        if let Some(every) = self.snapshot_every {
            file.snapshot_every = Some(every);
        }
        if let Some(dir) = &self.output_dir {
            if batch {
                return Err(HarnessError::Validation(
                    "--output-dir cannot be combined with multiple --config files".into(),
                ));
            }
            file.output_dir = Some(dir.clone());
        }
        let exact_q = self.exact_q.then_some(true);
        file.estimator = match (self.method, file.estimator.clone()) {
            (Some(Method::Repetitive), prev) => EstimatorSpec::Repetitive {
                steps: self.steps.or(prev_steps(&prev)),
                burn_in: self.burn_in,
                starts: None,
                max_iters: None,
                tol_loss: None,
                exact_q: exact_q.or(prev_exact_q(&prev)),
            },
            (Some(Method::Bayes1), prev) => EstimatorSpec::Bayes1 {
                steps: self.steps.or(prev_steps(&prev)),
                grid_res: self.grid_res.or(prev_grid(&prev)),
                particles: self.particles,
            },
            (Some(Method::Bayes2), prev) => EstimatorSpec::Bayes2 {
                steps: self.steps.or(prev_steps(&prev)),
                grid_res: self.grid_res.or(prev_grid(&prev)),
                particles: self.particles,
            },
            (Some(Method::Partition), prev) => EstimatorSpec::Partition {
                steps: self.steps.or(prev_steps(&prev)),
                burn_in: self.burn_in,
                exact_q: exact_q.or(prev_exact_q(&prev)),
                intersect_tol: None,
                abort_on_violation: None,
            },
            (None, mut spec) => {
                patch_spec(
                    &mut spec,
                    self.steps,
                    self.burn_in,
                    self.grid_res,
                    self.particles,
                    exact_q,
                );
                spec
            }
        };
        Ok(())
    }
}

fn prev_steps(spec: &EstimatorSpec) -> Option<usize> {
    match spec {
        EstimatorSpec::Repetitive { steps, .. }
        | EstimatorSpec::Bayes1 { steps, .. }
        | EstimatorSpec::Bayes2 { steps, .. }
        | EstimatorSpec::Partition { steps, .. } => *steps,
    }
}

fn prev_exact_q(spec: &EstimatorSpec) -> Option<bool> {
    match spec {
        EstimatorSpec::Repetitive { exact_q, .. } | EstimatorSpec::Partition { exact_q, .. } => {
            *exact_q
        }
        _ => None,
    }
}

fn prev_grid(spec: &EstimatorSpec) -> Option<usize> {
    match spec {
        EstimatorSpec::Bayes1 { grid_res, .. } | EstimatorSpec::Bayes2 { grid_res, .. } => {
            *grid_res
        }
        _ => None,
    }
}

fn patch_spec(
    spec: &mut EstimatorSpec,
    steps: Option<usize>,
    burn_in: Option<usize>,
    grid_res: Option<usize>,
    particles: Option<usize>,
    exact_q: Option<bool>,
) {
    match spec {
        EstimatorSpec::Repetitive {
            steps: s,
            burn_in: b,
            exact_q: e,
            ..
        } => {
            if steps.is_some() {
                *s = steps;
            }
            if burn_in.is_some() {
                *b = burn_in;
            }
            if exact_q.is_some() {
                *e = exact_q;
            }
        }
        EstimatorSpec::Bayes1 {
            steps: s,
            grid_res: g,
            particles: p,
        }
        | EstimatorSpec::Bayes2 {
            steps: s,
            grid_res: g,
            particles: p,
        } => {
            if steps.is_some() {
                *s = steps;
            }
            if grid_res.is_some() {
                *g = grid_res;
                *p = None;
            }
            if particles.is_some() {
                *p = particles;
                *g = None;
            }
        }
        EstimatorSpec::Partition {
            steps: s,
            burn_in: b,
            exact_q: e,
            ..
        } => {
            if steps.is_some() {
                *s = steps;
            }
            if burn_in.is_some() {
                *b = burn_in;
            }
            if exact_q.is_some() {
                *e = exact_q;
            }
        }
    }
}

fn scenario_name(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string())
}

/// Run scenarios with up to `jobs` worker threads; each scenario keeps its
/// own seed and output directory. Returns the worst exit code.
fn run_batch(scenarios: Vec<Scenario>, jobs: usize) -> i32 {
    let queue: Mutex<VecDeque<Scenario>> = Mutex::new(scenarios.into());
    let worst: Mutex<i32> = Mutex::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let scenario = match queue.lock().unwrap().pop_front() {
                    Some(s) => s,
                    None => break,
                };
                match run_experiment(&scenario) {
                    Ok(report) => {
                        println!(
                            "{}: frobenius_error {} ({} candidate(s), selected {:?}) -> {}",
                            scenario.name,
                            report
                                .frobenius_error
                                .map(|e| format!("{e:.6}"))
                                .unwrap_or_else(|| "n/a".into()),
                            report.candidates.len(),
                            report.selected,
                            scenario.output_dir.join("summary.json").display()
                        );
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", scenario.name);
                        let mut w = worst.lock().unwrap();
                        *w = (*w).max(e.exit_code());
                    }
                }
            });
        }
    });
    let w = worst.lock().unwrap();
    *w
}

fn print_report(source: &str, report: &RunReport) {
    println!("report: {source}");
    println!("  digest:     {}", report.scenario_digest);
    println!("  steps:      {}", report.steps);
    println!("  seed:       {}", report.seed);
    println!("  candidates: {}", report.candidates.len());
    for (i, c) in report.candidates.iter().enumerate() {
        println!(
            "    [{i}] residual {:.3e} feasible {} matrix {:?}",
            c.residual, c.feasible, c.matrix
        );
    }
    println!("  selected:   {:?}", report.selected);
    match report.frobenius_error {
        Some(e) => println!("  frobenius:  {e:.6}"),
        None => println!("  frobenius:  n/a"),
    }
    if let Some(ident) = &report.identifiability {
        println!(
            "  identifiability: satisfied {} (violations {:?})",
            ident.satisfied, ident.violating_subsets
        );
    }
    if let Some(err) = &report.error {
        println!("  error: {err}");
    }
}

fn verify_report(report: &RunReport, scenario: &Scenario) -> Result<(), HarnessError> {
    use mdp_confusion::harness::frobenius_error;
    use mdp_confusion::ConfusionMatrix64;
    let idx = report.selected.unwrap_or(0);
    let cand = report
        .candidates
        .get(idx)
        .ok_or_else(|| HarnessError::Validation("report has no candidates to verify".into()))?;
    let n = cand.matrix.len();
    let flat: Vec<f64> = cand.matrix.iter().flatten().copied().collect();
    let m = ndarray::Array2::from_shape_vec((n, n), flat)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    let c = ConfusionMatrix64::new(m)
        .map_err(|e| HarnessError::Validation(format!("reported matrix invalid: {e}")))?;
    let recomputed = frobenius_error(&c, &scenario.confusion)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    let reported = report.frobenius_error.ok_or_else(|| {
        HarnessError::Validation("report carries no error metric to verify".into())
    })?;
    if (recomputed - reported).abs() > 1e-12 {
        return Err(HarnessError::Estimator(format!(
            "frobenius_error mismatch: report {reported} vs recomputed {recomputed}"
        )));
    }
    Ok(())
}
