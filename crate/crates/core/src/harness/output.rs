//! Deterministic file output: fixed float formatting so reruns are
//! byte-identical.

use std::io::Write;
use std::path::Path;

use crate::bayes::{BayesRun, PosteriorOverC};
use crate::scalar::Scalar;
use crate::sim::Trajectory;

/// 17-significant-digit scientific formatting used in every CSV column.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write grid-run posterior snapshots: `t,alpha,beta,weight`, one row per
/// support point per snapshot.
pub fn write_grid_snapshots<T: Scalar>(
    run: &BayesRun<T>,
    post: &PosteriorOverC<T>,
    path: &Path,
) -> std::io::Result<()> {
    let grid = post.grid().expect("grid posterior");
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,alpha,beta,weight")?;
    for snap in &run.snapshots {
        for (k, &(alpha, beta)) in grid.points.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                snap.t,
                format_float(alpha.to_f64().unwrap_or(f64::NAN)),
                format_float(beta.to_f64().unwrap_or(f64::NAN)),
                format_float(snap.weights[k].to_f64().unwrap_or(f64::NAN)),
            )?;
        }
    }
    out.flush()
}

/// Write ensemble-run posterior snapshots: `t,point_id,weight`.
pub fn write_ensemble_snapshots<T: Scalar>(run: &BayesRun<T>, path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,point_id,weight")?;
    for snap in &run.snapshots {
        for (k, w) in snap.weights.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                snap.t,
                k,
                format_float(w.to_f64().unwrap_or(f64::NAN)),
            )?;
        }
    }
    out.flush()
}

/// One-time sidecar mapping ensemble point ids to their matrices.
pub fn write_ensemble_support<T: Scalar>(
    post: &PosteriorOverC<T>,
    path: &Path,
) -> std::io::Result<()> {
    #[derive(serde::Serialize)]
    struct Point {
        id: usize,
        matrix: Vec<Vec<f64>>,
    }
    let points: Vec<Point> = post
        .support()
        .iter()
        .enumerate()
        .map(|(id, c)| Point {
            id,
            matrix: matrix_rows(c.entries()),
        })
        .collect();
    let body = serde_json::to_string_pretty(&points).expect("serializable");
    std::fs::write(path, body + "\n")
}

/// Write a trajectory as `t,state,observed,action` (empty action on the last
/// record).
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,state,observed,action")?;
    for step in traj.steps() {
        match step.action {
            Some(a) => writeln!(out, "{},{},{},{}", step.t, step.state, step.observed, a)?,
            None => writeln!(out, "{},{},{},", step.t, step.state, step.observed)?,
        }
    }
    out.flush()
}

/// Matrix rows as plain vectors for JSON output.
pub fn matrix_rows<T: Scalar>(m: &ndarray::Array2<T>) -> Vec<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
        .collect()
}

/// FNV-1a content fingerprint used as the scenario digest.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
