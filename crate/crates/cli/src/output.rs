//! CSV and JSON artifacts.
//!
//! Every CSV starts with `#` comment lines carrying the library version, the
//! seeds and the full configuration. Floats use 17 significant digits.

use crate::experiment::ExperimentReport;
use crate::HarnessError;
use rbx_core::linalg::Operator;
use rbx_core::truth::write_matrix_market;
use rbx_core::Problem;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

pub const INCOMPLETE_MARKER: &str = "RUN_INCOMPLETE";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn begin(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run in progress\n").map_err(|e| HarnessError::io(&marker, e))
}

pub fn mark_failed(dir: &Path, err: &HarnessError) {
    let marker = dir.join(INCOMPLETE_MARKER);
    if let Err(e) = fs::write(&marker, format!("run aborted: {err}\n")) {
        log::error!("cannot write {}: {e}", marker.display());
    }
}

pub fn finish(dir: &Path) -> Result<(), HarnessError> {
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))
}

fn header(report: &ExperimentReport) -> String {
    let config = serde_json::to_string(&report.config).expect("config serializes");
    let sampling = serde_json::to_string(&report.config.training_sampling()).expect("sampling serializes");
    format!(
        "# rbx {VERSION}\n# problem: {} (n_dof {}, nodes {})\n# seed: {}\n# training: {sampling}\n# config: {config}\n",
        report.problem_name, report.n_dof, report.n_nodes, report.config.greedy.seed
    )
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, std::path::PathBuf), HarnessError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok((BufWriter::new(f), path))
}

pub fn write_all(dir: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    write_convergence(dir, report)?;
    write_sar(dir, report)?;
    write_snapshots(dir, report)?;
    write_summary(dir, report)
}

pub fn write_convergence(dir: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    let (mut w, path) = create(dir, "convergence.csv")?;
    let io = |e| HarnessError::io(&path, e);
    w.write_all(header(report).as_bytes()).map_err(io)?;
    writeln!(w, "method,n,delta_max,cum_estimator_evals,cum_wall_ms,sweep,ell,domain_size,selected").map_err(io)?;
    for r in &report.results {
        for s in &r.trace.sweeps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                s.n,
                fmt_f64(s.delta_max),
                s.cum_estimator_evals,
                fmt_f64(s.cum_wall_ms),
                if s.global { "global" } else { "surrogate" },
                s.ell,
                s.domain_size,
                s.selected.map_or(String::new(), |i| i.to_string())
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_sar(dir: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    let (mut w, path) = create(dir, "sar.csv")?;
    let io = |e| HarnessError::io(&path, e);
    w.write_all(header(report).as_bytes()).map_err(io)?;
    writeln!(w, "method,ell,E_ell,M_ell,N_ell,sar,surrogate_size").map_err(io)?;
    for r in &report.results {
        for o in &r.trace.outer {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.method,
                o.ell,
                fmt_f64(o.e_ell),
                o.m_ell,
                o.n_ell,
                fmt_f64(o.sar),
                o.surrogate_size
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_snapshots(dir: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    let (mut w, path) = create(dir, "snapshots.csv")?;
    let io = |e| HarnessError::io(&path, e);
    w.write_all(header(report).as_bytes()).map_err(io)?;
    let p = report.train.points().first().map_or(0, |m| m.dim());
    let cols: Vec<String> = (1..=p).map(|k| format!("mu_{k}")).collect();
    writeln!(w, "method,order,train_index,{}", cols.join(",")).map_err(io)?;
    for r in &report.results {
        for s in &r.trace.snapshots {
            let mu: Vec<String> = s.mu.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{},{},{},{}", r.method, s.order, s.train_index, mu.join(",")).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_summary(dir: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    let doc = serde_json::json!({
        "version": VERSION,
        "seed": report.config.greedy.seed,
        "config": report.config,
        "problem": {
            "name": report.problem_name,
            "n_dof": report.n_dof,
            "n_nodes": report.n_nodes,
            "n_train": report.train.len(),
        },
        "methods": report.summaries,
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}

/// Component matrices, the X inner product, the load and the output vector
/// in Matrix Market format under `dir/matrices`.
pub fn dump_matrices(dir: &Path, problem: &Problem) -> Result<(), HarnessError> {
    let sub = dir.join("matrices");
    fs::create_dir_all(&sub).map_err(|e| HarnessError::io(&sub, e))?;
    let write = |name: String, op: &Operator| -> Result<(), HarnessError> {
        let path = sub.join(name);
        let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        let mut w = BufWriter::new(f);
        write_matrix_market(op, &mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))
    };
    let affine = problem.affine();
    for (q, a) in affine.components().iter().enumerate() {
        write(format!("A_{q}.mtx"), a)?;
    }
    write("X.mtx".into(), problem.truth().x_inner())?;
    let column = |v: &nalgebra::DVector<f64>| Operator::Dense(nalgebra::DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
    write("f.mtx".into(), &column(affine.rhs()))?;
    write("l.mtx".into(), &column(affine.output()))
}
