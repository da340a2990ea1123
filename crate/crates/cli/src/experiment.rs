//! Runs the configured methods on one problem and summarizes their costs.

use crate::config::ExperimentConfig;
use crate::output;
use crate::HarnessError;
use rbx_core::{run_greedy, sample_training_set, GreedyTrace, Method, Problem, ReducedModel, TrainingSet};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct MethodResult {
    pub method: Method,
    /// Trace of the fastest repetition.
    pub trace: GreedyTrace,
    pub model: ReducedModel,
    pub repetition_ms: Vec<f64>,
}

/// Measured ratio of estimator evaluations against `l/N + M_max/N_train + 0.05`,
/// with `l` the enhanced run's outer iterations and `N` the classical basis size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostRatio {
    pub measured: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub ell: usize,
    pub n_classical: usize,
    pub m_max: usize,
    pub n_train: usize,
}

pub const COST_RATIO_SLACK: f64 = 0.05;

impl CostRatio {
    pub fn compute(enhanced: &GreedyTrace, classical: &GreedyTrace) -> Self {
        let ell = enhanced.outer_loops();
        let n_classical = classical.final_n();
        let m_max = enhanced.max_budget();
        let n_train = enhanced.n_train;
        let measured = enhanced.costs.estimator_evals as f64 / classical.costs.estimator_evals as f64;
        let bound = ell as f64 / n_classical as f64 + m_max as f64 / n_train as f64 + COST_RATIO_SLACK;
        Self {
            measured,
            bound,
            satisfied: measured <= bound,
            ell,
            n_classical,
            m_max,
            n_train,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub final_n: usize,
    pub final_global_delta: f64,
    pub termination: rbx_core::Termination,
    pub total_wall_ms: f64,
    pub snapshot_wall_ms: f64,
    pub spd_wall_ms: f64,
    pub repetition_ms: Vec<f64>,
    pub outer_loops: usize,
    pub estimator_evals: u64,
    pub rejected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_sar: Option<f64>,
    /// Classical wall time over this method's wall time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speedup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_ratio: Option<CostRatio>,
    pub costs: rbx_core::CostSnapshot,
}

pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub problem_name: String,
    pub n_dof: usize,
    pub n_nodes: usize,
    pub train: TrainingSet,
    pub results: Vec<MethodResult>,
    pub summaries: Vec<MethodSummary>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

pub fn mean_sar(trace: &GreedyTrace) -> Option<f64> {
    if trace.outer.is_empty() {
        return None;
    }
    Some(trace.outer.iter().map(|o| o.sar).sum::<f64>() / trace.outer.len() as f64)
}

/// Runs every configured method in order, each `repetitions` times on a pool
/// of `workers` threads, keeping the fastest repetition.
pub fn run_methods(
    problem: &Problem,
    train: &TrainingSet,
    config: &ExperimentConfig,
    workers: usize,
) -> Result<Vec<MethodResult>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))?;
    let mut results = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let greedy = config.greedy_config(method);
        let mut best: Option<(GreedyTrace, ReducedModel)> = None;
        let mut times = Vec::with_capacity(config.repetitions);
        for rep in 0..config.repetitions {
            problem.counters().reset();
            let (model, trace) = pool.install(|| run_greedy(problem, train, &greedy))?;
            log::info!(
                "{method} repetition {rep}: N = {}, {:.1} ms, final global estimate {:e}",
                trace.final_n(),
                trace.total_wall_ms,
                trace.final_global_delta
            );
            times.push(trace.total_wall_ms);
            if best.as_ref().is_none_or(|(t, _)| trace.total_wall_ms < t.total_wall_ms) {
                best = Some((trace, model));
            }
        }
        let (trace, model) = best.expect("at least one repetition");
        results.push(MethodResult {
            method,
            trace,
            model,
            repetition_ms: times,
        });
    }
    Ok(results)
}

pub fn summarize(results: &[MethodResult]) -> Vec<MethodSummary> {
    let classical = results.iter().find(|r| r.method == Method::Classical);
    results
        .iter()
        .map(|r| {
            let t = &r.trace;
            let enhanced = r.method != Method::Classical;
            let speedup = classical.filter(|_| enhanced).map(|c| c.trace.total_wall_ms / t.total_wall_ms);
            let cost_ratio = classical.filter(|_| enhanced).map(|c| CostRatio::compute(t, &c.trace));
            MethodSummary {
                method: r.method,
                final_n: t.final_n(),
                final_global_delta: t.final_global_delta,
                termination: t.termination,
                total_wall_ms: t.total_wall_ms,
                snapshot_wall_ms: t.snapshot_wall_ms,
                spd_wall_ms: t.spd_wall_ms,
                repetition_ms: r.repetition_ms.clone(),
                outer_loops: t.outer_loops(),
                estimator_evals: t.costs.estimator_evals,
                rejected: t.rejected.len(),
                mean_sar: mean_sar(t),
                speedup,
                cost_ratio,
                costs: t.costs,
            }
        })
        .collect()
}

/// Builds the problem and training set, runs the methods and, when an output
/// directory is given, writes the CSV and JSON artifacts there.
///
/// A `RUN_INCOMPLETE` marker sits in the directory until every file is written.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
    workers: usize,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let out_dir = out_dir.map(Path::to_path_buf).or_else(|| config.output_dir.clone());
    if let Some(dir) = &out_dir {
        output::begin(dir)?;
    }
    let outcome = run_inner(config, out_dir.as_deref(), workers);
    if let (Some(dir), Err(e)) = (&out_dir, &outcome) {
        output::mark_failed(dir, e);
    }
    let mut report = outcome?;
    report.output_dir = out_dir;
    Ok(report)
}

fn run_inner(config: &ExperimentConfig, out_dir: Option<&Path>, workers: usize) -> Result<ExperimentReport, HarnessError> {
    let problem = config.problem.build()?;
    let train = sample_training_set(problem.affine().bounds(), &config.training_sampling())?;
    if let (Some(dir), true) = (out_dir, config.dump_matrices) {
        output::dump_matrices(dir, &problem)?;
    }
    let results = run_methods(&problem, &train, config, workers)?;
    let summaries = summarize(&results);
    let report = ExperimentReport {
        config: config.clone(),
        problem_name: problem.name().to_string(),
        n_dof: problem.truth().n_dof(),
        n_nodes: problem.truth().n_nodes(),
        train,
        results,
        summaries,
        output_dir: None,
    };
    if let Some(dir) = out_dir {
        output::write_all(dir, &report)?;
        output::finish(dir)?;
    }
    Ok(report)
}
