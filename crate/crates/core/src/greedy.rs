//! Greedy snapshot selection: the classical full-sweep loop and the
//! offline-enhanced loop that alternates global sweeps with sweeps over a
//! surrogate parameter domain.

use crate::affine::{Parameter, TrainingSet};
use crate::counters::CostSnapshot;
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rb::ReducedModel;
use crate::spd::{cdm_construct_with_residuals, smm_construct, CdmFrameSolves, CdmOfflineData, CdmOptions, SpdMethod, SurrogateDomain};
use crate::truth::{factorize, truth_solve_with, FactorCache};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Points per unit of parallel work in a sweep. Fixed, so results do not
/// depend on the worker count.
const SWEEP_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Classical,
    Smm,
    Cdm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Smm => "smm",
            Self::Cdm => "cdm",
        }
    }

    pub fn spd(self) -> Option<SpdMethod> {
        match self {
            Self::Classical => None,
            Self::Smm => Some(SpdMethod::Smm),
            Self::Cdm => Some(SpdMethod::Cdm),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "smm" => Ok(Self::Smm),
            "cdm" => Ok(Self::Cdm),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Surrogate budget `M_l` as a function of the outer-loop index `l >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MSchedule {
    /// `M_l = factor * (l + 1)`.
    Linear { factor: usize },
    Constant { m: usize },
}

impl MSchedule {
    pub fn budget(&self, ell: usize) -> usize {
        match *self {
            Self::Linear { factor } => factor * (ell + 1),
            Self::Constant { m } => m,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Linear { factor } => factor >= 1,
            Self::Constant { m } => m >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("surrogate budget schedule {self:?} must be at least 1")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub eps_tol: f64,
    pub n_max: usize,
    pub method: Method,
    pub k_damp: usize,
    pub m_schedule: MSchedule,
    pub seed: u64,
    #[serde(default)]
    pub cdm: CdmOptions,
}

impl GreedyConfig {
    /// Defaults for each method: SMM uses `M_l = 2(l+1)`, `K_damp = 1`; CDM
    /// uses `M_l = 20(l+1)`, `K_damp = 10`.
    pub fn for_method(method: Method, eps_tol: f64, n_max: usize, seed: u64) -> Self {
        let (k_damp, factor) = match method {
            Method::Classical => (1, 1),
            Method::Smm => (1, 2),
            Method::Cdm => (10, 20),
        };
        Self {
            eps_tol,
            n_max,
            method,
            k_damp,
            m_schedule: MSchedule::Linear { factor },
            seed,
            cdm: CdmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tol > 0.0) {
            return Err(Error::Config(format!("eps_tol must be positive, got {}", self.eps_tol)));
        }
        if self.k_damp < 1 {
            return Err(Error::Config("k_damp must be at least 1".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.method == Method::Cdm && self.cdm.q_cap < 1 {
            return Err(Error::Config("cdm q_cap must be at least 1".into()));
        }
        self.m_schedule.validate()
    }
}

/// Result of evaluating the estimator over a domain.
#[derive(Debug, Clone)]
pub struct Sweep {
    /// Position in the domain of the maximizer.
    pub position: usize,
    /// Training-set index of the maximizer.
    pub index: usize,
    pub delta_max: f64,
    /// Estimates in domain order.
    pub values: Vec<f64>,
}

/// One estimator sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Basis size during the sweep.
    pub n: usize,
    pub ell: usize,
    pub global: bool,
    pub domain_size: usize,
    pub delta_max: f64,
    pub argmax: usize,
    /// Snapshot added as a result, as a training index.
    pub selected: Option<usize>,
    pub cum_estimator_evals: u64,
    pub cum_wall_ms: f64,
}

/// One pass of the outer loop of the enhanced greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub ell: usize,
    pub e_ell: f64,
    pub m_ell: usize,
    pub surrogate_size: usize,
    pub n_ell: usize,
    pub sar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub order: usize,
    pub train_index: usize,
    pub mu: Parameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxBasis,
    TrainingExhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub method: Method,
    pub n_train: usize,
    pub sweeps: Vec<SweepRecord>,
    pub outer: Vec<OuterRecord>,
    pub snapshots: Vec<SnapshotRecord>,
    pub rejected: Vec<usize>,
    pub domains: Vec<SurrogateDomain>,
    pub termination: Termination,
    /// `Delta_max` of the last sweep over the full training set.
    pub final_global_delta: f64,
    pub total_wall_ms: f64,
    /// Time spent in truth solves and basis extension, included in the total.
    pub snapshot_wall_ms: f64,
    /// Time spent constructing surrogate domains, included in the total.
    pub spd_wall_ms: f64,
    pub costs: CostSnapshot,
}

impl GreedyTrace {
    pub fn final_n(&self) -> usize {
        self.snapshots.len()
    }

    pub fn global_sweeps(&self) -> impl Iterator<Item = &SweepRecord> {
        self.sweeps.iter().filter(|s| s.global)
    }

    /// Estimator evaluations spent in sweeps over the full training set.
    pub fn global_evals(&self) -> u64 {
        self.global_sweeps().map(|s| s.domain_size as u64).sum()
    }

    pub fn surrogate_evals(&self) -> u64 {
        self.sweeps.iter().filter(|s| !s.global).map(|s| s.domain_size as u64).sum()
    }

    pub fn total_sweep_evals(&self) -> u64 {
        self.sweeps.iter().map(|s| s.domain_size as u64).sum()
    }

    /// Number of outer iterations, i.e. of global sweeps.
    pub fn outer_loops(&self) -> usize {
        self.global_sweeps().count()
    }

    /// Largest surrogate budget used.
    pub fn max_budget(&self) -> usize {
        self.outer.iter().map(|o| o.m_ell).max().unwrap_or(0)
    }
}

/// Estimates over `domain` (training indices) with the maximizer; ties go to
/// the lowest position.
pub fn argmax_sweep(model: &ReducedModel, problem: &Problem, train: &TrainingSet, domain: &[usize]) -> Result<Sweep> {
    if domain.is_empty() {
        return Err(Error::Config("sweep over an empty domain".into()));
    }
    let (values, _) = sweep_values(model, problem, train, domain, false)?;
    let position = argmax_where(&values, |_| true).expect("nonempty domain");
    Ok(Sweep {
        position,
        index: domain[position],
        delta_max: values[position],
        values,
    })
}

/// Estimates over `domain`, with the residual-frame coordinates as columns
/// of a matrix when `keep` is set.
fn sweep_values(
    model: &ReducedModel,
    problem: &Problem,
    train: &TrainingSet,
    domain: &[usize],
    keep: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    let chunks: Vec<(Vec<f64>, Option<DMatrix<f64>>)> = domain
        .par_chunks(SWEEP_CHUNK)
        .map(|chunk| {
            let points: Vec<&Parameter> = chunk.iter().map(|&i| train.get(i)).collect();
            if keep {
                model.estimate_batch_with_residuals(problem, &points).map(|(v, c)| (v, Some(c)))
            } else {
                model.estimate_batch(problem, &points).map(|v| (v, None))
            }
        })
        .collect::<Result<_>>()?;
    let coeffs = keep.then(|| {
        let mut all = DMatrix::zeros(model.residual_frame_rank(), domain.len());
        let mut col = 0;
        for c in chunks.iter().filter_map(|(_, c)| c.as_ref()) {
            all.columns_mut(col, c.ncols()).copy_from(c);
            col += c.ncols();
        }
        all
    });
    Ok((chunks.into_iter().flat_map(|(v, _)| v).collect(), coeffs))
}

/// First position of the largest admissible value. NaN counts as larger than
/// everything so that a broken estimate is never silently skipped.
fn argmax_where(values: &[f64], admissible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if !admissible(i) {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if v.is_nan() && !values[b].is_nan() => best = Some(i),
            Some(b) if *v > values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Builds a surrogate domain from the data of the last global sweep.
pub trait SurrogateBuilder {
    fn build(&mut self, ctx: &SpdContext<'_>) -> Result<SurrogateDomain>;

    /// Called after every successful basis extension.
    fn snapshot_added(&mut self, _problem: &Problem, _order: usize, _factor: Option<Arc<crate::truth::TruthFactor>>) {}

    /// Whether factorizations of the snapshot with this order are worth keeping.
    fn wants_factor(&self, _order: usize) -> bool {
        false
    }

    /// Whether global sweeps should keep the residual coordinates for `build`.
    fn wants_residuals(&self) -> bool {
        false
    }
}

pub struct SpdContext<'a> {
    pub model: &'a ReducedModel,
    pub problem: &'a Problem,
    pub train: &'a TrainingSet,
    /// Estimates over the full training set at the current basis size.
    pub deltas: &'a [f64],
    /// Residual Riesz representers from the same sweep in residual-frame
    /// coordinates (one column per training point), if the builder asked.
    pub residuals: Option<&'a DMatrix<f64>>,
    pub eps_tol: f64,
    pub budget: usize,
    pub ell: usize,
}

/// Level-set sampling of the last global sweep.
#[derive(Debug, Default)]
pub struct SmmBuilder;

impl SurrogateBuilder for SmmBuilder {
    fn build(&mut self, ctx: &SpdContext<'_>) -> Result<SurrogateDomain> {
        Ok(smm_construct(ctx.deltas, ctx.eps_tol, ctx.budget))
    }
}

/// Pivoted Cholesky on approximate error vectors.
#[derive(Debug, Default)]
pub struct CdmBuilder {
    pub options: CdmOptions,
    offline: CdmOfflineData,
    solves: CdmFrameSolves,
    cache: FactorCache,
}

impl CdmBuilder {
    pub fn new(options: CdmOptions) -> Self {
        Self {
            options,
            offline: CdmOfflineData::new(),
            solves: CdmFrameSolves::new(),
            cache: FactorCache::new(),
        }
    }

    pub fn offline(&self) -> &CdmOfflineData {
        &self.offline
    }
}

impl SurrogateBuilder for CdmBuilder {
    fn build(&mut self, ctx: &SpdContext<'_>) -> Result<SurrogateDomain> {
        self.offline.update(ctx.model, ctx.problem, self.options.q_cap, &self.cache)?;
        cdm_construct_with_residuals(
            ctx.model,
            ctx.problem,
            &self.offline,
            &mut self.solves,
            ctx.train,
            ctx.budget,
            &self.options,
            ctx.residuals,
        )
    }

    fn wants_residuals(&self) -> bool {
        true
    }

    fn snapshot_added(&mut self, _problem: &Problem, order: usize, factor: Option<Arc<crate::truth::TruthFactor>>) {
        if let Some(f) = factor {
            self.cache.insert(order, f);
        }
    }

    fn wants_factor(&self, order: usize) -> bool {
        order < self.options.q_cap
    }
}

/// Mutable state shared by both drivers.
struct Run<'a> {
    problem: &'a Problem,
    train: &'a TrainingSet,
    config: &'a GreedyConfig,
    model: ReducedModel,
    /// Selected or rejected training indices.
    excluded: Vec<bool>,
    trace: GreedyTrace,
    start: Instant,
    counters_start: CostSnapshot,
}

impl<'a> Run<'a> {
    fn new(problem: &'a Problem, train: &'a TrainingSet, config: &'a GreedyConfig) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let counters_start = problem.counters().snapshot();
        let start = Instant::now();
        let model = ReducedModel::new(problem);
        Ok(Self {
            problem,
            train,
            config,
            model,
            excluded: vec![false; train.len()],
            trace: GreedyTrace {
                method: config.method,
                n_train: train.len(),
                sweeps: Vec::new(),
                outer: Vec::new(),
                snapshots: Vec::new(),
                rejected: Vec::new(),
                domains: Vec::new(),
                termination: Termination::Converged,
                final_global_delta: f64::INFINITY,
                total_wall_ms: 0.0,
                snapshot_wall_ms: 0.0,
                spd_wall_ms: 0.0,
                costs: CostSnapshot::default(),
            },
            start,
            counters_start,
        })
    }

    fn elapsed_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn estimator_evals(&self) -> u64 {
        self.problem.counters().snapshot().since(&self.counters_start).estimator_evals
    }

    /// Solves at `index` and extends the basis. `Ok(false)` on rejection,
    /// after which the index is excluded.
    fn add_snapshot<'b>(&mut self, index: usize, builder: Option<&mut (dyn SurrogateBuilder + 'b)>) -> Result<bool> {
        let t0 = Instant::now();
        let order = self.model.len();
        let mu = self.train.get(index);
        let factor = Arc::new(factorize(self.problem, mu)?);
        let snapshot = truth_solve_with(self.problem, &factor)?;
        self.excluded[index] = true;
        let added = match self.model.extend_basis_tagged(self.problem, &snapshot, Some(index)) {
            Ok(()) => {
                self.trace.snapshots.push(SnapshotRecord {
                    order,
                    train_index: index,
                    mu: mu.clone(),
                });
                if let Some(b) = builder {
                    let keep = b.wants_factor(order).then_some(factor);
                    b.snapshot_added(self.problem, order, keep);
                }
                true
            }
            Err(Error::DependentSnapshot { remaining, threshold }) => {
                log::warn!("skipping dependent snapshot at training index {index} ({remaining:e} < {threshold:e})");
                self.trace.rejected.push(index);
                false
            }
            Err(e) => return Err(e),
        };
        self.trace.snapshot_wall_ms += t0.elapsed().as_secs_f64() * 1e3;
        Ok(added)
    }

    fn seed(&mut self, builder: Option<&mut dyn SurrogateBuilder>) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let index = rng.random_range(0..self.train.len());
        if !self.add_snapshot(index, builder)? {
            return Err(Error::numerical("the first snapshot is zero", f64::INFINITY));
        }
        Ok(())
    }

    /// Sweeps `domain`, records it, and returns the values.
    fn sweep(&mut self, domain: &[usize], ell: usize, global: bool) -> Result<Vec<f64>> {
        self.sweep_keeping(domain, ell, global, false).map(|(v, _)| v)
    }

    fn sweep_keeping(
        &mut self,
        domain: &[usize],
        ell: usize,
        global: bool,
        keep: bool,
    ) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let (values, coeffs) = sweep_values(&self.model, self.problem, self.train, domain, keep)?;
        let pos = if global {
            argmax_where(&values, |p| !self.excluded[domain[p]])
        } else {
            argmax_where(&values, |_| true)
        };
        let (argmax, delta_max) = pos.map_or((usize::MAX, 0.0), |p| (domain[p], values[p]));
        if global {
            self.trace.final_global_delta = delta_max;
            log::debug!("global sweep at N = {}: max estimate {delta_max:e}", self.model.len());
        }
        self.trace.sweeps.push(SweepRecord {
            n: self.model.len(),
            ell,
            global,
            domain_size: domain.len(),
            delta_max,
            argmax,
            selected: None,
            cum_estimator_evals: self.estimator_evals(),
            cum_wall_ms: self.elapsed_ms(),
        });
        Ok((values, coeffs))
    }

    /// Adds the best admissible candidate of the last sweep, walking down the
    /// ranking past rejected snapshots. Returns the accepted index.
    fn augment_from<'b>(
        &mut self,
        domain: &[usize],
        values: &[f64],
        mut builder: Option<&mut (dyn SurrogateBuilder + 'b)>,
    ) -> Result<Option<usize>> {
        let mut tried = vec![false; domain.len()];
        loop {
            let Some(p) = argmax_where(values, |p| !tried[p] && !self.excluded[domain[p]]) else {
                return Ok(None);
            };
            tried[p] = true;
            if self.add_snapshot(domain[p], builder.as_deref_mut())? {
                if let Some(last) = self.trace.sweeps.last_mut() {
                    last.selected = Some(domain[p]);
                }
                return Ok(Some(domain[p]));
            }
        }
    }

    fn finish(mut self, termination: Termination) -> (ReducedModel, GreedyTrace) {
        self.trace.termination = termination;
        self.trace.total_wall_ms = self.elapsed_ms();
        self.trace.costs = self.problem.counters().snapshot().since(&self.counters_start);
        (self.model, self.trace)
    }
}

/// Full-sweep greedy: a seeded random first snapshot, then repeated sweeps of
/// the whole training set until `Delta_max <= eps_tol` or `n = n_max`.
pub fn classical_greedy(
    problem: &Problem,
    train: &TrainingSet,
    config: &GreedyConfig,
) -> Result<(ReducedModel, GreedyTrace)> {
    let mut run = Run::new(problem, train, config)?;
    run.seed(None)?;
    let all: Vec<usize> = (0..train.len()).collect();
    let termination = loop {
        let values = run.sweep(&all, 0, true)?;
        if run.trace.final_global_delta <= config.eps_tol {
            break Termination::Converged;
        }
        if run.model.len() >= config.n_max {
            break Termination::MaxBasis;
        }
        if run.augment_from(&all, &values, None)?.is_none() {
            break Termination::TrainingExhausted;
        }
    };
    Ok(run.finish(termination))
}

/// Offline-enhanced greedy. Each outer iteration `l` sweeps the full training
/// set (giving `E_l`), builds a surrogate domain from that sweep, adds the
/// global maximizer, then keeps adding surrogate maximizers while the
/// surrogate maximum `eps` exceeds both `eps_tol` and `E_l / (K_damp (l+1))`.
///
/// Only a global sweep can end the run, so the final estimate is certified
/// over the whole training set.
pub fn offline_enhanced_greedy(
    problem: &Problem,
    train: &TrainingSet,
    config: &GreedyConfig,
    builder: &mut dyn SurrogateBuilder,
) -> Result<(ReducedModel, GreedyTrace)> {
    let spd_method = config
        .method
        .spd()
        .ok_or_else(|| Error::Config("the enhanced greedy needs an smm or cdm method".into()))?;
    let mut run = Run::new(problem, train, config)?;
    run.seed(Some(builder))?;
    let all: Vec<usize> = (0..train.len()).collect();
    let mut ell = 0;
    let termination = loop {
        ell += 1;
        let (values, residuals) = run.sweep_keeping(&all, ell, true, builder.wants_residuals())?;
        let e_ell = run.trace.final_global_delta;
        if e_ell <= config.eps_tol {
            break Termination::Converged;
        }
        if run.model.len() >= config.n_max {
            break Termination::MaxBasis;
        }

        let budget = config.m_schedule.budget(ell);
        let t0 = Instant::now();
        let ctx = SpdContext {
            model: &run.model,
            problem,
            train,
            deltas: &values,
            residuals: residuals.as_ref(),
            eps_tol: config.eps_tol,
            budget,
            ell,
        };
        let mut domain = builder.build(&ctx)?.with_outer_loop(ell);
        if domain.method != spd_method {
            return Err(Error::Config(format!(
                "surrogate builder produced a {:?} domain for method {}",
                domain.method, config.method
            )));
        }
        run.trace.spd_wall_ms += t0.elapsed().as_secs_f64() * 1e3;

        if run.augment_from(&all, &values, Some(builder))?.is_none() {
            break Termination::TrainingExhausted;
        }
        let initial_size = domain.len();
        run.trace.domains.push(domain.clone());
        let mut surrogate: Vec<usize> = domain.indices.drain(..).filter(|&i| !run.excluded[i]).collect();

        let threshold = e_ell / (config.k_damp as f64 * (ell + 1) as f64);
        let mut eps = e_ell;
        let mut n_ell = 0;
        while eps > config.eps_tol && eps > threshold && !surrogate.is_empty() && run.model.len() < config.n_max {
            let sur_values = run.sweep(&surrogate, ell, false)?;
            eps = run.trace.sweeps.last().map_or(0.0, |s| s.delta_max);
            if eps <= config.eps_tol {
                break;
            }
            let added = run.augment_from(&surrogate, &sur_values, Some(builder))?;
            surrogate.retain(|&i| !run.excluded[i]);
            if added.is_some() {
                n_ell += 1;
            }
        }
        run.trace.outer.push(OuterRecord {
            ell,
            e_ell,
            m_ell: budget,
            surrogate_size: initial_size,
            n_ell,
            sar: n_ell as f64 / budget as f64,
        });
    };
    Ok(run.finish(termination))
}

/// Dispatches on `config.method`.
pub fn run_greedy(problem: &Problem, train: &TrainingSet, config: &GreedyConfig) -> Result<(ReducedModel, GreedyTrace)> {
    match config.method {
        Method::Classical => classical_greedy(problem, train, config),
        Method::Smm => offline_enhanced_greedy(problem, train, config, &mut SmmBuilder),
        Method::Cdm => offline_enhanced_greedy(problem, train, config, &mut CdmBuilder::new(config.cdm)),
    }
}

/// `(l, N_l / M_l)` for every outer iteration that built a surrogate domain.
pub fn surrogate_acceptance_ratio(trace: &GreedyTrace) -> Vec<(usize, f64)> {
    trace.outer.iter().map(|o| (o.ell, o.sar)).collect()
}
