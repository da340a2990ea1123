use super::cholesky::{pivoted_cholesky, DEFAULT_DROP_TOL};
use super::{SpdMethod, SurrogateDomain};
use crate::affine::{Parameter, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::dot_columns;
use crate::problem::Problem;
use crate::rb::ReducedModel;
use crate::truth::{FactorCache, TruthFactor};
use nalgebra::{DMatrix, DMatrixView, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdmOptions {
    /// Upper bound on the number `Q` of cached truth inverses.
    pub q_cap: usize,
    /// Above this many bytes the normalized error block is not stored and
    /// Gramian columns are recomputed on demand.
    pub memory_cap_bytes: usize,
}

impl Default for CdmOptions {
    fn default() -> Self {
        Self {
            q_cap: 5,
            memory_cap_bytes: 1 << 30,
        }
    }
}

/// Truth solves against the factorized operators at the first `Q` snapshot
/// parameters, from which `A~^{-1}(mu) r(mu)` is assembled online.
///
/// `inv_components[i][k][m']` is `A^{-1}(mu^{m_i}) A_k xi_{m'}` where
/// `m_i = members[i]`; basis vectors stand in for the snapshots since they
/// span the same space.
#[derive(Debug, Default)]
pub struct CdmOfflineData {
    members: Vec<usize>,
    failed: Vec<usize>,
    factors: Vec<Arc<TruthFactor>>,
    inv_f: Vec<DVector<f64>>,
    inv_components: Vec<Vec<Vec<DVector<f64>>>>,
    n_basis: usize,
    /// `P^T A_q^N P`, where the columns of `P` hold the member snapshots in
    /// basis coordinates.
    proj_components: Vec<DMatrix<f64>>,
    proj_rhs: DVector<f64>,
}

impl CdmOfflineData {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number `Q` of cached inverses.
    pub fn q_used(&self) -> usize {
        self.members.len()
    }

    /// Snapshot indices (greedy order) whose inverses are cached.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn inv_f(&self, i: usize) -> &DVector<f64> {
        &self.inv_f[i]
    }

    pub fn inv_component(&self, i: usize, k: usize, m: usize) -> &DVector<f64> {
        &self.inv_components[i][k][m]
    }

    /// Brings the data in line with `model`: adds members up to `q_cap` and
    /// solves only the basis columns that are new since the last update.
    /// A failed factorization drops that snapshot with a warning.
    pub fn update(&mut self, model: &ReducedModel, problem: &Problem, q_cap: usize, cache: &FactorCache) -> Result<()> {
        let n = model.len();
        if n == 0 {
            return Err(Error::Config("approximate inverse needs a nonempty basis".into()));
        }
        if n < self.n_basis {
            return Err(Error::Config("reduced model is smaller than the cached data".into()));
        }
        let q_a = problem.affine().q_a();
        for m in 0..n {
            if self.members.len() >= q_cap {
                break;
            }
            if self.members.contains(&m) || self.failed.contains(&m) {
                continue;
            }
            match cache.get_or_factorize(m, problem, &model.snapshot_params()[m]) {
                Ok(factor) => {
                    self.inv_f.push(factor.solve(problem.affine().rhs()));
                    self.inv_components.push(vec![Vec::new(); q_a]);
                    self.factors.push(factor);
                    self.members.push(m);
                }
                Err(e) => {
                    log::warn!("dropping snapshot {m} from the approximate inverse: {e}");
                    self.failed.push(m);
                }
            }
        }
        for (i, factor) in self.factors.iter().enumerate() {
            for k in 0..q_a {
                let cols = &mut self.inv_components[i][k];
                for mp in cols.len()..n {
                    cols.push(factor.solve(model.applied_component(mp, k)));
                }
            }
        }
        self.n_basis = n;

        let gs = model.gram_schmidt_coeffs();
        let p = DMatrix::from_fn(n, self.members.len(), |r, c| gs[(r, self.members[c])]);
        self.proj_components = model.reduced_components().iter().map(|a| p.transpose() * a * &p).collect();
        self.proj_rhs = p.transpose() * model.reduced_rhs();
        Ok(())
    }

    fn check(&self, model: &ReducedModel) -> Result<()> {
        if self.members.is_empty() || self.n_basis != model.len() {
            return Err(Error::Config(format!(
                "approximate-inverse data covers {} basis vectors with Q = {}, model has {}",
                self.n_basis,
                self.members.len(),
                model.len()
            )));
        }
        Ok(())
    }

    /// Weights of the cached inverses: the `Q`-dimensional reduced solution
    /// expressed in the member snapshots.
    fn inverse_weights(&self, theta: &[f64], rhs_coef: f64) -> Option<DVector<f64>> {
        let q = self.members.len();
        let mut a = DMatrix::zeros(q, q);
        for (t, c) in theta.iter().zip(&self.proj_components) {
            a += c * *t;
        }
        let b = &self.proj_rhs * rhs_coef;
        a.lu().solve(&b).filter(|x| x.iter().all(|v| v.is_finite()))
    }
}

/// Builds offline data from scratch with its own factor cache.
pub fn cdm_build_offline(model: &ReducedModel, problem: &Problem, q_cap: usize) -> Result<CdmOfflineData> {
    let mut data = CdmOfflineData::new();
    data.update(model, problem, q_cap, &FactorCache::new())?;
    Ok(data)
}

struct OnlineTerms {
    inverse_weights: DVector<f64>,
    residual_weights: DVector<f64>,
}

fn online_terms(model: &ReducedModel, problem: &Problem, offline: &CdmOfflineData, mu: &Parameter) -> Result<OnlineTerms> {
    let affine = problem.affine();
    let mut theta = vec![0.0; affine.q_a()];
    affine.theta_into(mu, &mut theta);
    let rhs_coef = affine.rhs_coefficient(mu);
    let fail = || Error::numerical(format!("reduced solve at {mu}"), f64::INFINITY);
    let coeffs = model.solve_leading(&theta, rhs_coef, model.len()).ok_or_else(fail)?;
    let inverse_weights = offline.inverse_weights(&theta, rhs_coef).ok_or_else(fail)?;
    problem.counters().add_reduced_solves(2);
    Ok(OnlineTerms {
        inverse_weights,
        residual_weights: model.residual_weights(&theta, rhs_coef, &coeffs),
    })
}

/// `e~(mu) = sum_m b_m(mu) A^{-1}(mu^m) r(u_N(mu); mu)`, assembled from the
/// cached solves. `b` is the `Q`-dimensional reduced solution in snapshot
/// coordinates.
pub fn cdm_approx_error(
    model: &ReducedModel,
    problem: &Problem,
    offline: &CdmOfflineData,
    mu: &Parameter,
) -> Result<DVector<f64>> {
    offline.check(model)?;
    problem.affine().bounds().check(mu)?;
    let terms = online_terms(model, problem, offline, mu)?;
    problem.counters().add_approx_error_evals(1);
    let q_a = problem.affine().q_a();
    let w = &terms.residual_weights;
    let mut e = DVector::zeros(problem.truth().n_dof());
    for (i, b) in terms.inverse_weights.iter().enumerate() {
        e.axpy(b * w[0], &offline.inv_f[i], 1.0);
        for mp in 0..model.len() {
            for k in 0..q_a {
                e.axpy(-b * w[1 + mp * q_a + k], &offline.inv_components[i][k][mp], 1.0);
            }
        }
    }
    Ok(e)
}

/// `L^T A^{-1}(mu^{m_i}) X phi_r` for every cached member `i` and every
/// residual-frame vector `phi_r`, with `X = L L^T`. Since the residual's Riesz
/// representer is `sum_r s_r phi_r`, this gives `L^T e~(mu) = sum_i b_i P_i s`
/// with a contraction length bounded by the frame rank.
#[derive(Debug, Default)]
pub struct CdmFrameSolves {
    columns: Vec<Vec<DVector<f64>>>,
}

impl CdmFrameSolves {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves only for members and frame vectors that are new.
    pub fn update(&mut self, model: &ReducedModel, problem: &Problem, offline: &CdmOfflineData) {
        let rank = model.residual_frame_rank();
        let l = problem.truth().x_cholesky_factor();
        for (i, factor) in offline.factors.iter().enumerate() {
            if self.columns.len() <= i {
                self.columns.push(Vec::new());
            }
            let cols = &mut self.columns[i];
            for r in cols.len()..rank {
                cols.push(l.tr_mul(&factor.solve(model.frame_x_vector(r))));
            }
        }
    }

    fn block(&self, q: usize, rank: usize, n_dof: usize) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(n_dof, q * rank);
        for (i, cols) in self.columns.iter().take(q).enumerate() {
            for (r, c) in cols.iter().take(rank).enumerate() {
                p.set_column(i * rank + r, c);
            }
        }
        p
    }
}

/// Pivoted Cholesky on the normalized X-Gramian of `e~` over the training set.
///
/// The Gramian is never formed: `(e~_i, e~_j)_X = y_i . y_j` with
/// `y = L^T e~`, and the `y` are assembled blockwise. Points with
/// `||e~||_X <= max(1e-14, 1e-10 max ||e~||_X)` are excluded. Returns up to
/// `budget` pivots in pivot order.
pub fn cdm_construct(
    model: &ReducedModel,
    problem: &Problem,
    offline: &CdmOfflineData,
    train: &TrainingSet,
    budget: usize,
    options: &CdmOptions,
) -> Result<SurrogateDomain> {
    let mut solves = CdmFrameSolves::new();
    cdm_construct_with_residuals(model, problem, offline, &mut solves, train, budget, options, None)
}

/// [`cdm_construct`] with frame solves kept across calls and, optionally,
/// the residual-frame coordinates of a sweep at the same basis size (one
/// column per training point) instead of fresh reduced solves.
#[allow(clippy::too_many_arguments)]
pub fn cdm_construct_with_residuals(
    model: &ReducedModel,
    problem: &Problem,
    offline: &CdmOfflineData,
    solves: &mut CdmFrameSolves,
    train: &TrainingSet,
    budget: usize,
    options: &CdmOptions,
    residuals: Option<&DMatrix<f64>>,
) -> Result<SurrogateDomain> {
    offline.check(model)?;
    let rank = model.residual_frame_rank();
    if let Some(c) = residuals {
        if c.nrows() != rank || c.ncols() != train.len() {
            return Err(Error::Config(format!(
                "residual block is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                rank,
                train.len()
            )));
        }
    }
    let mut domain = SurrogateDomain {
        indices: Vec::new(),
        method: SpdMethod::Cdm,
        outer_loop: 0,
        budget,
    };
    if budget == 0 || train.is_empty() {
        return Ok(domain);
    }
    solves.update(model, problem, offline);
    let p = solves.block(offline.q_used(), rank, problem.truth().n_dof());
    let n_train = train.len();
    let chunk_count = n_train.div_ceil(CHUNK);
    let chunk = |c: usize| -> Result<DMatrix<f64>> {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n_train);
        let known = residuals.map(|r| r.columns(lo, hi - lo));
        error_block(model, problem, offline, &p, &train.points()[lo..hi], known)
    };
    let stored = p.nrows() * n_train * std::mem::size_of::<f64>() <= options.memory_cap_bytes;
    let blocks: Vec<DMatrix<f64>> = (0..chunk_count).into_par_iter().map(chunk).collect::<Result<_>>()?;
    let norms: Vec<f64> = blocks.iter().flat_map(|b| b.column_iter().map(|c| c.norm()).collect::<Vec<_>>()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let floor = f64::max(1e-14, 1e-10 * max_norm);
    let admissible: Vec<usize> = (0..n_train).filter(|&i| norms[i] > floor).collect();
    if admissible.is_empty() {
        return Ok(domain);
    }
    let diag = vec![1.0; admissible.len()];
    let counters = problem.counters().clone();
    let result = if stored {
        let mut y = DMatrix::zeros(p.nrows(), admissible.len());
        for (col, &i) in admissible.iter().enumerate() {
            let b = &blocks[i / CHUNK];
            y.set_column(col, &(b.column(i % CHUNK) / norms[i]));
        }
        drop(blocks);
        pivoted_cholesky(&diag, budget, DEFAULT_DROP_TOL, |j| {
            counters.add_cholesky_steps(1);
            let mut g = dot_columns(&y, y.column(j).as_slice());
            g[j] = 1.0;
            g
        })
    } else {
        drop(blocks);
        let mut position = vec![usize::MAX; n_train];
        for (col, &i) in admissible.iter().enumerate() {
            position[i] = col;
        }
        pivoted_cholesky(&diag, budget, DEFAULT_DROP_TOL, |j| {
            counters.add_cholesky_steps(1);
            let i = admissible[j];
            let yj = chunk(i / CHUNK).expect("chunk evaluated before").column(i % CHUNK) / norms[i];
            let mut g = DVector::zeros(admissible.len());
            for c in 0..chunk_count {
                let b = chunk(c).expect("chunk evaluated before");
                for (off, col) in b.column_iter().enumerate() {
                    let p = position[c * CHUNK + off];
                    if p != usize::MAX {
                        g[p] = col.dot(&yj) / norms[c * CHUNK + off];
                    }
                }
            }
            g[j] = 1.0;
            g
        })
    };
    domain.indices = result.pivots.iter().map(|&j| admissible[j]).collect();
    Ok(domain)
}

/// `L^T e~(mu)` for a block of points as the columns of `P (b (x) s)`.
fn error_block(
    model: &ReducedModel,
    problem: &Problem,
    offline: &CdmOfflineData,
    p: &DMatrix<f64>,
    points: &[Parameter],
    known: Option<DMatrixView<'_, f64>>,
) -> Result<DMatrix<f64>> {
    let affine = problem.affine();
    let rank = model.residual_frame_rank();
    let mut theta = vec![0.0; affine.q_a()];
    let mut w = DMatrix::zeros(p.ncols(), points.len());
    let fail = |mu: &Parameter| Error::numerical(format!("reduced solve at {mu}"), f64::INFINITY);
    for (j, mu) in points.iter().enumerate() {
        affine.theta_into(mu, &mut theta);
        let rhs_coef = affine.rhs_coefficient(mu);
        let s = match known {
            Some(k) => k.column(j).into_owned(),
            None => {
                let coeffs = model.solve_leading(&theta, rhs_coef, model.len()).ok_or_else(|| fail(mu))?;
                problem.counters().add_reduced_solves(1);
                model.residual_coordinates(&theta, rhs_coef, &coeffs)
            }
        };
        let b = offline.inverse_weights(&theta, rhs_coef).ok_or_else(|| fail(mu))?;
        problem.counters().add_reduced_solves(1);
        for (i, bi) in b.iter().enumerate() {
            w.view_mut((i * rank, j), (rank, 1)).zip_apply(&s, |x, v| *x = bi * v);
        }
    }
    problem.counters().add_approx_error_evals(points.len() as u64);
    Ok(p * w)
}
