//! Residual dual norms, coercivity lower bounds and the error estimator.

use super::{ReducedModel, ReducedSolution};
use crate::affine::Parameter;
use crate::error::{Error, Result};
use crate::problem::Problem;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Points per block in batched estimator evaluation.
const BATCH: usize = 256;

/// Strategy for `alpha_LB(mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoercivityBound {
    /// `min_q theta_q(mu) / theta_q(anchor) * alpha(anchor)`; needs positive coefficients.
    MinTheta { anchor_theta: Vec<f64>, anchor_alpha: f64 },
    Constant(f64),
    /// Exact generalized eigenvalue at every call. Truth-dimension cost.
    Eigen,
}

impl CoercivityBound {
    pub fn min_theta(problem: &Problem, anchor: &Parameter) -> Result<Self> {
        let anchor_theta = problem.affine().evaluate_theta(anchor)?;
        if anchor_theta.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::StrategyInvalid(format!(
                "min-theta anchor {anchor} has non-positive coefficients"
            )));
        }
        let anchor_alpha = stability_constant(problem, anchor)?;
        if !(anchor_alpha > 0.0) {
            return Err(Error::StrategyInvalid(format!(
                "operator is not coercive at the anchor (alpha = {anchor_alpha:e})"
            )));
        }
        Ok(Self::MinTheta {
            anchor_theta,
            anchor_alpha,
        })
    }

    /// `theta` must be `theta(mu)`; it is passed separately so sweeps evaluate it once.
    pub fn evaluate(&self, problem: &Problem, mu: &Parameter, theta: &[f64]) -> Result<f64> {
        match self {
            Self::MinTheta {
                anchor_theta,
                anchor_alpha,
            } => {
                let mut ratio = f64::INFINITY;
                for (t, a) in theta.iter().zip(anchor_theta) {
                    if !(*t > 0.0) {
                        return Err(Error::StrategyInvalid(format!(
                            "min-theta bound needs positive coefficients, got {t} at {mu}"
                        )));
                    }
                    ratio = ratio.min(t / a);
                }
                Ok(ratio * anchor_alpha)
            }
            Self::Constant(c) => Ok(*c),
            Self::Eigen => stability_constant(problem, mu),
        }
    }

    /// True when evaluation never touches truth-dimension data.
    pub fn is_online(&self) -> bool {
        !matches!(self, Self::Eigen)
    }
}

/// Smallest eigenvalue of `(sym A(mu), X)`, i.e. the coercivity constant of
/// the truth operator in the X norm. Dense, `O(n_dof^3)`.
pub fn stability_constant(problem: &Problem, mu: &Parameter) -> Result<f64> {
    let a = problem.affine().assemble_operator(mu)?.to_dense();
    let sym = (&a + a.transpose()) * 0.5;
    let l = problem.truth().x_cholesky_factor();
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::numerical("inverting the X Cholesky factor", f64::INFINITY))?;
    let mut c = &linv * sym * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn coercivity_lower_bound(problem: &Problem, mu: &Parameter) -> Result<f64> {
    let theta = problem.affine().evaluate_theta(mu)?;
    problem.coercivity().evaluate(problem, mu, &theta)
}

/// `||r(u_N(mu); mu)||_{X'}^2`, evaluated from the orthonormal residual frame.
/// Cost `O(rank * N * Q_a)` and independent of the truth dimension.
pub fn residual_dual_norm_sq(model: &ReducedModel, problem: &Problem, mu: &Parameter, sol: &ReducedSolution) -> f64 {
    let affine = problem.affine();
    let mut theta = vec![0.0; affine.q_a()];
    affine.theta_into(mu, &mut theta);
    model.residual_norm_sq_frame(&theta, affine.rhs_coefficient(mu), &sol.coeffs)
}

/// The same quantity from the Gram blocks `(C,C)`, `(C,L)` and `(L,L)`.
///
/// Cancels badly once the residual is small relative to `||f||`; negative
/// results are clamped to zero.
pub fn residual_dual_norm_sq_gram(
    model: &ReducedModel,
    problem: &Problem,
    mu: &Parameter,
    sol: &ReducedSolution,
) -> f64 {
    let affine = problem.affine();
    let mut theta = vec![0.0; affine.q_a()];
    affine.theta_into(mu, &mut theta);
    let v = model.residual_norm_sq_gram(&theta, affine.rhs_coefficient(mu), &sol.coeffs);
    if v < 0.0 {
        if -v > 1e-6 * model.residual_cc() {
            log::warn!("residual norm squared {v:e} is negative beyond round-off at {mu}");
        }
        return 0.0;
    }
    v
}

/// `Delta_N(mu) = ||r||_{X'} / alpha_LB(mu)`; with an empty basis this is
/// `||f||_{X'} / alpha_LB(mu)`.
pub fn error_estimate(model: &ReducedModel, problem: &Problem, mu: &Parameter) -> Result<f64> {
    let affine = problem.affine();
    let theta = affine.evaluate_theta(mu)?;
    let alpha = problem.coercivity().evaluate(problem, mu, &theta)?;
    problem.counters().add_estimator_evals(1);
    let rhs_coef = affine.rhs_coefficient(mu);
    if model.is_empty() {
        return Ok(model.residual_cc().max(0.0).sqrt() * rhs_coef.abs() / alpha);
    }
    problem.counters().add_reduced_solves(1);
    let coeffs = model
        .solve_leading(&theta, rhs_coef, model.len())
        .ok_or_else(|| Error::numerical(format!("reduced solve at {mu}"), f64::INFINITY))?;
    let r2 = model.residual_norm_sq_frame(&theta, rhs_coef, &coeffs);
    Ok(r2.max(0.0).sqrt() / alpha)
}

impl ReducedModel {
    /// Estimates for a block of parameters. Residual weights are gathered into
    /// one matrix so the frame contraction is a single matrix product.
    pub fn estimate_batch(&self, problem: &Problem, points: &[&Parameter]) -> Result<Vec<f64>> {
        self.estimate_impl(problem, points, false).map(|(v, _)| v)
    }

    /// As [`ReducedModel::estimate_batch`], also returning the residual Riesz
    /// representers in residual-frame coordinates, one column per point.
    pub fn estimate_batch_with_residuals(
        &self,
        problem: &Problem,
        points: &[&Parameter],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.estimate_impl(problem, points, true)
            .map(|(v, c)| (v, c.expect("residuals requested")))
    }

    fn estimate_impl(
        &self,
        problem: &Problem,
        points: &[&Parameter],
        keep: bool,
    ) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let affine = problem.affine();
        let q_a = affine.q_a();
        let n = self.len();
        let k = 1 + n * q_a;
        let frame = self.frame.coeffs.columns(0, k);
        let mut out = Vec::with_capacity(points.len());
        let mut kept = keep.then(|| DMatrix::zeros(frame.nrows(), points.len()));
        let mut theta = vec![0.0; q_a];
        for (c, chunk) in points.chunks(BATCH).enumerate() {
            let mut w = DMatrix::zeros(k, chunk.len());
            let mut alphas = Vec::with_capacity(chunk.len());
            for (j, mu) in chunk.iter().enumerate() {
                affine.theta_into(mu, &mut theta);
                alphas.push(problem.coercivity().evaluate(problem, mu, &theta)?);
                let rhs_coef = affine.rhs_coefficient(mu);
                let coeffs = if n == 0 {
                    DVector::zeros(0)
                } else {
                    self.solve_leading(&theta, rhs_coef, n)
                        .ok_or_else(|| Error::numerical(format!("reduced solve at {mu}"), f64::INFINITY))?
                };
                w.set_column(j, &self.residual_weights(&theta, rhs_coef, &coeffs));
            }
            let r = frame * w;
            if let Some(m) = kept.as_mut() {
                m.columns_mut(c * BATCH, chunk.len()).copy_from(&r);
            }
            for (j, alpha) in alphas.iter().enumerate() {
                out.push(r.column(j).norm() / alpha);
            }
        }
        let counters = problem.counters();
        counters.add_estimator_evals(points.len() as u64);
        if n > 0 {
            counters.add_reduced_solves(points.len() as u64);
        }
        Ok((out, kept))
    }
}
