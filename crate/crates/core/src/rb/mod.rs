//! The reduced model: an X-orthonormal snapshot basis, the reduced affine
//! blocks and the residual Riesz data needed by the error estimator.

mod estimator;

pub use estimator::{
    coercivity_lower_bound, error_estimate, residual_dual_norm_sq, residual_dual_norm_sq_gram, stability_constant,
    CoercivityBound,
};

use crate::affine::Parameter;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve_in_place, lu_solve_in_place};
use crate::problem::Problem;
use crate::truth::{TruthDiscretization, TruthSolution};
use nalgebra::{DMatrix, DVector};

/// Snapshots whose orthogonal remainder falls below this fraction of their
/// norm are rejected as dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// Remainders below this fraction are dropped when extending the residual frame.
const FRAME_DROP_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub coeffs: DVector<f64>,
    pub mu: Parameter,
}

impl ReducedSolution {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// X-orthonormal frame for `span{C, L_m^q}` together with the coordinates of
/// every residual term in it. The residual dual norm is then the Euclidean
/// norm of `coeffs * w`, a sum of squares that does not cancel.
#[derive(Debug, Clone)]
struct ResidualFrame {
    vectors: Vec<DVector<f64>>,
    x_vectors: Vec<DVector<f64>>,
    coeffs: DMatrix<f64>,
}

impl ResidualFrame {
    fn new() -> Self {
        Self {
            vectors: Vec::new(),
            x_vectors: Vec::new(),
            coeffs: DMatrix::zeros(0, 0),
        }
    }

    fn push(&mut self, disc: &TruthDiscretization, v: &DVector<f64>) {
        let rank = self.vectors.len();
        let mut col = DVector::zeros(rank);
        let mut rem = v.clone();
        for _ in 0..2 {
            for j in 0..rank {
                let c = self.x_vectors[j].dot(&rem);
                rem.axpy(-c, &self.vectors[j], 1.0);
                col[j] += c;
            }
        }
        let norm0 = disc.x_norm(v);
        let x_rem = disc.x_apply(&rem);
        let rho = rem.dot(&x_rem).max(0.0).sqrt();
        let grow = rho > FRAME_DROP_TOL * norm0 && rank < disc.n_dof();
        let (rows, cols) = (rank + usize::from(grow), self.coeffs.ncols() + 1);
        let old = std::mem::replace(&mut self.coeffs, DMatrix::zeros(0, 0));
        self.coeffs = old.resize(rows, cols, 0.0);
        self.coeffs.view_mut((0, cols - 1), (rank, 1)).copy_from(&col);
        if grow {
            self.coeffs[(rank, cols - 1)] = rho;
            self.vectors.push(rem / rho);
            self.x_vectors.push(x_rem / rho);
        }
    }

    fn rank(&self) -> usize {
        self.vectors.len()
    }
}

/// Reduced model built incrementally by [`ReducedModel::extend_basis`].
///
/// Residual terms are flattened m-major: term `(m, q)` sits at `m * q_a + q`,
/// so a model with `N` basis vectors is the leading block of one with `N + 1`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    q_a: usize,
    symmetric: bool,
    basis: Vec<DVector<f64>>,
    x_basis: Vec<DVector<f64>>,
    snapshot_params: Vec<Parameter>,
    snapshot_ids: Vec<Option<usize>>,
    /// `u(mu^m) = sum_j gs_coeffs[(j, m)] xi_j`, upper triangular.
    gs_coeffs: DMatrix<f64>,
    /// `applied[m][q] = A_q xi_m`.
    applied: Vec<Vec<DVector<f64>>>,
    reduced_components: Vec<DMatrix<f64>>,
    reduced_rhs: DVector<f64>,
    reduced_output: DVector<f64>,
    riesz_f: DVector<f64>,
    riesz_terms: Vec<DVector<f64>>,
    residual_cc: f64,
    residual_cl: DVector<f64>,
    residual_ll: DMatrix<f64>,
    frame: ResidualFrame,
}

impl ReducedModel {
    /// Empty model; computes the Riesz representer of the right-hand side.
    pub fn new(problem: &Problem) -> Self {
        let affine = problem.affine();
        let truth = problem.truth();
        let riesz_f = truth.riesz_solve(affine.rhs());
        let residual_cc = riesz_f.dot(affine.rhs());
        let mut frame = ResidualFrame::new();
        frame.push(truth, &riesz_f);
        let q_a = affine.q_a();
        Self {
            q_a,
            symmetric: affine.is_symmetric(),
            basis: Vec::new(),
            x_basis: Vec::new(),
            snapshot_params: Vec::new(),
            snapshot_ids: Vec::new(),
            gs_coeffs: DMatrix::zeros(0, 0),
            applied: Vec::new(),
            reduced_components: vec![DMatrix::zeros(0, 0); q_a],
            reduced_rhs: DVector::zeros(0),
            reduced_output: DVector::zeros(0),
            riesz_f,
            riesz_terms: Vec::new(),
            residual_cc,
            residual_cl: DVector::zeros(0),
            residual_ll: DMatrix::zeros(0, 0),
            frame,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn q_a(&self) -> usize {
        self.q_a
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    pub fn snapshot_params(&self) -> &[Parameter] {
        &self.snapshot_params
    }

    /// Training-set index of each snapshot, when it came from one.
    pub fn snapshot_ids(&self) -> &[Option<usize>] {
        &self.snapshot_ids
    }

    pub fn gram_schmidt_coeffs(&self) -> &DMatrix<f64> {
        &self.gs_coeffs
    }

    /// `A_q xi_m`.
    pub fn applied_component(&self, m: usize, q: usize) -> &DVector<f64> {
        &self.applied[m][q]
    }

    pub fn reduced_components(&self) -> &[DMatrix<f64>] {
        &self.reduced_components
    }

    pub fn reduced_rhs(&self) -> &DVector<f64> {
        &self.reduced_rhs
    }

    pub fn reduced_output_vector(&self) -> &DVector<f64> {
        &self.reduced_output
    }

    pub fn riesz_f(&self) -> &DVector<f64> {
        &self.riesz_f
    }

    /// `L_m^q`, the Riesz representer of `v -> -a^q(xi_m, v)`.
    pub fn riesz_term(&self, m: usize, q: usize) -> &DVector<f64> {
        &self.riesz_terms[m * self.q_a + q]
    }

    pub fn residual_cc(&self) -> f64 {
        self.residual_cc
    }

    pub fn residual_cl(&self) -> &DVector<f64> {
        &self.residual_cl
    }

    pub fn residual_ll(&self) -> &DMatrix<f64> {
        &self.residual_ll
    }

    pub fn residual_frame_rank(&self) -> usize {
        self.frame.rank()
    }

    /// Appends the X-orthonormalized snapshot and updates every reduced
    /// structure for the new row and column only.
    ///
    /// On rejection the model is left unchanged.
    pub fn extend_basis(&mut self, problem: &Problem, snapshot: &TruthSolution) -> Result<()> {
        self.extend_basis_tagged(problem, snapshot, None)
    }

    pub fn extend_basis_tagged(
        &mut self,
        problem: &Problem,
        snapshot: &TruthSolution,
        training_id: Option<usize>,
    ) -> Result<()> {
        let affine = problem.affine();
        let truth = problem.truth();
        let u = &snapshot.coefficients;
        let n = self.len();

        // Modified Gram-Schmidt, two passes.
        let norm0 = truth.x_norm(u);
        let mut v = u.clone();
        let mut r = DVector::zeros(n + 1);
        for _ in 0..2 {
            for j in 0..n {
                let c = self.x_basis[j].dot(&v);
                v.axpy(-c, &self.basis[j], 1.0);
                r[j] += c;
            }
        }
        let xv = truth.x_apply(&v);
        let remaining = v.dot(&xv).max(0.0).sqrt();
        let threshold = DEPENDENCE_TOL * norm0;
        if !(remaining >= threshold) || norm0 == 0.0 {
            return Err(Error::DependentSnapshot { remaining, threshold });
        }
        r[n] = remaining;
        let xi = v / remaining;
        let x_xi = xv / remaining;

        let applied: Vec<DVector<f64>> = (0..self.q_a).map(|q| affine.apply_component(q, &xi)).collect();

        for (q, red) in self.reduced_components.iter_mut().enumerate() {
            let old = std::mem::replace(red, DMatrix::zeros(0, 0));
            let mut grown = old.resize(n + 1, n + 1, 0.0);
            for m in 0..n {
                grown[(n, m)] = xi.dot(&self.applied[m][q]);
                grown[(m, n)] = self.basis[m].dot(&applied[q]);
            }
            grown[(n, n)] = xi.dot(&applied[q]);
            *red = grown;
        }
        let push = |v: &mut DVector<f64>, x: f64| {
            let old = std::mem::replace(v, DVector::zeros(0));
            *v = old.push(x);
        };
        push(&mut self.reduced_rhs, affine.rhs().dot(&xi));
        push(&mut self.reduced_output, affine.output().dot(&xi));

        let new_terms: Vec<DVector<f64>> = applied.iter().map(|a| -truth.riesz_solve(a)).collect();
        let k_old = n * self.q_a;
        let k_new = k_old + self.q_a;
        let old_cl = std::mem::replace(&mut self.residual_cl, DVector::zeros(0));
        self.residual_cl = old_cl.resize_vertically(k_new, 0.0);
        let old_ll = std::mem::replace(&mut self.residual_ll, DMatrix::zeros(0, 0));
        self.residual_ll = old_ll.resize(k_new, k_new, 0.0);
        for (q, term) in new_terms.iter().enumerate() {
            let i = k_old + q;
            // (C, L)_X = L^T f because X C = f.
            self.residual_cl[i] = term.dot(affine.rhs());
            // (L_j, L_i)_X = L_j^T X L_i = -L_j^T A_q xi.
            for j in 0..k_old {
                let val = -self.riesz_terms[j].dot(&applied[q]);
                self.residual_ll[(i, j)] = val;
                self.residual_ll[(j, i)] = val;
            }
            for (q2, term2) in new_terms.iter().enumerate().take(q + 1) {
                let val = -term2.dot(&applied[q]);
                self.residual_ll[(i, k_old + q2)] = val;
                self.residual_ll[(k_old + q2, i)] = val;
            }
        }
        for term in &new_terms {
            self.frame.push(truth, term);
        }

        let old_gs = std::mem::replace(&mut self.gs_coeffs, DMatrix::zeros(0, 0));
        self.gs_coeffs = old_gs.resize(n + 1, n + 1, 0.0);
        self.gs_coeffs.set_column(n, &r);

        self.riesz_terms.extend(new_terms);
        self.applied.push(applied);
        self.basis.push(xi);
        self.x_basis.push(x_xi);
        self.snapshot_params.push(snapshot.mu.clone());
        self.snapshot_ids.push(training_id);
        Ok(())
    }

    /// `sum_q theta_q A_q^N` restricted to the leading `n x n` block.
    pub fn reduced_matrix(&self, theta: &[f64], n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        self.assemble_into(theta, n, a.as_mut_slice());
        a
    }

    /// `sum_q theta_q A_N^q` restricted to the leading `n x n` block,
    /// column-major into `out`.
    fn assemble_into(&self, theta: &[f64], n: usize, out: &mut [f64]) {
        out.fill(0.0);
        for (t, red) in theta.iter().zip(&self.reduced_components) {
            let ld = red.nrows();
            let src = red.as_slice();
            for j in 0..n {
                for (d, s) in out[j * n..(j + 1) * n].iter_mut().zip(&src[j * ld..j * ld + n]) {
                    *d += t * s;
                }
            }
        }
    }

    /// Reduced Galerkin solve using the first `n` basis vectors.
    pub(crate) fn solve_leading(&self, theta: &[f64], rhs_coef: f64, n: usize) -> Option<DVector<f64>> {
        let b = self.reduced_rhs.rows(0, n) * rhs_coef;
        let mut work = vec![0.0; n * n];
        self.assemble_into(theta, n, &mut work);
        if self.symmetric {
            let mut x = b.clone();
            if cholesky_solve_in_place(&mut work, n, x.as_mut_slice()) {
                return Some(x);
            }
            self.assemble_into(theta, n, &mut work);
        }
        let mut x = b;
        lu_solve_in_place(&mut work, n, x.as_mut_slice()).then_some(x)
    }

    /// Residual weights `(theta_f, theta_q c_m)` in m-major order.
    pub(crate) fn residual_weights(&self, theta: &[f64], rhs_coef: f64, coeffs: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(1 + coeffs.len() * self.q_a);
        w[0] = rhs_coef;
        for (m, c) in coeffs.iter().enumerate() {
            for (q, t) in theta.iter().enumerate() {
                w[1 + m * self.q_a + q] = t * c;
            }
        }
        w
    }

    /// Residual dual norm squared from the orthonormal residual frame.
    /// Riesz representer of the residual in residual-frame coordinates.
    pub(crate) fn residual_coordinates(&self, theta: &[f64], rhs_coef: f64, coeffs: &DVector<f64>) -> DVector<f64> {
        let w = self.residual_weights(theta, rhs_coef, coeffs);
        self.frame.coeffs.columns(0, w.len()) * w
    }

    /// `X phi_r` for the `r`-th residual-frame vector.
    pub(crate) fn frame_x_vector(&self, r: usize) -> &DVector<f64> {
        &self.frame.x_vectors[r]
    }

    pub(crate) fn residual_norm_sq_frame(&self, theta: &[f64], rhs_coef: f64, coeffs: &DVector<f64>) -> f64 {
        let w = self.residual_weights(theta, rhs_coef, coeffs);
        let k = w.len();
        let r = self.frame.coeffs.columns(0, k) * w;
        r.norm_squared()
    }

    /// Residual dual norm squared from the stored Gram blocks.
    pub(crate) fn residual_norm_sq_gram(&self, theta: &[f64], rhs_coef: f64, coeffs: &DVector<f64>) -> f64 {
        let w = self.residual_weights(theta, rhs_coef, coeffs);
        let lw = w.rows(1, w.len() - 1);
        let k = lw.len();
        let ll = self.residual_ll.view((0, 0), (k, k));
        rhs_coef * rhs_coef * self.residual_cc
            + 2.0 * rhs_coef * self.residual_cl.rows(0, k).dot(&lw)
            + lw.dot(&(ll * lw))
    }
}

/// Galerkin projection onto the current basis.
pub fn reduced_solve(model: &ReducedModel, problem: &Problem, mu: &Parameter) -> Result<ReducedSolution> {
    reduced_solve_n(model, problem, mu, model.len())
}

/// Galerkin projection onto the first `n` basis vectors (the nested model).
pub fn reduced_solve_n(model: &ReducedModel, problem: &Problem, mu: &Parameter, n: usize) -> Result<ReducedSolution> {
    if model.is_empty() || n == 0 || n > model.len() {
        return Err(Error::Config(format!("reduced solve of size {n} on a model with {} vectors", model.len())));
    }
    let affine = problem.affine();
    let theta = affine.evaluate_theta(mu)?;
    problem.counters().add_reduced_solves(1);
    let coeffs = model
        .solve_leading(&theta, affine.rhs_coefficient(mu), n)
        .ok_or_else(|| Error::numerical(format!("reduced solve at {mu}"), f64::INFINITY))?;
    Ok(ReducedSolution { coeffs, mu: mu.clone() })
}

/// `l(u_N) = reduced_output^T c`.
pub fn reduced_output(model: &ReducedModel, sol: &ReducedSolution) -> f64 {
    model.reduced_output.rows(0, sol.len()).dot(&sol.coeffs)
}

/// Truth-space vector `sum_m c_m xi_m`.
pub fn reconstruct(model: &ReducedModel, sol: &ReducedSolution) -> DVector<f64> {
    let mut u = DVector::zeros(model.basis.first().map_or(0, |b| b.len()));
    for (c, xi) in sol.coeffs.iter().zip(&model.basis) {
        u.axpy(*c, xi, 1.0);
    }
    u
}

#[cfg(test)]
mod tests;
