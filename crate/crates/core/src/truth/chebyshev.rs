//! Chebyshev collocation truth model for the variable-coefficient diffusion
//! problem `(1 + mu1 x) u_xx + (1 + mu2 y) u_yy = exp(4xy)` on `[-1, 1]^2`
//! with homogeneous Dirichlet data.
//!
//! The collocation equations are premultiplied by `-W`, `W` the tensor
//! Clenshaw-Curtis weights at the interior nodes. This leaves the truth
//! solution unchanged but turns `v^T A w` into a discrete `L2` pairing, so the
//! operator at `mu = 0` is the (symmetric positive definite) discrete
//! Dirichlet form and reduced Galerkin projections are well posed.

use super::{Geometry, TruthDiscretization};
use crate::affine::{AffineProblem, ParameterBox};
use crate::error::{Error, Result};
use crate::linalg::Operator;
use crate::problem::Problem;
use crate::rb::CoercivityBound;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

/// Gauss-Lobatto points `cos(pi j / (n - 1))`, `j = 0..n`, descending.
pub fn chebyshev_lobatto_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let m = (n - 1) as f64;
    (0..n)
        .map(|j| {
            // Symmetrize so that mirrored nodes are exact negatives.
            let t = (PI * (n as f64 - 1.0 - 2.0 * j as f64) / (2.0 * m)).sin();
            if t.abs() < 1e-300 {
                0.0
            } else {
                t
            }
        })
        .collect()
}

/// First-derivative collocation matrix on the Gauss-Lobatto points.
pub fn chebyshev_diff_matrix(n: usize) -> DMatrix<f64> {
    let x = chebyshev_lobatto_nodes(n);
    let c: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            if i == 0 || i == n - 1 {
                2.0 * s
            } else {
                s
            }
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = (c[i] / c[j]) / (x[i] - x[j]);
            }
        }
    }
    // Negative-sum trick: rows annihilate constants exactly.
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Clenshaw-Curtis quadrature weights on the Gauss-Lobatto points.
pub fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let nn = n - 1;
    let nf = nn as f64;
    let theta: Vec<f64> = (0..n).map(|j| PI * j as f64 / nf).collect();
    let mut w = vec![0.0; n];
    let mut v = vec![1.0; n.saturating_sub(2)];
    if nn.is_multiple_of(2) {
        w[0] = 1.0 / (nf * nf - 1.0);
        for k in 1..nn / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        for k in 1..=(nn - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    w[nn] = w[0];
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Builds the collocation truth model with `n_x` nodes per direction.
///
/// The affine grouping is `theta = (1, mu1, mu2)` with components
/// `-W (Dxx + Dyy)`, `-W x Dxx` and `-W y Dyy`. The inner product is the
/// discrete `H1` form `W + Dx^T W Dx + Dy^T W Dy`, and the output functional is
/// the quadrature of `u` over the square. The coercivity bound defaults to the
/// constant 1.
pub fn build_problem1(n_x: usize) -> Result<Problem> {
    if n_x < 4 {
        return Err(Error::Config(format!("collocation needs n_x >= 4, got {n_x}")));
    }
    let x = chebyshev_lobatto_nodes(n_x);
    let w = clenshaw_curtis_weights(n_x);
    let d1 = chebyshev_diff_matrix(n_x);
    let d2 = &d1 * &d1;
    let interior: Vec<usize> = (1..n_x - 1).collect();
    let m = interior.len();
    let n = m * m;

    let d2i = DMatrix::from_fn(m, m, |a, b| d2[(interior[a], interior[b])]);
    let xi: Vec<f64> = interior.iter().map(|&k| x[k]).collect();
    let wi: Vec<f64> = interior.iter().map(|&k| w[k]).collect();
    // S = D1[:, int]^T diag(w) D1[:, int]: 1D derivative energy with full quadrature.
    let s = DMatrix::from_fn(m, m, |a, b| {
        (0..n_x)
            .map(|k| w[k] * d1[(k, interior[a])] * d1[(k, interior[b])])
            .sum::<f64>()
    });

    // Index of interior node (i along x, j along y) is j * m + i.
    let idx = |i: usize, j: usize| j * m + i;
    let weight = |r: usize| wi[r % m] * wi[r / m];

    let mut lap = DMatrix::zeros(n, n);
    let mut xdxx = DMatrix::zeros(n, n);
    let mut ydyy = DMatrix::zeros(n, n);
    for j in 0..m {
        for i in 0..m {
            let r = idx(i, j);
            let wr = weight(r);
            for k in 0..m {
                // d/dx^2 couples (i, j) with (k, j); d/dy^2 couples with (i, k).
                let cx = -wr * d2i[(i, k)];
                let cy = -wr * d2i[(j, k)];
                lap[(r, idx(k, j))] += cx;
                lap[(r, idx(i, k))] += cy;
                xdxx[(r, idx(k, j))] += xi[i] * cx;
                ydyy[(r, idx(i, k))] += xi[j] * cy;
            }
        }
    }

    let mut x_inner = DMatrix::zeros(n, n);
    for j in 0..m {
        for i in 0..m {
            let r = idx(i, j);
            x_inner[(r, r)] += weight(r);
            for k in 0..m {
                x_inner[(r, idx(k, j))] += wi[j] * s[(i, k)];
                x_inner[(r, idx(i, k))] += wi[i] * s[(j, k)];
            }
        }
    }
    // Remove rounding asymmetry so the Cholesky sees an exactly symmetric matrix.
    let x_inner = (&x_inner + x_inner.transpose()) * 0.5;

    let rhs = DVector::from_fn(n, |r, _| -weight(r) * (4.0 * xi[r % m] * xi[r / m]).exp());
    let output = DVector::from_fn(n, |r, _| weight(r));
    let coords = (0..n).map(|r| [xi[r % m], xi[r / m]]).collect();

    let affine = AffineProblem::new(
        "diffusion2d",
        ParameterBox::cube(2, -0.99, 0.99)?,
        Arc::new(|mu: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = mu[0];
            out[2] = mu[1];
        }),
        vec![Operator::Dense(lap), Operator::Dense(xdxx), Operator::Dense(ydyy)],
        rhs,
        output,
    )?;
    let truth = TruthDiscretization::new(
        Geometry::Diffusion2d { n_x },
        n_x * n_x,
        interior_node_ids(n_x),
        coords,
        Operator::Dense(x_inner),
    )?;
    Problem::new(affine, truth, CoercivityBound::Constant(1.0))
}

/// Full-grid ids (`j * n_x + i`) of the interior nodes, in solve order.
fn interior_node_ids(n_x: usize) -> Vec<usize> {
    (1..n_x - 1)
        .flat_map(|j| (1..n_x - 1).map(move |i| j * n_x + i))
        .collect()
}
