use nalgebra::DVector;

/// Relative drop tolerance: stop once the largest updated diagonal falls to
/// this fraction of the largest initial diagonal.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct PivotedCholesky {
    pub pivots: Vec<usize>,
    /// Column `k` of the factor, `L[:, k]`, over all indices.
    pub columns: Vec<DVector<f64>>,
    /// Updated diagonal at each pivot, before it was eliminated.
    pub pivot_diagonals: Vec<f64>,
}

impl PivotedCholesky {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Left-looking pivoted Cholesky of a PSD matrix given by its diagonal and a
/// column oracle `column(j) = G[:, j]`.
///
/// Each step takes the largest updated diagonal (lowest index on ties) and
/// stops early once it is at most `drop_tol * max(diag)`. At most `steps`
/// columns are requested from the oracle.
pub fn pivoted_cholesky<F>(diag: &[f64], steps: usize, drop_tol: f64, mut column: F) -> PivotedCholesky
where
    F: FnMut(usize) -> DVector<f64>,
{
    let n = diag.len();
    let mut d: Vec<f64> = diag.to_vec();
    let mut taken = vec![false; n];
    let scale = diag.iter().copied().fold(0.0, f64::max);
    let stop = drop_tol * scale;
    let mut out = PivotedCholesky::default();
    for _ in 0..steps.min(n) {
        let mut piv = None;
        let mut best = f64::NEG_INFINITY;
        for (i, &v) in d.iter().enumerate() {
            if !taken[i] && v > best {
                best = v;
                piv = Some(i);
            }
        }
        let Some(p) = piv else { break };
        if !(best > stop) {
            break;
        }
        let mut col = column(p);
        debug_assert_eq!(col.len(), n);
        for prev in &out.columns {
            col.axpy(-prev[p], prev, 1.0);
        }
        let root = best.sqrt();
        col /= root;
        for i in 0..n {
            if i == p {
                continue;
            }
            d[i] -= col[i] * col[i];
            if d[i] < 0.0 {
                if !taken[i] && d[i] < -stop {
                    log::warn!("pivoted Cholesky: updated diagonal {} at {i} is negative; clamped", d[i]);
                }
                d[i] = 0.0;
            }
        }
        taken[p] = true;
        d[p] = 0.0;
        out.pivots.push(p);
        out.columns.push(col);
        out.pivot_diagonals.push(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn run(g: &DMatrix<f64>, steps: usize) -> PivotedCholesky {
        let diag: Vec<f64> = g.diagonal().iter().copied().collect();
        pivoted_cholesky(&diag, steps, DEFAULT_DROP_TOL, |j| g.column(j).into_owned())
    }

    #[test]
    fn identity_pivots_in_order() {
        let g = DMatrix::<f64>::identity(6, 6);
        assert_eq!(run(&g, 4).pivots, vec![0, 1, 2, 3]);
    }

    #[test]
    fn three_by_three_example() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.9, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let f = run(&g, 3);
        assert_eq!(f.pivots, vec![0, 2, 1]);
        assert!((f.pivot_diagonals[2] - 0.19).abs() < 1e-14);
    }

    #[test]
    fn stops_at_exact_rank() {
        let v = DMatrix::from_fn(10, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let g = &v * v.transpose();
        assert_eq!(run(&g, 10).rank(), 3);
    }

    #[test]
    fn parallel_vectors_give_one_pivot() {
        let g = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(run(&g, 2).pivots, vec![0]);
    }

    #[test]
    fn full_factor_reproduces_matrix() {
        let v = DMatrix::from_fn(8, 8, |i, j| ((i + 1) as f64).powi(j as i32 % 3) / (1.0 + i as f64 + j as f64));
        let g = &v * v.transpose();
        let f = run(&g, 8);
        let l = DMatrix::from_columns(&f.columns);
        assert!((&l * l.transpose() - &g).norm() <= 1e-10 * g.norm());
    }
}
