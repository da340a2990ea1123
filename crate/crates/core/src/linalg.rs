//! Matrix storage for truth operators and dense factorizations.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.ncols);
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, a)| a * v[j]).sum())
    }

    /// Keeps the listed rows and columns (in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    triplets.push((new_r, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), triplets)
    }

    pub fn add_scaled_to_dense(&self, coef: f64, target: &mut DMatrix<f64>) {
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                target[(i, j)] += coef * v;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        self.add_scaled_to_dense(1.0, &mut m);
        m
    }

    /// Sum of `coefs[k] * mats[k]`; all matrices must share a shape.
    pub fn linear_combination(mats: &[&CsrMatrix], coefs: &[f64]) -> CsrMatrix {
        let (nrows, ncols) = (mats[0].nrows, mats[0].ncols);
        let mut triplets = Vec::new();
        for (m, &c) in mats.iter().zip(coefs) {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            for i in 0..nrows {
                triplets.extend(m.row(i).map(|(j, v)| (i, j, c * v)));
            }
        }
        CsrMatrix::from_triplets(nrows, ncols, triplets)
    }
}

/// A truth-space operator, stored dense or sparse.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Operator {
    pub fn nrows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Operator::Dense(m) => m.ncols(),
            Operator::Sparse(m) => m.ncols(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Dense(m) => m * v,
            Operator::Sparse(m) => m.mul_vec(v),
        }
    }

    pub fn add_scaled_to_dense(&self, coef: f64, target: &mut DMatrix<f64>) {
        match self {
            Operator::Dense(m) => *target += m * coef,
            Operator::Sparse(m) => m.add_scaled_to_dense(coef, target),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(m) => m.to_dense(),
        }
    }

    /// `a^T M b` without forming `M b` for sparse storage.
    pub fn bilinear(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            Operator::Dense(m) => a.dot(&(m * b)),
            Operator::Sparse(m) => (0..m.nrows())
                .map(|i| a[i] * m.row(i).map(|(j, v)| v * b[j]).sum::<f64>())
                .sum(),
        }
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let d = self.to_dense();
        if d.nrows() != d.ncols() {
            return false;
        }
        let scale = d.amax().max(f64::MIN_POSITIVE);
        (&d - d.transpose()).amax() <= rel_tol * scale
    }

    /// Weighted sum of operators. Sparse inputs stay sparse.
    pub fn linear_combination(ops: &[Operator], coefs: &[f64]) -> Operator {
        assert_eq!(ops.len(), coefs.len());
        let sparse: Option<Vec<&CsrMatrix>> = ops
            .iter()
            .map(|o| match o {
                Operator::Sparse(m) => Some(m),
                Operator::Dense(_) => None,
            })
            .collect();
        match sparse {
            Some(mats) => Operator::Sparse(CsrMatrix::linear_combination(&mats, coefs)),
            None => {
                let mut out = DMatrix::zeros(ops[0].nrows(), ops[0].ncols());
                for (op, &c) in ops.iter().zip(coefs) {
                    op.add_scaled_to_dense(c, &mut out);
                }
                Operator::Dense(out)
            }
        }
    }
}

/// Dense direct factorization: Cholesky for SPD operators, LU otherwise.
#[derive(Debug, Clone)]
pub enum DenseFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl DenseFactor {
    pub fn new(matrix: DMatrix<f64>, spd: bool) -> Result<Self> {
        if spd {
            let diag_ratio = diag_ratio(&matrix);
            return Cholesky::new(matrix)
                .map(DenseFactor::Cholesky)
                .ok_or_else(|| Error::numerical("Cholesky factorization", diag_ratio));
        }
        let lu = matrix.lu();
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..u.nrows() {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if !(lo > hi * 1e-15) {
            return Err(Error::numerical("LU factorization", hi / lo));
        }
        Ok(DenseFactor::Lu(lu))
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            DenseFactor::Cholesky(c) => c.solve(rhs),
            DenseFactor::Lu(lu) => lu.solve(rhs).expect("LU checked invertible at construction"),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DenseFactor::Cholesky(c) => c.l_dirty().nrows(),
            DenseFactor::Lu(lu) => lu.u().nrows(),
        }
    }
}

fn diag_ratio(m: &DMatrix<f64>) -> f64 {
    let d = m.diagonal();
    let hi = d.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let lo = d.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
    hi / lo
}

/// `m^T v`, one contiguous dot product per column.
pub fn dot_columns(m: &DMatrix<f64>, v: &[f64]) -> DVector<f64> {
    assert_eq!(m.nrows(), v.len(), "dot_columns: length mismatch");
    let n = v.len();
    if n == 0 {
        return DVector::zeros(m.ncols());
    }
    DVector::from_iterator(m.ncols(), m.as_slice().chunks_exact(n).map(|c| dot(c, v)))
}

/// Dot product with eight independent partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Solves `A x = b` in place for a small SPD matrix stored column-major in
/// `a` (overwritten by its Cholesky factor). Returns false if `A` is not
/// numerically positive definite.
pub fn cholesky_solve_in_place(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for j in 0..n {
        let (done, rest) = a.split_at_mut(j * n);
        let col = &mut rest[j..n];
        for k in 0..j {
            let lk = &done[k * n + j..k * n + n];
            let l_jk = lk[0];
            for (c, l) in col.iter_mut().zip(lk) {
                *c -= l_jk * l;
            }
        }
        let d = col[0];
        if !(d > 0.0) {
            return false;
        }
        let s = d.sqrt();
        for c in col.iter_mut() {
            *c /= s;
        }
    }
    for j in 0..n {
        let col = &a[j * n + j..j * n + n];
        b[j] /= col[0];
        let bj = b[j];
        for (x, l) in b[j + 1..].iter_mut().zip(&col[1..]) {
            *x -= bj * l;
        }
    }
    for j in (0..n).rev() {
        let col = &a[j * n + j..j * n + n];
        let dot: f64 = b[j + 1..].iter().zip(&col[1..]).map(|(x, l)| x * l).sum();
        b[j] = (b[j] - dot) / col[0];
    }
    b.iter().all(|x| x.is_finite())
}

const LU_BLOCK: usize = 24;

/// Solves `A x = b` in place by LU with partial pivoting; `a` is column-major
/// and gets overwritten. Blocked so the trailing updates run through GEMM.
/// Returns false on a zero pivot or a non-finite result.
pub fn lu_solve_in_place(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut piv = vec![0usize; n];
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + LU_BLOCK).min(n);
        for k in k0..k1 {
            let col = &a[k * n..(k + 1) * n];
            let mut p = k;
            let mut best = col[k].abs();
            for (i, v) in col.iter().enumerate().skip(k + 1) {
                if v.abs() > best {
                    best = v.abs();
                    p = i;
                }
            }
            if !(best > 0.0) {
                return false;
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(j * n + k, j * n + p);
                }
            }
            let inv = 1.0 / a[k * n + k];
            for x in &mut a[k * n + k + 1..(k + 1) * n] {
                *x *= inv;
            }
            let (left, right) = a.split_at_mut((k + 1) * n);
            let lk = &left[k * n + k + 1..(k + 1) * n];
            for colj in right.chunks_exact_mut(n).take(k1 - k - 1) {
                let u = colj[k];
                if u != 0.0 {
                    for (x, l) in colj[k + 1..].iter_mut().zip(lk) {
                        *x -= u * l;
                    }
                }
            }
        }
        if k1 < n {
            // U12 = L11^-1 A12
            let (left, right) = a.split_at_mut(k1 * n);
            for colj in right.chunks_exact_mut(n) {
                for k in k0..k1 {
                    let u = colj[k];
                    if u != 0.0 {
                        for (x, l) in colj[k + 1..k1].iter_mut().zip(&left[k * n + k + 1..k * n + k1]) {
                            *x -= u * l;
                        }
                    }
                }
            }
            // A22 -= L21 U12; the three blocks are disjoint.
            let m = n - k1;
            let ld = n as isize;
            let p = a.as_mut_ptr();
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k1 - k0,
                    m,
                    -1.0,
                    p.add(k0 * n + k1),
                    1,
                    ld,
                    p.add(k1 * n + k0),
                    1,
                    ld,
                    1.0,
                    p.add(k1 * n + k1),
                    1,
                    ld,
                );
            }
        }
        k0 = k1;
    }
    for (k, &p) in piv.iter().enumerate() {
        b.swap(k, p);
    }
    for k in 0..n {
        let bk = b[k];
        for (x, l) in b[k + 1..].iter_mut().zip(&a[k * n + k + 1..(k + 1) * n]) {
            *x -= bk * l;
        }
    }
    for k in (0..n).rev() {
        let col = &a[k * n..k * n + k + 1];
        b[k] /= col[k];
        let bk = b[k];
        for (x, u) in b[..k].iter_mut().zip(col) {
            *x -= bk * u;
        }
    }
    b.iter().all(|x| x.is_finite())
}
