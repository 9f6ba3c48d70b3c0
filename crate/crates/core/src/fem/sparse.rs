//! Compressed sparse row storage and the symmetric solvers used on it.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Result, SlodError};

/// Square or rectangular matrix in compressed row form. Symmetric matrices
/// store both triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns are
    /// summed in list order; columns are sorted.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            let mut last = usize::MAX;
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range");
                if c == last {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.cols);
        let mut out = DMatrix::zeros(self.rows, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.rows {
                out[(i, c)] = self.row(i).map(|(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    /// The block with the given rows and columns, in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut pos = vec![usize::MAX; self.cols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let out = rows
            .iter()
            .map(|&i| {
                self.row(i)
                    .filter(|&(j, _)| pos[j] != usize::MAX)
                    .map(|(j, v)| (pos[j], v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(cols.len(), out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Exact (bitwise) symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| self.row(i).all(|(j, v)| self.get(j, i).to_bits() == v.to_bits()))
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.rows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}

/// Cholesky factor of a symmetric positive definite band matrix.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i][i-bw..=i]; entries left of column 0 are unused.
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in k0..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(SlodError::Solver(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[ri + k] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.l[k * w + bw - k + i] * x[k];
            }
            x[i] = s / self.l[i * w + bw];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the iterate once the
/// residual drops below `tol * |b|`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(SlodError::Solver("conjugate gradients hit a non-positive curvature".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SlodError::Solver(format!(
        "conjugate gradients did not converge in {max_iter} iterations"
    )))
}

/// Default relative tolerance of the iterative fallback.
pub const CG_RTOL: f64 = 1e-10;

/// Above this many stored band entries the direct factorization is skipped.
const MAX_BAND_ENTRIES: usize = 1 << 26;

/// Symmetric positive definite operator with a lazily computed factorization.
#[derive(Debug)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    factor: OnceLock<Option<BandCholesky>>,
}

impl SparseOperator {
    pub fn new(matrix: CsrMatrix) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        Self {
            matrix,
            factor: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn direct(&self) -> Result<Option<&BandCholesky>> {
        if let Some(f) = self.factor.get() {
            return Ok(f.as_ref());
        }
        let band = (self.matrix.bandwidth() + 1) * self.dim();
        let f = if band <= MAX_BAND_ENTRIES {
            Some(BandCholesky::factor(&self.matrix)?)
        } else {
            None
        };
        Ok(self.factor.get_or_init(|| f).as_ref())
    }

    /// Solves `A x = b` directly when the factorization fits in memory and by
    /// conjugate gradients with relative tolerance `tol` otherwise.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        match self.direct()? {
            Some(f) => {
                let mut x = b.to_vec();
                f.solve_in_place(&mut x);
                Ok(x)
            }
            None => pcg(&self.matrix, b, tol, 20 * self.dim() + 100),
        }
    }

    /// Solves for every column of `b`.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col: Vec<f64> = b.column(c).iter().copied().collect();
            let x = self.solve(&col, CG_RTOL)?;
            out.column_mut(c).copy_from_slice(&x);
        }
        Ok(out)
    }
}

/// Solves the Dirichlet-reduced system `op x = rhs`.
pub fn solve_dirichlet(op: &SparseOperator, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    if rhs.len() != op.dim() {
        return Err(SlodError::Config(format!(
            "right-hand side has length {} but the operator has dimension {}",
            rhs.len(),
            op.dim()
        )));
    }
    op.solve(rhs, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn one_by_one() {
        let op = SparseOperator::new(CsrMatrix::from_rows(1, vec![vec![(0, 4.0)]]));
        let x = solve_dirichlet(&op, &[0.5], 1e-12).unwrap();
        assert!((x[0] - 0.125).abs() < 1e-15);
        assert_eq!(solve_dirichlet(&op, &[0.0], 1e-12).unwrap(), vec![0.0]);
    }

    #[test]
    fn random_spd_direct_and_cg() {
        let dense = random_spd(5, 1);
        let a = CsrMatrix::from_dense(&dense);
        let b = [1.0, -2.0, 0.5, 3.0, 0.0];
        let op = SparseOperator::new(a.clone());
        let x = op.solve(&b, 1e-12).unwrap();
        assert!(residual(&a, &x, &b) < 1e-12);
        let y = pcg(&a, &b, 1e-10, 100).unwrap();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residual(&a, &y, &b) <= 1e-10 * bn);
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]]);
        assert!(matches!(BandCholesky::factor(&a), Err(SlodError::Solver(_))));
        let zero = CsrMatrix::from_rows(1, vec![vec![(0, 0.0)]]);
        assert!(SparseOperator::new(zero).solve(&[1.0], 1e-10).is_err());
    }

    #[test]
    fn band_solver_on_tridiagonal() {
        let n = 50;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        let a = CsrMatrix::from_rows(n, rows);
        assert_eq!(a.bandwidth(), 1);
        assert!(a.is_symmetric());
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = SparseOperator::new(a.clone()).solve(&b, 1e-12).unwrap();
        assert!(residual(&a, &x, &b) < 1e-10);
    }

    #[test]
    fn submatrix_and_duplicates() {
        let a = CsrMatrix::from_rows(3, vec![vec![(2, 1.0), (0, 1.0), (2, 2.0)], vec![], vec![(1, 5.0)]]);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.nnz(), 3);
        let s = a.submatrix(&[2, 0], &[1, 2]);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 3.0]));
    }
}
