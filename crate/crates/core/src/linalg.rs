//! Dense complex linear algebra.
//!
//! Row-major [`ComplexMatrix`] and a thin [`ComplexVector`] wrapper with the
//! handful of kernels the rest of the crate needs: products, norms, and a
//! Cholesky-based Hermitian positive-definite solve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the Hermitian check in [`hermitian_solve`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Cholesky pivots at or below `PIVOT_TOL * trace / rows` are rejected.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix is not Hermitian (max deviation {deviation:e}, allowed {allowed:e})")]
    NotHermitian { deviation: f64, allowed: f64 },
    #[error("matrix is numerically singular: pivot {pivot:e} at index {index} below {threshold:e}")]
    Singular {
        index: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("invalid dimensions {rows}x{cols} for {len} entries")]
    InvalidData { rows: usize, cols: usize, len: usize },
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Complex64>>", into = "Vec<Vec<Complex64>>")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(pub Vec<Complex64>);

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::InvalidData {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Square diagonal matrix with the given diagonal.
    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from row vectors. Panics on ragged or empty input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "ragged rows in ComplexMatrix::from_rows"
        );
        Self::new(rows.len(), cols, rows.concat()).expect("non-empty rows")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("positive dimensions")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Entry-wise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Shape {
                op: "add",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    /// Squared Euclidean norm of row `i`.
    pub fn row_norm_sqr(&self, i: usize) -> f64 {
        self.row(i).iter().map(Complex64::norm_sqr).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::Shape {
                op: "mul_vec",
                lhs: self.shape(),
                rhs: (x.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Row vector times matrix, `xᵀ · self` (no conjugation).
    pub fn left_mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if x.len() != self.rows {
            return Err(LinalgError::Shape {
                op: "left_mul_vec",
                lhs: (1, x.len()),
                rhs: self.shape(),
            });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        Ok(out)
    }

    /// Largest entry-wise deviation from Hermitian symmetry.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.rows.min(self.cols);
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<Complex64>>> for ComplexMatrix {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<Complex64>>) -> Result<Self, Self::Error> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::InvalidData {
                rows: rows.len(),
                cols,
                len: rows.iter().map(Vec::len).sum(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }
}

impl From<ComplexMatrix> for Vec<Vec<Complex64>> {
    fn from(m: ComplexMatrix) -> Self {
        m.data.chunks(m.cols).map(<[Complex64]>::to_vec).collect()
    }
}

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl From<Vec<Complex64>> for ComplexVector {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

impl std::ops::Deref for ComplexVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Euclidean norm of a complex slice.
pub fn norm(x: &[Complex64]) -> f64 {
    norm_sqr(x).sqrt()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum()
}

/// Hermitian inner product `xᴴy`.
pub fn dot_conj(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::Shape {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for (l, a_il) in a.row(i).iter().enumerate() {
            if a_il.re == 0.0 && a_il.im == 0.0 {
                continue;
            }
            let b_row = b.row(l);
            for (o, b_lj) in out.row_mut(i).iter_mut().zip(b_row) {
                *o += a_il * b_lj;
            }
        }
    }
    Ok(out)
}

/// `a · aᴴ`, exactly Hermitian by construction.
pub fn gram_outer(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot_conj(a.row(j), a.row(i));
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
        out[(i, i)] = Complex64::new(out[(i, i)].re, 0.0);
    }
    out
}

/// Lower-triangular Cholesky factor `L` with `L Lᴴ = b`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: ComplexMatrix,
}

impl Cholesky {
    /// Factors a Hermitian positive-definite matrix.
    ///
    /// Only the lower triangle is read; the Hermitian check is the caller's job
    /// (see [`hermitian_solve`]).
    pub fn factor(b: &ComplexMatrix) -> Result<Self, LinalgError> {
        let n = b.rows;
        if b.cols != n {
            return Err(LinalgError::Shape {
                op: "cholesky",
                lhs: b.shape(),
                rhs: b.shape(),
            });
        }
        let threshold = PIVOT_TOL * b.trace().re.abs() / n as f64;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = b[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > threshold) {
                return Err(LinalgError::Singular {
                    index: j,
                    pivot: d,
                    threshold,
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = Complex64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = b[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &ComplexMatrix {
        &self.l
    }

    /// Solves `L Lᴴ x = rhs`.
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.l.rows;
        if rhs.len() != n {
            return Err(LinalgError::Shape {
                op: "cholesky_solve",
                lhs: self.l.shape(),
                rhs: (rhs.len(), 1),
            });
        }
        let l = &self.l;
        // forward: L y = rhs
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)].re;
        }
        // backward: Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * y[k];
            }
            y[i] = s / l[(i, i)].re;
        }
        Ok(y)
    }
}

/// Solves `B x = rhs` for Hermitian positive-definite `B` via Cholesky.
pub fn hermitian_solve(b: &ComplexMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
    if b.rows != b.cols || b.rows != rhs.len() {
        return Err(LinalgError::Shape {
            op: "hermitian_solve",
            lhs: b.shape(),
            rhs: (rhs.len(), 1),
        });
    }
    let allowed = HERMITIAN_TOL * b.frobenius_norm();
    let deviation = b.hermitian_deviation();
    if deviation > allowed {
        return Err(LinalgError::NotHermitian { deviation, allowed });
    }
    Cholesky::factor(b)?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hpd(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let m = random_matrix(rng, n, n);
        gram_outer(&m).add(&ComplexMatrix::identity(n)).unwrap()
    }

    #[test]
    fn identity_times_matrix() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 2.0), c(3.0, -1.0)], vec![c(0.5, 0.0), c(0.0, 4.0)]]);
        assert_eq!(matmul(&ComplexMatrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn permutation_swaps_entries() {
        let p = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]);
        let v = ComplexMatrix::from_rows(&[vec![c(2.0, 1.0)], vec![c(-3.0, 0.5)]]);
        let out = matmul(&p, &v).unwrap();
        assert_eq!(out[(0, 0)], c(-3.0, 0.5));
        assert_eq!(out[(1, 0)], c(2.0, 1.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let out = matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = c(0.0, 0.0);
                for k in 0..4 {
                    s += a[(i, k)] * b[(k, j)];
                }
                assert!((out[(i, j)] - s).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn matmul_shape_error() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &b), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let rhs = [c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0)];
        let x = hermitian_solve(&ComplexMatrix::identity(3), &rhs).unwrap();
        assert_eq!(x, rhs.to_vec());

        let b = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(4.0, 0.0)]);
        let x = hermitian_solve(&b, &[c(2.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let b = ComplexMatrix::from_rows(&[vec![c(2.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(2.0, 0.0)]]);
        assert!(matches!(
            hermitian_solve(&b, &[c(1.0, 0.0), c(1.0, 0.0)]),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn rejects_singular() {
        let b = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(1.0, 0.0)]]);
        assert!(matches!(
            hermitian_solve(&b, &[c(1.0, 0.0), c(1.0, 0.0)]),
            Err(LinalgError::Singular { index: 1, .. })
        ));
        let neg = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert!(hermitian_solve(&neg, &[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    /// Inverse via cofactor expansion; only sensible for small n.
    fn adjugate_inverse(b: &ComplexMatrix) -> ComplexMatrix {
        fn det(m: &[Vec<Complex64>]) -> Complex64 {
            let n = m.len();
            if n == 1 {
                return m[0][0];
            }
            let mut total = c(0.0, 0.0);
            for j in 0..n {
                let minor: Vec<Vec<Complex64>> = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                total += m[0][j] * det(&minor) * sign;
            }
            total
        }
        let n = b.rows();
        let rows: Vec<Vec<Complex64>> = b.clone().into();
        let d = det(&rows);
        ComplexMatrix::from_fn(n, n, |i, j| {
            // inv[i][j] = cofactor[j][i] / det
            let minor: Vec<Vec<Complex64>> = rows
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != j)
                .map(|(_, row)| row.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, v)| *v).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            det(&minor) * sign / d
        })
    }

    #[test]
    fn solve_matches_adjugate_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let b = random_hpd(&mut rng, 5);
            let rhs: Vec<Complex64> = (0..5).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let x = hermitian_solve(&b, &rhs).unwrap();
            let expected = adjugate_inverse(&b).mul_vec(&rhs).unwrap();
            for (a, e) in x.iter().zip(&expected) {
                assert!((a - e).norm() <= 1e-10 * (1.0 + e.norm()), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..8 {
            let b = random_hpd(&mut rng, n);
            let l = Cholesky::factor(&b).unwrap();
            let llh = gram_outer(l.factor_matrix());
            let diff = llh.add(&b.scale(-1.0)).unwrap();
            assert!(diff.frobenius_norm() <= 1e-9 * b.frobenius_norm());
        }
    }

    #[test]
    fn matrix_json_is_nested_pairs() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, -2.0), c(0.5, 0.0)]]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[[1.0,-2.0],[0.5,0.0]]]");
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<ComplexMatrix>("[[[1.0,0.0]],[]]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        }

        fn build(n: usize, e: Vec<(f64, f64)>) -> ComplexMatrix {
            ComplexMatrix::new(n, n, e.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        }

        proptest! {
            #[test]
            fn matmul_associative(a in entries(25), b in entries(25), m in entries(25)) {
                let (a, b, m) = (build(5, a), build(5, b), build(5, m));
                let left = matmul(&matmul(&a, &b).unwrap(), &m).unwrap();
                let right = matmul(&a, &matmul(&b, &m).unwrap()).unwrap();
                let diff = left.add(&right.scale(-1.0)).unwrap().frobenius_norm();
                prop_assert!(diff <= 1e-10 * left.frobenius_norm().max(1e-300));
            }

            #[test]
            fn solve_residual_bound(m in entries(16), r in entries(4), shift in 1e-3f64..10.0) {
                let mm = build(4, m);
                let b = gram_outer(&mm).add(&ComplexMatrix::identity(4).scale(shift)).unwrap();
                let rhs: Vec<Complex64> = r.into_iter().map(|(a, b)| c(a, b)).collect();
                let x = hermitian_solve(&b, &rhs).unwrap();
                let bx = b.mul_vec(&x).unwrap();
                let res: Vec<Complex64> = bx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
                prop_assert!(norm(&res) <= 1e-9 * (b.frobenius_norm() * norm(&x) + norm(&rhs)));
            }
        }
    }
}
