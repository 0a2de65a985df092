//! Dense symmetric linear algebra sized for band-space problems.
//!
//! Correlation and covariance matrices here are L x L where L is a band
//! count, rarely more than a few dozen, so a plain unblocked Cholesky
//! factorization covers every need. Besides solve/inverse, this module
//! carries the two closed-form identities the detectors depend on: the
//! rank-one downdate that turns an inverse correlation into an inverse
//! covariance, and the bordered inverse of a correlation matrix extended
//! by a constant band.

use thiserror::Error;

/// Errors from factorization and the identities built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    /// A pivot fell at or below the scale-aware tolerance during factorization.
    #[error("matrix is not positive definite: pivot {pivot:.6e} at index {index} (tolerance {tolerance:.6e})")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        tolerance: f64,
    },

    /// `1 - m'R^-1 m` was not safely positive, so the covariance downdate
    /// cannot be formed.
    #[error("degenerate mean: 1 - m'R^-1 m = {value:.6e} is not safely positive")]
    DegenerateMean { value: f64 },

    /// Operand shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense symmetric matrix with row-major storage.
///
/// Construction symmetrizes the input as (A + A')/2, so `get(i, j)` and
/// `get(j, i)` return bitwise-identical values for every instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Build from row-major entries. Panics if `data.len() != order * order`.
    pub fn new(order: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            order * order,
            "SymMatrix::new: expected {} entries, got {}",
            order * order,
            data.len()
        );
        let mut m = SymMatrix { order, data };
        m.symmetrize();
        m
    }

    /// Build from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let order = rows.len();
        let mut data = Vec::with_capacity(order * order);
        for row in rows {
            assert_eq!(row.len(), order, "SymMatrix::from_rows: ragged input");
            data.extend_from_slice(row);
        }
        Self::new(order, data)
    }

    /// Build entry-wise from a function of (row, col).
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; order * order];
        for i in 0..order {
            for j in 0..order {
                data[i * order + j] = f(i, j);
            }
        }
        Self::new(order, data)
    }

    /// Identity matrix of the given order.
    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Row-major view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Matrix-vector product Ax.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order, "mul_vec: length mismatch");
        let mut y = vec![0.0; self.order];
        for i in 0..self.order {
            let row = &self.data[i * self.order..(i + 1) * self.order];
            y[i] = dot(row, x);
        }
        y
    }

    /// Quadratic form x'Ax.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute diagonal entry, the scale used by pivot tolerances.
    fn max_abs_diag(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    /// Replace every pair (i,j),(j,i) with their average. The floating add
    /// is commutative, so both slots end up bitwise equal.
    fn symmetrize(&mut self) {
        for i in 0..self.order {
            for j in (i + 1)..self.order {
                let a = self.data[i * self.order + j];
                let b = self.data[j * self.order + i];
                let avg = 0.5 * (a + b);
                self.data[i * self.order + j] = avg;
                self.data[j * self.order + i] = avg;
            }
        }
    }

    /// Add `value` to every diagonal entry, returning a new matrix.
    pub fn add_diagonal(&self, value: f64) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.order {
            out.data[i * self.order + i] += value;
        }
        out
    }

    /// Principal submatrix picked out by `indices` (0-based, in order).
    pub fn principal_submatrix(&self, indices: &[usize]) -> SymMatrix {
        SymMatrix::from_fn(indices.len(), |i, j| self.get(indices[i], indices[j]))
    }
}

/// Lower-triangular Cholesky factor of a positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    order: usize,
    /// Row-major lower triangle, upper entries left zero.
    l: Vec<f64>,
    /// Squared pivots d_j = L[j][j]^2 in elimination order.
    pivots: Vec<f64>,
}

impl CholeskyFactor {
    /// Solve Ax = b reusing the factorization: forward then back substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.order, "solve: length mismatch");
        let n = self.order;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Squared pivots in elimination order. Their smallest/largest ratio is
    /// a cheap conditioning probe for the factored matrix.
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }
}

/// Factor a symmetric positive definite matrix as L L'.
///
/// A pivot at or below `order * machine-epsilon * max|diag|` fails the
/// factorization, so near-singular inputs are rejected instead of producing
/// garbage solves. The tolerance scales with the matrix, not with 1.0.
pub fn cholesky(a: &SymMatrix) -> Result<CholeskyFactor, LinalgError> {
    let n = a.order();
    let tolerance = n as f64 * f64::EPSILON * a.max_abs_diag();
    let mut l = vec![0.0; n * n];
    let mut pivots = vec![0.0; n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= tolerance {
            return Err(LinalgError::NotPositiveDefinite {
                index: j,
                pivot: d,
                tolerance,
            });
        }
        pivots[j] = d;
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(CholeskyFactor { order: n, l, pivots })
}

/// Solve Ax = b for symmetric positive definite A.
pub fn spd_solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.order() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix order {} vs vector length {}",
            a.order(),
            b.len()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

/// Invert a symmetric positive definite matrix by solving against each unit
/// vector, then symmetrizing. The result is exactly symmetric.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    let n = a.order();
    let factor = cholesky(a)?;
    let mut data = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = factor.solve(&e);
        e[j] = 0.0;
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
    Ok(SymMatrix::new(n, data))
}

/// Rank-one downdate taking an inverse correlation to an inverse covariance.
///
/// With K = R - m m' and q = R^-1 m, the downdated inverse is
/// K^-1 = R^-1 + b1 q q' where b1 = 1 / (1 - m'R^-1 m). Requires
/// 1 - m'R^-1 m > 1e-12; anything smaller means K is (numerically) singular.
pub fn sherman_morrison_downdate(
    r_inv: &SymMatrix,
    m: &[f64],
) -> Result<SymMatrix, LinalgError> {
    if m.len() != r_inv.order() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix order {} vs vector length {}",
            r_inv.order(),
            m.len()
        )));
    }
    let q = r_inv.mul_vec(m);
    let value = 1.0 - dot(m, &q);
    if value <= 1e-12 {
        return Err(LinalgError::DegenerateMean { value });
    }
    let b1 = 1.0 / value;
    let n = r_inv.order();
    Ok(SymMatrix::from_fn(n, |i, j| {
        r_inv.get(i, j) + b1 * q[i] * q[j]
    }))
}

/// Inverse of the correlation matrix bordered by the mean: the (L+1)-order
/// matrix [[R, m], [m', 1]] inverted in closed form from R^-1 alone.
///
/// The top-left block is the downdated inverse of [`sherman_morrison_downdate`],
/// the border is -b1 R^-1 m, and the corner is b1.
pub fn augmented_inverse(r_inv: &SymMatrix, m: &[f64]) -> Result<SymMatrix, LinalgError> {
    if m.len() != r_inv.order() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix order {} vs vector length {}",
            r_inv.order(),
            m.len()
        )));
    }
    let q = r_inv.mul_vec(m);
    let value = 1.0 - dot(m, &q);
    if value <= 1e-12 {
        return Err(LinalgError::DegenerateMean { value });
    }
    let b1 = 1.0 / value;
    let n = r_inv.order();
    Ok(SymMatrix::from_fn(n + 1, |i, j| match (i == n, j == n) {
        (false, false) => r_inv.get(i, j) + b1 * q[i] * q[j],
        (false, true) => -b1 * q[i],
        (true, false) => -b1 * q[j],
        (true, true) => b1,
    }))
}

/// Plain dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
