//! Dense symmetric linear algebra: the covariance type, a cyclic Jacobi
//! eigensolver, the PSD square root and index slicing.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Eigenvalues in `[-PSD_TOL * lambda_max, 0)` are treated as rounding noise.
pub const PSD_TOL: f64 = 1e-8;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-12;

/// Dense symmetric `d x d` matrix. Symmetry is exact: construction replaces
/// the input `M` by `(M + M^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(invalid("matrix must have positive dimension"));
        }
        let t = m.transpose();
        Ok(Self {
            data: (m + t) * 0.5,
        })
    }

    pub fn from_row_slice(d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != d * d {
            return Err(invalid(format!(
                "expected {} values for a {d}x{d} matrix, got {}",
                d * d,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, values))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            data: DMatrix::identity(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            data: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Symmetric permutation `P A P^T` where row `i` of the result is row
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let sub = submatrix(self, perm, perm)?;
        Ok(Self { data: sub })
    }

    /// Principal sub-matrix `A_{I,I}`, which stays symmetric.
    pub fn principal(&self, idx: &[usize]) -> Result<Self> {
        let sub = submatrix(self, idx, idx)?;
        Ok(Self { data: sub })
    }
}

/// Eigenpairs sorted by non-increasing eigenvalue. Column `j` of
/// `eigenvectors` belongs to `eigenvalues[j]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sum of the `r` largest eigenvalues.
    pub fn top_sum(&self, r: usize) -> f64 {
        self.eigenvalues.iter().take(r).sum()
    }

    /// `sum_j lambda_j a_j a_j^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lam);
        }
        &scaled * self.eigenvectors.transpose()
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal Frobenius mass drops below
/// `1e-12 * ||A||_F` (at most 100 sweeps). Eigenvalues are stably sorted in
/// non-increasing order and each eigenvector is signed so that its
/// largest-magnitude component (first one on ties) is positive.
pub fn eigendecompose(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(invalid("matrix has non-finite entries"));
    }
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let norm = m.norm();
    let target = JACOBI_OFF_TOL * norm;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[(p, p)] -= t * apq;
                m[(q, q)] += t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let g = m[(r, p)];
                    let h = m[(r, q)];
                    let new_rp = g - s * (h + g * tau);
                    let new_rq = h + s * (g - h * tau);
                    m[(r, p)] = new_rp;
                    m[(p, r)] = new_rp;
                    m[(r, q)] = new_rq;
                    m[(q, r)] = new_rq;
                }
                for r in 0..n {
                    let g = v[(r, p)];
                    let h = v[(r, q)];
                    v[(r, p)] = g - s * (h + g * tau);
                    v[(r, q)] = h + s * (g - h * tau);
                }
            }
        }
    }
    if off_diagonal_norm(&m) > 1e-10 * norm {
        return Err(Error::Numerical(
            "Jacobi iteration did not converge".to_string(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original diagonal order for tied eigenvalues.
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        let mut pivot = 0;
        for r in 1..n {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Checks `A` is PSD up to [`PSD_TOL`] and returns its decomposition with
/// small negative eigenvalues clamped to zero.
pub fn psd_eigendecompose(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let mut eig = eigendecompose(a)?;
    let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let tol = PSD_TOL * lmax;
    let lmin = eig.eigenvalues.last().copied().unwrap_or(0.0);
    if lmin < -tol {
        return Err(Error::NotPsd {
            eigenvalue: lmin,
            tolerance: tol,
        });
    }
    for lam in eig.eigenvalues.iter_mut() {
        if *lam < 0.0 {
            *lam = 0.0;
        }
    }
    Ok(eig)
}

/// Positive semidefinite square root `R` with `R R = A`.
pub fn psd_sqrt(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = psd_eigendecompose(a)?;
    let mut scaled = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam.sqrt());
    }
    SymmetricMatrix::new(&scaled * eig.eigenvectors.transpose())
}

/// `A_{I,J}` with rows ordered as `rows` and columns ordered as `cols`.
pub fn submatrix(a: &SymmetricMatrix, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    let d = a.dim();
    check_indices(rows, d)?;
    check_indices(cols, d)?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        a.get(rows[i], cols[j])
    }))
}

pub(crate) fn check_indices(idx: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for &i in idx {
        if i >= d {
            return Err(invalid(format!("index {i} out of range for dimension {d}")));
        }
        if seen[i] {
            return Err(invalid(format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}
