//! The feasible set `F = {V : V^T V = I_r, ||V||_0 <= k}`, membership tests
//! for its convex relaxations CR1 and CR2, and their approximation constants.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{eigendecompose, SymmetricMatrix};
use crate::rng::{derive_seed, random_subset, seeded, NormalSampler};

/// Default additive slack for membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A point of `F` stored by its support and the nonzero `|S| x r` block.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSparseFactor {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub support: Vec<usize>,
    pub block: DMatrix<f64>,
}

impl OrthonormalSparseFactor {
    pub fn new(
        d: usize,
        k: usize,
        support: Vec<usize>,
        block: DMatrix<f64>,
    ) -> Result<Self> {
        let r = block.ncols();
        if r == 0 || r > k || k > d {
            return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
        }
        if support.len() > k || block.nrows() != support.len() {
            return Err(invalid(format!(
                "support of size {} does not fit k={k} with a {}-row block",
                support.len(),
                block.nrows()
            )));
        }
        crate::linalg::check_indices(&support, d)?;
        let f = Self {
            d,
            r,
            k,
            support,
            block,
        };
        let dev = f.orthonormality_defect();
        if dev > 1e-9 {
            return Err(invalid(format!("block is not orthonormal (defect {dev:e})")));
        }
        Ok(f)
    }

    /// `||B^T B - I_r||_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.block.transpose() * &self.block;
        (gram - DMatrix::<f64>::identity(self.r, self.r)).norm()
    }

    /// The full `d x r` matrix `V`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.d, self.r);
        for (row, &j) in self.support.iter().enumerate() {
            v.set_row(j, &self.block.row(row));
        }
        v
    }

    /// `Tr(V^T A V)`.
    pub fn objective(&self, a: &SymmetricMatrix) -> f64 {
        let sub = crate::linalg::submatrix(a, &self.support, &self.support)
            .expect("support validated at construction");
        (self.block.transpose() * sub * &self.block).trace()
    }
}

/// Uniform random `k`-subset with an orthonormalized Gaussian `k x r` block.
pub fn sample_feasible(d: usize, r: usize, k: usize, seed: u64) -> Result<OrthonormalSparseFactor> {
    if r == 0 || r > k || k > d {
        return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let support = random_subset(&mut rng, d, k);
    let g = NormalSampler::new(derive_seed(seed, 1)).matrix(k, r);
    let q = g.qr().q().columns(0, r).into_owned();
    OrthonormalSparseFactor::new(d, k, support, q)
}

/// The four CR2 constraint families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cr2Constraint {
    /// `||V_{*,j}||_2^2 <= 1`.
    ColumnNorm { column: usize },
    /// `||V_{*,a} +- V_{*,b}||_2^2 <= 2`.
    ColumnPair { a: usize, b: usize, plus: bool },
    /// `||V_{*,j}||_1 <= sqrt(k)`.
    ColumnL1 { column: usize },
    /// `sum_i ||V_i||_2 <= sqrt(r k)`.
    RowNormSum,
}

/// CR1 constraints checked by [`cr1_membership_approx`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cr1Constraint {
    OperatorNorm,
    TwoToOneNorm,
    RowNormSum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership<C> {
    Member,
    /// The first violated constraint and by how much its left-hand side
    /// exceeds the right-hand side.
    Violated { constraint: C, amount: f64 },
}

impl<C> Membership<C> {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member)
    }
}

fn check_shape(v: &DMatrix<f64>, k: usize) -> Result<()> {
    let (d, r) = v.shape();
    if d == 0 || r == 0 || r > d {
        return Err(invalid(format!("V must be d x r with 1 <= r <= d, got {d}x{r}")));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("V has non-finite entries"));
    }
    Ok(())
}

fn row_norm_sum(v: &DMatrix<f64>) -> f64 {
    v.row_iter().map(|row| row.norm()).sum()
}

/// Tests `V` against CR2, reporting the first violated family in the order
/// column norms, column pairs, column l1 norms, row-norm sum.
pub fn cr2_membership(v: &DMatrix<f64>, k: usize, tol: f64) -> Result<Membership<Cr2Constraint>> {
    check_shape(v, k)?;
    let r = v.ncols();
    let kf = k as f64;
    for j in 0..r {
        let lhs = v.column(j).norm_squared();
        if lhs > 1.0 + tol {
            return Ok(Membership::Violated {
                constraint: Cr2Constraint::ColumnNorm { column: j },
                amount: lhs - 1.0,
            });
        }
    }
    for a in 0..r {
        for b in (a + 1)..r {
            for plus in [true, false] {
                let lhs = if plus {
                    (v.column(a) + v.column(b)).norm_squared()
                } else {
                    (v.column(a) - v.column(b)).norm_squared()
                };
                if lhs > 2.0 + tol {
                    return Ok(Membership::Violated {
                        constraint: Cr2Constraint::ColumnPair { a, b, plus },
                        amount: lhs - 2.0,
                    });
                }
            }
        }
    }
    for j in 0..r {
        let lhs = v.column(j).lp_norm(1);
        if lhs > kf.sqrt() + tol {
            return Ok(Membership::Violated {
                constraint: Cr2Constraint::ColumnL1 { column: j },
                amount: lhs - kf.sqrt(),
            });
        }
    }
    let rhs = (r as f64 * kf).sqrt();
    let lhs = row_norm_sum(v);
    if lhs > rhs + tol {
        return Ok(Membership::Violated {
            constraint: Cr2Constraint::RowNormSum,
            amount: lhs - rhs,
        });
    }
    Ok(Membership::Member)
}

/// Unit directions used to lower-bound `||V||_{2->1}`: `resolution` angles on
/// the half circle for `r = 2`, a Fibonacci lattice of `resolution` points on
/// the sphere for `r = 3`. `+-x` give the same value, so half the circle is
/// enough for `r = 2`.
pub fn sphere_grid(r: usize, resolution: usize) -> Result<Vec<Vec<f64>>> {
    let n = resolution.max(1);
    match r {
        1 => Ok(vec![vec![1.0]]),
        2 => Ok((0..n)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let rad = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    vec![rad * phi.cos(), rad * phi.sin(), z]
                })
                .collect())
        }
        _ => Err(Error::Unsupported(format!(
            "the 2->1 norm grid is only available for r <= 3 (got r={r})"
        ))),
    }
}

/// Grid lower bound on `max_{||x||_2 = 1} ||V x||_1`. Exact for `r = 1`.
pub fn two_to_one_norm_lower_bound(v: &DMatrix<f64>, resolution: usize) -> Result<f64> {
    let grid = sphere_grid(v.ncols(), resolution)?;
    let mut best = 0.0f64;
    for x in grid {
        let x = nalgebra::DVector::from_vec(x);
        best = best.max((v * x).lp_norm(1));
    }
    Ok(best)
}

/// Tests `V` against CR1: operator norm (exact), row-norm sum (exact) and the
/// 2->1 norm evaluated on a sphere grid. A violation of the 2->1 constraint is
/// a certificate; `Member` only means no violation was found at this
/// resolution.
pub fn cr1_membership_approx(
    v: &DMatrix<f64>,
    k: usize,
    grid_resolution: usize,
) -> Result<Membership<Cr1Constraint>> {
    check_shape(v, k)?;
    let r = v.ncols();
    if r > 3 {
        return Err(Error::Unsupported(format!(
            "CR1 membership needs the 2->1 norm, which is only gridded for r <= 3 (got r={r})"
        )));
    }
    let tol = MEMBERSHIP_TOL;
    let gram = SymmetricMatrix::new(v.transpose() * v)?;
    let op = eigendecompose(&gram)?.eigenvalues[0].max(0.0).sqrt();
    if op > 1.0 + tol {
        return Ok(Membership::Violated {
            constraint: Cr1Constraint::OperatorNorm,
            amount: op - 1.0,
        });
    }
    let sqrt_k = (k as f64).sqrt();
    let two_one = two_to_one_norm_lower_bound(v, grid_resolution)?;
    if two_one > sqrt_k + tol {
        return Ok(Membership::Violated {
            constraint: Cr1Constraint::TwoToOneNorm,
            amount: two_one - sqrt_k,
        });
    }
    let rhs = (r as f64 * k as f64).sqrt();
    let lhs = row_norm_sum(v);
    if lhs > rhs + tol {
        return Ok(Membership::Violated {
            constraint: Cr1Constraint::RowNormSum,
            amount: lhs - rhs,
        });
    }
    Ok(Membership::Member)
}

/// Scaling constants `(rho_CR1, rho_CR2)` with
/// `rho_CR1 = 2 + max(6 sqrt(2 pi), 18 sqrt(ln(50 r)))` and
/// `rho_CR2 = 1 + sqrt(r)`.
pub fn rho_constants(r: usize) -> (f64, f64) {
    let r = r as f64;
    let rho1 = 2.0
        + (6.0 * (2.0 * std::f64::consts::PI).sqrt()).max(18.0 * (50.0 * r).ln().sqrt());
    let rho2 = 1.0 + r.sqrt();
    (rho1, rho2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sample_feasible_shapes() {
        let f = sample_feasible(5, 4, 4, 3).unwrap();
        assert_eq!(f.block.shape(), (4, 4));
        let gram = f.block.transpose() * &f.block;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-12);

        let f = sample_feasible(6, 2, 6, 1).unwrap();
        assert_eq!(f.support, (0..6).collect::<Vec<_>>());
        assert!(sample_feasible(3, 4, 4, 0).is_err());
    }

    #[test]
    fn canonical_point_is_cr2_member() {
        let v = DMatrix::<f64>::identity(6, 6).columns(0, 2).into_owned();
        assert!(cr2_membership(&v, 2, MEMBERSHIP_TOL).unwrap().is_member());
    }

    #[test]
    fn dense_vector_breaks_l1_budget() {
        let d = 9;
        let v = DMatrix::from_element(d, 1, 1.0 / (d as f64).sqrt());
        match cr2_membership(&v, 4, MEMBERSHIP_TOL).unwrap() {
            Membership::Violated {
                constraint: Cr2Constraint::ColumnL1 { column: 0 },
                amount,
            } => assert_abs_diff_eq!(amount, 3.0 - 2.0, epsilon = 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cr2_reports_column_norm_first() {
        let mut v = DMatrix::<f64>::zeros(4, 2);
        v[(0, 0)] = 1.5;
        assert!(matches!(
            cr2_membership(&v, 4, MEMBERSHIP_TOL).unwrap(),
            Membership::Violated { constraint: Cr2Constraint::ColumnNorm { column: 0 }, .. }
        ));
        let mut v = DMatrix::<f64>::zeros(4, 2);
        v[(0, 0)] = 1.0;
        v[(0, 1)] = 1.0;
        assert!(matches!(
            cr2_membership(&v, 4, MEMBERSHIP_TOL).unwrap(),
            Membership::Violated { constraint: Cr2Constraint::ColumnPair { a: 0, b: 1, plus: true }, .. }
        ));
        assert!(cr2_membership(&v, 5, MEMBERSHIP_TOL).is_err());
    }

    #[test]
    fn cr2_is_closed_under_shrinking() {
        for seed in 0..20 {
            let v = sample_feasible(10, 3, 4, seed).unwrap().to_dense();
            for alpha in [0.0, 0.3, 0.9, 1.0] {
                assert!(cr2_membership(&(&v * alpha), 4, MEMBERSHIP_TOL).unwrap().is_member());
            }
        }
    }

    #[test]
    fn cr1_single_column_is_exact_l1() {
        let mut v = DMatrix::<f64>::zeros(5, 1);
        v[(0, 0)] = 1.0;
        for k in 1..=5 {
            assert!(cr1_membership_approx(&v, k, 10).unwrap().is_member());
        }
        let dense = DMatrix::from_element(4, 1, 0.5);
        assert_abs_diff_eq!(two_to_one_norm_lower_bound(&dense, 1).unwrap(), 2.0, epsilon = 1e-12);
        assert!(!cr1_membership_approx(&dense, 3, 10).unwrap().is_member());
    }

    #[test]
    fn cr1_operator_norm_violation() {
        let v = DMatrix::<f64>::identity(4, 2) * 1.5;
        match cr1_membership_approx(&v, 4, 100).unwrap() {
            Membership::Violated { constraint: Cr1Constraint::OperatorNorm, amount } => {
                assert_abs_diff_eq!(amount, 0.5, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cr1_rejects_wide_factors() {
        let v = DMatrix::<f64>::identity(6, 4);
        assert!(matches!(cr1_membership_approx(&v, 4, 10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cr1_sampled_points_are_members() {
        for seed in 0..10 {
            let v = sample_feasible(8, 2, 3, seed).unwrap().to_dense();
            assert!(cr1_membership_approx(&v, 3, 10_000).unwrap().is_member());
        }
    }

    #[test]
    fn cr1_violation_persists_on_refined_grid() {
        // Nested grids: angles i*pi/g are a subset of i*pi/(2g).
        let v = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        for g in [4usize, 8, 16] {
            let coarse = two_to_one_norm_lower_bound(&v, g).unwrap();
            let fine = two_to_one_norm_lower_bound(&v, 2 * g).unwrap();
            assert!(fine >= coarse);
        }
    }

    #[test]
    fn rho_values() {
        let (rho1, rho2) = rho_constants(1);
        assert_eq!(rho2, 2.0);
        // 6 sqrt(2 pi) ~ 15.04 loses to 18 sqrt(ln 50) ~ 35.6.
        assert_abs_diff_eq!(rho1, 2.0 + 18.0 * 50f64.ln().sqrt(), epsilon = 1e-12);
        assert_eq!(rho_constants(4).1, 3.0);
    }
}
