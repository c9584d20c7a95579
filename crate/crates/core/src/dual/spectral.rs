//! Spectral preprocessing shared by every node of the search: per-eigenvector
//! sparse norms `theta_j`, breakpoint grids, and the eigenvalue threshold that
//! splits the objective into a convex and a concave part.

use crate::error::{invalid, Result};
use crate::linalg::{psd_eigendecompose, EigenDecomposition, SymmetricMatrix};

pub const DEFAULT_BREAKPOINTS: usize = 40;
pub const DEFAULT_JPLUS: usize = 3;

#[derive(Debug, Clone)]
pub struct SpectralPrep {
    pub eig: EigenDecomposition,
    /// `theta_j`: root of the sum of the `k` largest squared entries of `a_j`.
    pub theta: Vec<f64>,
    pub k: usize,
    pub n_breakpoints: usize,
    pub lambda_th: f64,
    /// Indices with `lambda_j > lambda_th`, ascending.
    pub jplus: Vec<usize>,
    pub jminus: Vec<usize>,
}

impl SpectralPrep {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `gamma^l = (l / N) theta_j` for `l = -N..=N`, stored at offset `l + N`.
    pub fn breakpoints(&self, j: usize) -> Vec<f64> {
        breakpoints(self.theta[j], self.n_breakpoints)
    }

    /// `sum_j r lambda_j theta_j^2 / (4 N^2)` over every eigenpair.
    pub fn additive_term(&self, r: usize) -> f64 {
        additive_term(&self.eig.eigenvalues, &self.theta, self.n_breakpoints, r)
    }
}

pub fn breakpoints(theta: f64, n: usize) -> Vec<f64> {
    let nf = n as f64;
    (0..=2 * n).map(|l| (l as f64 - nf) / nf * theta).collect()
}

/// Root of the sum of the `k` largest squares of `v`.
pub fn sparse_norm(v: &[f64], k: usize) -> f64 {
    let mut sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    sq.sort_unstable_by(|a, b| b.total_cmp(a));
    sq.iter().take(k).sum::<f64>().sqrt()
}

pub fn spectral_prep(a: &SymmetricMatrix, k: usize, n: usize, jplus_size: usize) -> Result<SpectralPrep> {
    let d = a.dim();
    if n == 0 {
        return Err(invalid("number of breakpoints must be at least 1"));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("need 1 <= k <= d, got k={k} d={d}")));
    }
    if jplus_size == 0 || jplus_size > d {
        return Err(invalid(format!("need 1 <= |J+| <= d, got {jplus_size}")));
    }
    let eig = psd_eigendecompose(a)?;
    prep_from_eig(eig, k, n, jplus_size)
}

pub fn prep_from_eig(eig: EigenDecomposition, k: usize, n: usize, jplus_size: usize) -> Result<SpectralPrep> {
    let d = eig.dim();
    let theta: Vec<f64> = (0..d)
        .map(|j| sparse_norm(eig.eigenvectors.column(j).as_slice(), k))
        .collect();
    let lambda_th = if jplus_size >= d {
        0.0
    } else {
        eig.eigenvalues[jplus_size].max(0.0)
    };
    let (jplus, jminus): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| eig.eigenvalues[j] > lambda_th);
    Ok(SpectralPrep {
        eig,
        theta,
        k,
        n_breakpoints: n,
        lambda_th,
        jplus,
        jminus,
    })
}

/// Largest gap between the piecewise-linear interpolant of `g^2` on the grid
/// and `g^2` itself.
pub fn pla_gap_bound(theta: f64, n: usize) -> f64 {
    theta * theta / (4.0 * (n * n) as f64)
}

pub fn additive_term(eigenvalues: &[f64], theta: &[f64], n: usize, r: usize) -> f64 {
    eigenvalues
        .iter()
        .zip(theta)
        .map(|(l, t)| r as f64 * l * pla_gap_bound(*t, n))
        .sum()
}

/// Piecewise-linear interpolant of `g^2` through the breakpoints, evaluated
/// at `g` in `[-theta, theta]`.
pub fn pla_interpolant(g: f64, theta: f64, n: usize) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let h = theta / n as f64;
    let pos = ((g + theta) / h).clamp(0.0, (2 * n) as f64);
    let lo = (pos.floor() as usize).min(2 * n - 1);
    let x0 = -theta + lo as f64 * h;
    let x1 = x0 + h;
    let w = (g - x0) / h;
    (1.0 - w) * x0 * x0 + w * x1 * x1
}

/// Sum of the `k` largest diagonal entries. Zero for `k = 0`.
pub fn baseline1(a: &SymmetricMatrix, k: usize) -> Result<f64> {
    if k > a.dim() {
        return Err(invalid(format!("k={k} exceeds d={}", a.dim())));
    }
    let mut diag = a.diagonal();
    diag.sort_unstable_by(|x, y| y.total_cmp(x));
    Ok(diag.iter().take(k).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffineCheck {
    Pass,
    /// Signed amount by which the violated side fails.
    Fail { margin: f64 },
}

/// Checks `opt <= ub <= rho^2 opt + additive` with slack `1e-6 max(1, opt)`.
pub fn check_affine_guarantee(ub: f64, opt: f64, rho: f64, additive: f64) -> AffineCheck {
    let tol = 1e-6 * opt.abs().max(1.0);
    let lower = opt - ub;
    let upper = ub - (rho * rho * opt + additive);
    if lower > tol {
        AffineCheck::Fail { margin: lower }
    } else if upper > tol {
        AffineCheck::Fail { margin: upper }
    } else {
        AffineCheck::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sparse_norm_examples() {
        assert_abs_diff_eq!(sparse_norm(&[1.0, 0.0, 0.0], 1), 1.0);
        assert_abs_diff_eq!(sparse_norm(&[0.8, 0.6, 0.0], 2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sparse_norm(&[0.8, -0.6, 0.0], 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn breakpoint_grid() {
        let g = breakpoints(2.0, 4);
        assert_eq!(g.len(), 9);
        assert_abs_diff_eq!(g[0], -2.0);
        assert_abs_diff_eq!(g[4], 0.0);
        assert_abs_diff_eq!(g[8], 2.0);
        for w in g.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn gap_bound_values() {
        assert_abs_diff_eq!(pla_gap_bound(1.0, 1), 0.25);
        assert_abs_diff_eq!(pla_gap_bound(1.0, 40), 1.0 / 6400.0);
    }

    #[test]
    fn interpolant_gap_peaks_at_midpoints() {
        for &(theta, n) in &[(1.0, 1), (0.7, 3), (1.0, 40)] {
            let mut worst: f64 = 0.0;
            let steps = 200 * n;
            for s in 0..=steps {
                let g = -theta + 2.0 * theta * s as f64 / steps as f64;
                let gap = pla_interpolant(g, theta, n) - g * g;
                assert!(gap >= -1e-15);
                worst = worst.max(gap);
            }
            assert!((worst - pla_gap_bound(theta, n)).abs() <= 1e-12);
        }
    }

    #[test]
    fn threshold_and_partition() {
        let a = SymmetricMatrix::from_diagonal(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let p = spectral_prep(&a, 2, 40, 3).unwrap();
        assert_eq!(p.lambda_th, 2.0);
        assert_eq!(p.jplus, vec![0, 1, 2]);
        assert_eq!(p.jminus, vec![3, 4]);

        // lambda_3 = lambda_4 shrinks J+.
        let a = SymmetricMatrix::from_diagonal(&[5.0, 4.0, 2.0, 2.0, 1.0]);
        let p = spectral_prep(&a, 2, 40, 3).unwrap();
        assert_eq!(p.jplus, vec![0, 1]);

        let a = SymmetricMatrix::from_diagonal(&[2.0, 1.0]);
        assert!(spectral_prep(&a, 1, 40, 3).is_err());
        let p = spectral_prep(&a, 1, 40, 2).unwrap();
        assert_eq!(p.lambda_th, 0.0);
        assert_eq!(p.jplus, vec![0, 1]);
        assert!(p.jminus.is_empty());
    }

    #[test]
    fn theta_of_unit_eigenvector() {
        let a = SymmetricMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let p = spectral_prep(&a, 1, 40, 1).unwrap();
        for t in &p.theta {
            assert_abs_diff_eq!(*t, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn baseline_examples() {
        let a = SymmetricMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(baseline1(&a, 2).unwrap(), 5.0);
        assert_abs_diff_eq!(baseline1(&a, 0).unwrap(), 0.0);
        assert_abs_diff_eq!(baseline1(&SymmetricMatrix::identity(6), 4).unwrap(), 4.0);
    }

    #[test]
    fn affine_check_boundaries() {
        assert_eq!(check_affine_guarantee(2.0, 2.0, 1.0, 0.0), AffineCheck::Pass);
        let rho: f64 = 1.0 + 2f64.sqrt();
        let ub = rho * rho * 2.0 + 0.3;
        assert_eq!(check_affine_guarantee(ub, 2.0, rho, 0.3), AffineCheck::Pass);
        assert!(matches!(check_affine_guarantee(1.0, 2.0, rho, 0.0), AffineCheck::Fail { .. }));
        assert!(matches!(check_affine_guarantee(ub + 1.0, 2.0, rho, 0.3), AffineCheck::Fail { .. }));
    }
}
