//! Bounds for larger instances from a principal sub-matrix.
//!
//! `S` holds the `ceil(m k)` largest diagonal entries. For an optimal support
//! `S*` with `|S cap S*| = kt`, the objective splits into the `S` block, the
//! complement block and the cross block. The three are bounded by the
//! relaxation on `A_{S,S}` with sparsity `max(kt, r)`, Baseline-1 on the
//! complement with budget `k - kt`, and `sqrt(r)` times a Frobenius bound on
//! the cross block. Since `kt` is unknown the bound is the maximum over all
//! `kt` in `0..=k`.

use std::collections::BTreeMap;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dual::{baseline1, branch_and_bound, build_cip_model, prep_from_eig, DualOptions};
use crate::error::{invalid, Result};
use crate::instances::top_diagonal_indices;
use crate::linalg::{psd_eigendecompose, SymmetricMatrix};
use crate::rng::NormalSampler;

pub const DEFAULT_RATIOS: [f64; 5] = [1.5, 2.0, 2.5, 5.0, 10.0];
pub const DEFAULT_PER_CIP_TIME_LIMIT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, Serialize)]
pub struct KtildeTerm {
    pub ktilde: usize,
    /// Sparsity passed to the relaxation on `A_{S,S}`.
    pub cip_sparsity: usize,
    pub cip_bound: f64,
    pub cross_bound: f64,
    pub baseline_bound: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmatrixPlan {
    pub m: f64,
    /// Ascending.
    pub s: Vec<usize>,
    pub sc: Vec<usize>,
    pub per_ktilde: Vec<KtildeTerm>,
    /// Branch-and-bound runs actually performed (equal sparsities share one).
    pub cip_runs: usize,
}

/// `ceil(m k)`, checked against `d`.
pub fn plan_size(d: usize, k: usize, m: f64) -> Result<usize> {
    if !(m.is_finite() && m >= 1.0) {
        return Err(invalid(format!("ratio m must be >= 1, got {m}")));
    }
    let size = (m * k as f64 - 1e-9).ceil() as usize;
    if size > d {
        return Err(invalid(format!(
            "ceil(m k) = {size} exceeds d = {d}; solve the whole matrix instead"
        )));
    }
    Ok(size.max(k))
}

/// `sqrt(r)` times the root of the sum of the `kt` largest row values, where
/// the value of row `j` in `S` is the sum of its `k - kt` largest squared
/// entries in the columns `Sc`.
pub fn cross_term_bound(
    a: &SymmetricMatrix,
    s: &[usize],
    sc: &[usize],
    ktilde: usize,
    k: usize,
    r: usize,
) -> Result<f64> {
    if ktilde > k {
        return Err(invalid(format!("ktilde={ktilde} exceeds k={k}")));
    }
    let per_row = k - ktilde;
    if ktilde == 0 || per_row == 0 || sc.is_empty() {
        return Ok(0.0);
    }
    let mut rows: Vec<(f64, usize)> = s
        .iter()
        .map(|&j| {
            let mut sq: Vec<f64> = sc.iter().map(|&c| a.get(j, c).powi(2)).collect();
            sq.sort_unstable_by(|x, y| y.total_cmp(x));
            (sq.iter().take(per_row).sum::<f64>(), j)
        })
        .collect();
    rows.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let total: f64 = rows.iter().take(ktilde).map(|(v, _)| v).sum();
    Ok((r as f64).sqrt() * total.sqrt())
}

/// Sub-matrix bound with default relaxation settings and the given time
/// limit for each relaxation run.
pub fn submatrix_upper_bound(
    a: &SymmetricMatrix,
    k: usize,
    r: usize,
    m: f64,
    per_cip_time_limit: Duration,
) -> Result<(f64, SubmatrixPlan)> {
    let mut options = DualOptions::default();
    options.bnb.time_limit = per_cip_time_limit;
    submatrix_upper_bound_with(a, k, r, m, &options)
}

pub fn submatrix_upper_bound_with(
    a: &SymmetricMatrix,
    k: usize,
    r: usize,
    m: f64,
    options: &DualOptions,
) -> Result<(f64, SubmatrixPlan)> {
    let d = a.dim();
    if r == 0 || r > k || k > d {
        return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
    }
    let size = plan_size(d, k, m)?;
    let s = top_diagonal_indices(&a.diagonal(), size);
    let sc: Vec<usize> = (0..d).filter(|j| s.binary_search(j).is_err()).collect();
    let a_ss = a.principal(&s)?;
    let a_cc = if sc.is_empty() { None } else { Some(a.principal(&sc)?) };
    let eig = psd_eigendecompose(&a_ss)?;
    let jplus = options.jplus.min(size);

    let mut cip: BTreeMap<usize, f64> = BTreeMap::new();
    let mut per_ktilde = Vec::with_capacity(k + 1);
    for ktilde in 0..=k {
        let sparsity = ktilde.max(r);
        let cip_bound = match cip.get(&sparsity) {
            Some(v) => *v,
            None => {
                let prep = prep_from_eig(eig.clone(), sparsity, options.n_breakpoints, jplus)?;
                let model = build_cip_model(&prep, &a_ss, sparsity, r)?;
                let v = branch_and_bound(&model, &options.bnb)?.upper_bound;
                cip.insert(sparsity, v);
                v
            }
        };
        let cross_bound = cross_term_bound(a, &s, &sc, ktilde, k, r)?;
        let baseline_bound = match &a_cc {
            Some(c) => baseline1(c, (k - ktilde).min(sc.len()))?,
            None => 0.0,
        };
        per_ktilde.push(KtildeTerm {
            ktilde,
            cip_sparsity: sparsity,
            cip_bound,
            cross_bound,
            baseline_bound,
            total: cip_bound + cross_bound + baseline_bound,
        });
    }
    let bound = per_ktilde.iter().map(|t| t.total).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        bound,
        SubmatrixPlan {
            m,
            s,
            sc,
            per_ktilde,
            cip_runs: cip.len(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossCheck {
    Pass { max_lhs: f64, rhs: f64 },
    Fail { trial: usize, lhs: f64, rhs: f64 },
}

/// Samples `(V1, V2)` with `V1^T V1 + V2^T V2 = I` by orthonormalizing a
/// stacked Gaussian and checks `2 Tr(V1^T X V2) <= sqrt(r) ||X||_F`.
pub fn proposition_cross_check(x: &DMatrix<f64>, r: usize, trials: usize, seed: u64) -> Result<CrossCheck> {
    let (m, n) = x.shape();
    if trials == 0 || r == 0 || r > m + n {
        return Err(invalid(format!("need trials >= 1 and 1 <= r <= {}", m + n)));
    }
    let rhs = (r as f64).sqrt() * x.norm();
    let mut normal = NormalSampler::new(seed);
    let mut max_lhs = f64::NEG_INFINITY;
    for trial in 0..trials {
        let q = normal.matrix(m + n, r).qr().q();
        let v1 = q.rows(0, m);
        let v2 = q.rows(m, n);
        let lhs = 2.0 * (v1.transpose() * x * v2).trace();
        if lhs > rhs + 1e-9 {
            return Ok(CrossCheck::Fail { trial, lhs, rhs });
        }
        max_lhs = max_lhs.max(lhs);
    }
    Ok(CrossCheck::Pass { max_lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn plan_size_checks() {
        assert_eq!(plan_size(10, 3, 2.0).unwrap(), 6);
        assert_eq!(plan_size(10, 3, 1.5).unwrap(), 5);
        assert!(plan_size(10, 3, 5.0).is_err());
        assert!(plan_size(10, 3, 0.5).is_err());
    }

    #[test]
    fn cross_term_single_entry() {
        let mut a = DMatrix::<f64>::identity(5, 5);
        a[(0, 3)] = 0.3;
        a[(3, 0)] = 0.3;
        let a = SymmetricMatrix::new(a).unwrap();
        let v = cross_term_bound(&a, &[0, 1], &[2, 3, 4], 1, 2, 2).unwrap();
        assert_abs_diff_eq!(v, 2f64.sqrt() * 0.3, epsilon = 1e-15);
        assert_eq!(cross_term_bound(&a, &[0, 1], &[2, 3, 4], 0, 2, 2).unwrap(), 0.0);
        assert_eq!(cross_term_bound(&a, &[0, 1], &[2, 3, 4], 2, 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn cross_term_zero_on_block_diagonal() {
        let a = SymmetricMatrix::from_diagonal(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        for kt in 0..=3 {
            assert_eq!(cross_term_bound(&a, &[0, 1, 2], &[3, 4], kt, 3, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn cross_check_examples() {
        let zero = DMatrix::zeros(3, 4);
        assert!(matches!(
            proposition_cross_check(&zero, 2, 10, 1).unwrap(),
            CrossCheck::Pass { .. }
        ));
        let mut e = DMatrix::zeros(2, 2);
        e[(0, 0)] = 1.0;
        match proposition_cross_check(&e, 1, 500, 2).unwrap() {
            CrossCheck::Pass { max_lhs, rhs } => {
                assert!(max_lhs <= 1.0 + 1e-12);
                assert_abs_diff_eq!(rhs, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
