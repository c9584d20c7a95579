//! Exhaustive ground truth for tiny instances.

use itertools::Itertools;

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_indices, SymmetricMatrix};
use crate::primal::exact_support_objective;

/// Largest number of `k`-subsets the enumeration will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact optimum over all `k`-subsets, visited in lexicographic order.
/// Ties keep the lexicographically smallest support.
pub fn brute_force_opt(a: &SymmetricMatrix, k: usize, r: usize) -> Result<(f64, Vec<usize>)> {
    let d = a.dim();
    if r == 0 || r > k || k > d {
        return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
    }
    let count = binomial(d, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for support in (0..d).combinations(k) {
        let (value, _) = exact_support_objective(a, &support, r)?;
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, support));
        }
    }
    Ok(best.unwrap())
}

/// Repeats the best exact single swap until none strictly improves `f(S)`.
/// Candidates are scanned with the leaving index ascending, then the
/// entering index ascending; the first best candidate wins.
pub fn local_search_exact_neighborhood(
    a: &SymmetricMatrix,
    k: usize,
    r: usize,
    s0: &[usize],
) -> Result<Vec<usize>> {
    let d = a.dim();
    if s0.len() != k {
        return Err(invalid(format!("initial support has {} indices, expected k={k}", s0.len())));
    }
    check_indices(s0, d)?;
    let mut support = s0.to_vec();
    support.sort_unstable();
    let (mut value, _) = exact_support_objective(a, &support, r)?;
    let tol = 1e-12 * a.trace().abs().max(1.0);
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for slot in 0..k {
            for j in (0..d).filter(|j| !support.contains(j)) {
                let mut t = support.clone();
                t[slot] = j;
                t.sort_unstable();
                let (v, _) = exact_support_objective(a, &t, r)?;
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, t));
                }
            }
        }
        match best {
            Some((v, t)) if v > value + tol => {
                value = v;
                support = t;
            }
            _ => return Ok(support),
        }
    }
}
