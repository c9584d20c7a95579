//! Lower bounds: the exact support objective `f(S)`, the proxy objective
//! `f_bar(S, M)` built on `A^{1/2}`, and the modified greedy neighborhood
//! search with its multi-start driver.
//!
//! With `A^{1/2}` the PSD root and `B = (A^{1/2})_S` the rows indexed by `S`,
//!
//! ```text
//! f_bar(S, M) = ||B - M M^T B||_F^2 + sum_{j not in S} ||A^{1/2}_j||^2
//! ```
//!
//! and for the optimal `M` (top-`r` eigenvectors of `A_{S,S}`) this equals
//! `Tr(A) - f(S)`. The search keeps `M` fixed while it scores one swap, so a
//! round costs a single `k x k` eigendecomposition plus an `O(d^2)` scan.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::OrthonormalSparseFactor;
use crate::linalg::{check_indices, eigendecompose, psd_sqrt, submatrix, SymmetricMatrix};
use crate::rng::{derive_seed, random_subset, seeded};

/// Default number of random restarts.
pub const DEFAULT_RESTARTS: usize = 400;

/// A swap is accepted only if it lowers `f_bar` by more than this fraction
/// of `Tr(A)`.
pub const SWAP_IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    /// Sorted ascending, `|S| = k`.
    pub support: Vec<usize>,
    pub factor: OrthonormalSparseFactor,
    /// `Tr(V^T A V)`, the sum of the top-`r` eigenvalues of `A_{S,S}`.
    pub objective: f64,
    /// Accepted swaps.
    pub iterations: usize,
    /// `f_bar(S_t, M_t)` for the initial support and after every swap.
    pub trajectory: Vec<f64>,
}

/// Swap scores for one round at a fixed `(S, M)`.
#[derive(Debug, Clone)]
pub struct SwapScores {
    /// `R = ||B - M M^T B||_F^2`.
    pub residual: f64,
    /// `(j, ||A^{1/2}_j||^2 - R)` for `j` in `S`, in slot order.
    pub delta_out: Vec<(usize, f64)>,
    /// `(j, ||A^{1/2}_j||^2 - R_j)` for `j` outside `S`, ascending `j`.
    pub delta_in: Vec<(usize, f64)>,
    pub j_out: usize,
    /// `None` when `S` already covers every index.
    pub j_in: Option<usize>,
}

impl SwapScores {
    pub fn best_out(&self) -> f64 {
        self.delta_out
            .iter()
            .find(|(j, _)| *j == self.j_out)
            .map(|(_, v)| *v)
            .unwrap()
    }

    pub fn best_in(&self) -> Option<f64> {
        let j_in = self.j_in?;
        self.delta_in.iter().find(|(j, _)| *j == j_in).map(|(_, v)| *v)
    }
}

/// `f(S)`: the sum of the top-`r` eigenvalues of `A_{S,S}` and the matching
/// eigenvectors embedded on `S` (rows follow the order of `support`).
pub fn exact_support_objective(
    a: &SymmetricMatrix,
    support: &[usize],
    r: usize,
) -> Result<(f64, OrthonormalSparseFactor)> {
    if r == 0 || support.len() < r {
        return Err(invalid(format!(
            "need 1 <= r <= |S|, got r={r} |S|={}",
            support.len()
        )));
    }
    let (value, block) = top_block(a, support, r)?;
    let factor = OrthonormalSparseFactor::new(a.dim(), support.len(), support.to_vec(), block)?;
    Ok((value, factor))
}

fn top_block(a: &SymmetricMatrix, support: &[usize], r: usize) -> Result<(f64, DMatrix<f64>)> {
    let sub = a.principal(support)?;
    let eig = eigendecompose(&sub)?;
    Ok((
        eig.top_sum(r),
        eig.eigenvectors.columns(0, r).into_owned(),
    ))
}

fn check_orthonormal(m: &DMatrix<f64>, rows: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() == 0 || m.ncols() > rows {
        return Err(invalid(format!(
            "M must be |S| x r with 1 <= r <= |S|, got {}x{} for |S|={rows}",
            m.nrows(),
            m.ncols()
        )));
    }
    let r = m.ncols();
    let defect = (m.transpose() * m - DMatrix::<f64>::identity(r, r)).norm();
    if defect > 1e-9 {
        return Err(invalid(format!("M^T M deviates from I by {defect:e}")));
    }
    Ok(())
}

fn rows_of(a_half: &SymmetricMatrix, support: &[usize]) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..a_half.dim()).collect();
    submatrix(a_half, support, &all)
}

fn row_norms_sq(a_half: &SymmetricMatrix) -> Vec<f64> {
    a_half
        .as_matrix()
        .row_iter()
        .map(|row| row.norm_squared())
        .collect()
}

/// `f_bar(S, M)` exactly as defined, from `A^{1/2}`.
pub fn proxy_objective(a_half: &SymmetricMatrix, support: &[usize], m: &DMatrix<f64>) -> Result<f64> {
    check_indices(support, a_half.dim())?;
    check_orthonormal(m, support.len())?;
    let b = rows_of(a_half, support)?;
    let resid = &b - m * (m.transpose() * &b);
    let norms = row_norms_sq(a_half);
    let mut in_s = vec![false; a_half.dim()];
    for &j in support {
        in_s[j] = true;
    }
    let outside: f64 = (0..a_half.dim()).filter(|&j| !in_s[j]).map(|j| norms[j]).sum();
    Ok(resid.norm_squared() + outside)
}

/// Scores for the leaving and entering candidates at `(S, M)`.
///
/// The entering score for `j` places row `j` in the slot of `j_out`, keeps
/// every other row in place and holds `M` fixed. With `Q = I - M M^T`,
/// `c = e_p^T Q B` and `delta = a_j - a_out`, the residual is updated as
/// `R_j = R + 2 c . delta + Q_pp ||delta||^2`.
pub fn swap_scores(a_half: &SymmetricMatrix, support: &[usize], m: &DMatrix<f64>) -> Result<SwapScores> {
    check_indices(support, a_half.dim())?;
    check_orthonormal(m, support.len())?;
    let norms = row_norms_sq(a_half);
    Ok(scores_unchecked(a_half, &norms, support, m))
}

fn scores_unchecked(
    a_half: &SymmetricMatrix,
    norms: &[f64],
    slots: &[usize],
    m: &DMatrix<f64>,
) -> SwapScores {
    let d = a_half.dim();
    let ah = a_half.as_matrix();
    let b = DMatrix::from_fn(slots.len(), d, |i, c| ah[(slots[i], c)]);
    let qb = &b - m * (m.transpose() * &b);
    let residual = qb.norm_squared();

    let delta_out: Vec<(usize, f64)> = slots.iter().map(|&j| (j, norms[j] - residual)).collect();
    let (slot, &(j_out, _)) = delta_out
        .iter()
        .enumerate()
        .min_by(|(_, (ja, va)), (_, (jb, vb))| va.partial_cmp(vb).unwrap().then(ja.cmp(jb)))
        .unwrap();

    let q_pp = 1.0 - m.row(slot).norm_squared();
    let c = qb.row(slot);
    let mut in_s = vec![false; d];
    for &j in slots {
        in_s[j] = true;
    }
    let mut delta_in = Vec::with_capacity(d - slots.len());
    let mut j_in: Option<(usize, f64)> = None;
    for j in (0..d).filter(|&j| !in_s[j]) {
        let mut cross = 0.0;
        let mut dist = 0.0;
        for col in 0..d {
            let delta = ah[(j, col)] - ah[(j_out, col)];
            cross += c[col] * delta;
            dist += delta * delta;
        }
        let r_j = residual + 2.0 * cross + q_pp * dist;
        let score = norms[j] - r_j;
        delta_in.push((j, score));
        // Strict comparison keeps the smallest index on ties.
        if j_in.is_none_or(|(_, best)| score > best) {
            j_in = Some((j, score));
        }
    }
    SwapScores {
        residual,
        delta_out,
        delta_in,
        j_out,
        j_in: j_in.map(|(j, _)| j),
    }
}

/// Holds `A`, its PSD root and row norms so that repeated searches on the
/// same instance share them.
#[derive(Debug, Clone)]
pub struct PrimalContext {
    a: SymmetricMatrix,
    a_half: SymmetricMatrix,
    norms: Vec<f64>,
    trace: f64,
}

impl PrimalContext {
    pub fn new(a: &SymmetricMatrix) -> Result<Self> {
        let a_half = psd_sqrt(a)?;
        let norms = row_norms_sq(&a_half);
        Ok(Self {
            a: a.clone(),
            trace: a.trace(),
            a_half,
            norms,
        })
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.a
    }

    pub fn sqrt(&self) -> &SymmetricMatrix {
        &self.a_half
    }

    /// Modified greedy neighborhood search from `s0`.
    pub fn greedy_search(
        &self,
        k: usize,
        r: usize,
        s0: &[usize],
        max_iters: usize,
    ) -> Result<PrimalSolution> {
        let d = self.a.dim();
        if r == 0 || r > k || k > d {
            return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
        }
        if s0.len() != k {
            return Err(invalid(format!("initial support has {} indices, expected k={k}", s0.len())));
        }
        check_indices(s0, d)?;

        let mut slots = s0.to_vec();
        let (mut value, mut m) = top_block(&self.a, &slots, r)?;
        let mut trajectory = vec![self.trace - value];
        let min_gain = SWAP_IMPROVEMENT_TOL * self.trace.abs();
        let mut iterations = 0;

        for _ in 0..max_iters {
            let scores = scores_unchecked(&self.a_half, &self.norms, &slots, &m);
            let Some(j_in) = scores.j_in else { break };
            let gain = scores.best_in().unwrap() - scores.best_out();
            if gain <= min_gain {
                break;
            }
            let slot = slots.iter().position(|&j| j == scores.j_out).unwrap();
            slots[slot] = j_in;
            let (new_value, new_m) = top_block(&self.a, &slots, r)?;
            value = new_value;
            m = new_m;
            trajectory.push(self.trace - value);
            iterations += 1;
        }

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| slots[i]);
        let support: Vec<usize> = order.iter().map(|&i| slots[i]).collect();
        let block = DMatrix::from_fn(k, r, |i, c| m[(order[i], c)]);
        let factor = OrthonormalSparseFactor::new(d, k, support.clone(), block)?;
        Ok(PrimalSolution {
            support,
            factor,
            objective: value,
            iterations,
            trajectory,
        })
    }

    /// Best of `restarts` searches from uniformly random supports. Restart
    /// `i` draws its start from the sub-seed `(seed, i)`, so the result does
    /// not depend on thread scheduling. Ties go to the lexicographically
    /// smallest support.
    pub fn multistart(
        &self,
        k: usize,
        r: usize,
        restarts: usize,
        seed: u64,
        max_iters: usize,
    ) -> Result<PrimalSolution> {
        if restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        let d = self.a.dim();
        if k > d {
            return Err(invalid(format!("k={k} exceeds d={d}")));
        }
        let runs: Vec<Result<PrimalSolution>> = (0..restarts)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeded(derive_seed(seed, i as u64));
                let s0 = random_subset(&mut rng, d, k);
                self.greedy_search(k, r, &s0, max_iters)
            })
            .collect();
        let mut best: Option<PrimalSolution> = None;
        for run in runs {
            let run = run?;
            best = match best {
                None => Some(run),
                Some(cur) => {
                    let better = run.objective > cur.objective
                        || (run.objective == cur.objective && run.support < cur.support);
                    Some(if better { run } else { cur })
                }
            };
        }
        Ok(best.unwrap())
    }
}

/// [`PrimalContext::greedy_search`] on a one-off context.
pub fn greedy_search(
    a: &SymmetricMatrix,
    k: usize,
    r: usize,
    s0: &[usize],
    max_iters: usize,
) -> Result<PrimalSolution> {
    PrimalContext::new(a)?.greedy_search(k, r, s0, max_iters)
}

/// [`PrimalContext::multistart`] with the default iteration cap of `d`.
pub fn multistart(
    a: &SymmetricMatrix,
    k: usize,
    r: usize,
    restarts: usize,
    seed: u64,
) -> Result<PrimalSolution> {
    PrimalContext::new(a)?.multistart(k, r, restarts, seed, a.dim())
}
