//! The linear part of the relaxation as an LP, plus the convex constraints
//! that are enforced lazily by tangent cuts.
//!
//! Variables: `V = P - Q` with `P, Q` in `[0, 1]^{d x r}`, row-norm epigraph
//! variables `w`, one weight vector `eta` per PLA set `(j, i)` with `j` in
//! `J+`, the concave-part surrogate `s >= 0` and `t` standing for `||V||_F^2`.
//! `g_ji = a_j^T v_i` is an expression, and `xi_ji = sum_l gamma_l^2 eta_l`
//! is substituted wherever it appears. The LP maximizes
//! `sum_{J+} (lambda_j - lambda_th) sum_i xi_ji - s`; the constant
//! `r lambda_th` is added by the caller.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};
use nalgebra::{DMatrix, DVector};

use super::spectral::{baseline1, breakpoints, pla_gap_bound, SpectralPrep};
use crate::error::{invalid, Result};
use crate::linalg::SymmetricMatrix;

/// A PLA set: the pair `(j, i)` of eigenvector and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SosSet {
    pub j: usize,
    pub i: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexConstraint {
    /// `||v_i|| <= 1`.
    ColumnNorm { column: usize },
    /// `||v_a +- v_b|| <= sqrt(2)`.
    ColumnPair { a: usize, b: usize, plus: bool },
    /// `||V_l|| <= w_l`.
    RowNorm { row: usize },
    /// `sum_i v_i^T B v_i <= s` with `B = sum_{J-} (lambda_th - lambda_j) a_j a_j^T`.
    SVar,
    /// `||(a_j^T v_i)_i|| <= theta_j`.
    SparseG { j: usize },
    /// `Tr(V^T A V) <= baseline`, in the form `||A^{1/2} V||_F <= sqrt(baseline)`.
    CutG,
    /// `||V||_F^2 <= t`.
    TObj,
}

/// A linear inequality `sum coeff * x <= rhs`.
#[derive(Debug, Clone)]
pub struct Cut {
    pub terms: Vec<(Variable, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(Variable, f64)>,
    op: ComparisonOp,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct VarLayout {
    /// Indexed `l * r + i`.
    pub p: Vec<Variable>,
    pub q: Vec<Variable>,
    pub w: Vec<Variable>,
    /// One vector of `2N + 1` weights per entry of `CipModel::sets`.
    pub eta: Vec<Vec<Variable>>,
    pub s: Variable,
    pub t: Variable,
}

#[derive(Debug, Clone)]
pub struct CipModel {
    pub prep: SpectralPrep,
    pub d: usize,
    pub k: usize,
    pub r: usize,
    /// Baseline-1 value, the right-hand side of the trace cut.
    pub baseline: f64,
    pub sets: Vec<SosSet>,
    /// Breakpoints of each set, `gamma^l` at offset `l + N`.
    pub gamma: Vec<Vec<f64>>,
    pub layout: VarLayout,
    pub convex: Vec<ConvexConstraint>,
    a: DMatrix<f64>,
    b_minus: DMatrix<f64>,
    rows: Vec<Row>,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    /// Every variable, ordered by index.
    vars: Vec<Variable>,
    problem: Problem,
}

/// Values of every LP variable, indexed by `Variable::idx`.
#[derive(Debug, Clone)]
pub struct CipPoint {
    pub x: Vec<f64>,
}

pub fn build_cip_model(prep: &SpectralPrep, a: &SymmetricMatrix, k: usize, r: usize) -> Result<CipModel> {
    let d = a.dim();
    if prep.dim() != d {
        return Err(invalid(format!("spectral data has dimension {}, matrix {d}", prep.dim())));
    }
    if prep.k != k {
        return Err(invalid(format!("spectral data was built for k={}, model asks k={k}", prep.k)));
    }
    if r == 0 || r > k || k > d {
        return Err(invalid(format!("need 1 <= r <= k <= d, got r={r} k={k} d={d}")));
    }
    let n = prep.n_breakpoints;
    let lth = prep.lambda_th;
    let lam = &prep.eig.eigenvalues;
    let evec = &prep.eig.eigenvectors;

    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut objective = Vec::new();
    let mut bounds = Vec::new();
    let mut add_var = |problem: &mut Problem, obj: f64, lo: f64, hi: f64| {
        objective.push(obj);
        bounds.push((lo, hi));
        problem.add_var(obj, (lo, hi))
    };

    let p: Vec<Variable> = (0..d * r).map(|_| add_var(&mut problem, 0.0, 0.0, 1.0)).collect();
    let q: Vec<Variable> = (0..d * r).map(|_| add_var(&mut problem, 0.0, 0.0, 1.0)).collect();
    let w: Vec<Variable> = (0..d).map(|_| add_var(&mut problem, 0.0, 0.0, 1.0)).collect();

    let mut sets = Vec::new();
    let mut gamma = Vec::new();
    let mut eta = Vec::new();
    for &j in &prep.jplus {
        let grid = breakpoints(prep.theta[j], n);
        for i in 0..r {
            let weight = lam[j] - lth;
            let vars: Vec<Variable> = grid
                .iter()
                .map(|g| add_var(&mut problem, weight * g * g, 0.0, 1.0))
                .collect();
            sets.push(SosSet { j, i });
            gamma.push(grid.clone());
            eta.push(vars);
        }
    }
    let s = add_var(&mut problem, -1.0, 0.0, f64::INFINITY);
    let t = add_var(&mut problem, 0.0, 0.0, r as f64);
    let layout = VarLayout { p, q, w, eta, s, t };

    let baseline = baseline1(a, k)?;
    let mut rows = Vec::new();
    for (idx, set) in sets.iter().enumerate() {
        let mut coeffs = DMatrix::zeros(d, r);
        coeffs.set_column(set.i, &evec.column(set.j));
        let mut terms = v_terms(&layout, r, &coeffs);
        terms.extend(layout.eta[idx].iter().zip(&gamma[idx]).map(|(v, g)| (*v, -g)));
        rows.push(Row { terms, op: ComparisonOp::Eq, rhs: 0.0 });
        rows.push(Row {
            terms: layout.eta[idx].iter().map(|v| (*v, 1.0)).collect(),
            op: ComparisonOp::Eq,
            rhs: 1.0,
        });
    }

    // Bessel bound on the PLA values of each eigenvector in J+.
    for &j in &prep.jplus {
        let mut terms = Vec::new();
        for idx in (0..sets.len()).filter(|&idx| sets[idx].j == j) {
            terms.extend(layout.eta[idx].iter().zip(&gamma[idx]).map(|(v, g)| (*v, g * g)));
        }
        let theta2 = prep.theta[j] * prep.theta[j];
        rows.push(Row {
            terms,
            op: ComparisonOp::Le,
            rhs: theta2 * (1.0 + r as f64 / (4.0 * (n * n) as f64)),
        });
    }

    let sqrt_k = (k as f64).sqrt();
    for i in 0..r {
        let terms = (0..d)
            .flat_map(|l| [(layout.p[l * r + i], 1.0), (layout.q[l * r + i], 1.0)])
            .collect();
        rows.push(Row { terms, op: ComparisonOp::Le, rhs: sqrt_k });
    }
    rows.push(Row {
        terms: layout.w.iter().map(|v| (*v, 1.0)).collect(),
        op: ComparisonOp::Le,
        rhs: ((r * k) as f64).sqrt(),
    });
    let sqrt_r = (r as f64).sqrt();
    for l in 0..d {
        let mut terms: Vec<(Variable, f64)> = (0..r)
            .flat_map(|i| [(layout.p[l * r + i], 1.0), (layout.q[l * r + i], 1.0)])
            .collect();
        terms.push((layout.w[l], -sqrt_r));
        rows.push(Row { terms, op: ComparisonOp::Le, rhs: 0.0 });
    }

    // Trace cut on the threshold form of the objective.
    let mut terms = Vec::new();
    let mut slack = 0.0;
    for (idx, set) in sets.iter().enumerate() {
        let weight = lam[set.j] - lth;
        terms.extend(layout.eta[idx].iter().zip(&gamma[idx]).map(|(v, g)| (*v, weight * g * g)));
        slack += weight * pla_gap_bound(prep.theta[set.j], n);
    }
    terms.push((layout.s, -1.0));
    if lth != 0.0 {
        terms.push((layout.t, lth));
    }
    rows.push(Row { terms, op: ComparisonOp::Le, rhs: baseline + slack });

    for row in &rows {
        problem.add_constraint(row.terms.iter().copied().collect::<LinearExpr>(), row.op, row.rhs);
    }

    let mut b_minus = DMatrix::zeros(d, d);
    for &j in &prep.jminus {
        let c = lth - lam[j];
        if c > 0.0 {
            let a_j = evec.column(j);
            b_minus += c * a_j * a_j.transpose();
        }
    }

    let mut convex = Vec::new();
    for column in 0..r {
        convex.push(ConvexConstraint::ColumnNorm { column });
    }
    for a_ in 0..r {
        for b in a_ + 1..r {
            convex.push(ConvexConstraint::ColumnPair { a: a_, b, plus: true });
            convex.push(ConvexConstraint::ColumnPair { a: a_, b, plus: false });
        }
    }
    for row in 0..d {
        convex.push(ConvexConstraint::RowNorm { row });
    }
    if !prep.jminus.is_empty() {
        convex.push(ConvexConstraint::SVar);
    }
    for j in 0..d {
        convex.push(ConvexConstraint::SparseG { j });
    }
    convex.push(ConvexConstraint::CutG);
    convex.push(ConvexConstraint::TObj);

    let mut vars: Vec<Variable> = layout.p.iter().chain(&layout.q).chain(&layout.w).copied().collect();
    vars.extend(layout.eta.iter().flatten());
    vars.push(layout.s);
    vars.push(layout.t);
    vars.sort_by_key(|v| v.idx());

    Ok(CipModel {
        prep: prep.clone(),
        d,
        k,
        r,
        baseline,
        sets,
        gamma,
        layout,
        convex,
        a: a.as_matrix().clone(),
        b_minus,
        rows,
        objective,
        bounds,
        vars,
        problem,
    })
}

fn v_terms(layout: &VarLayout, r: usize, coeffs: &DMatrix<f64>) -> Vec<(Variable, f64)> {
    let mut terms = Vec::new();
    for l in 0..coeffs.nrows() {
        for i in 0..r {
            let c = coeffs[(l, i)];
            if c != 0.0 {
                terms.push((layout.p[l * r + i], c));
                terms.push((layout.q[l * r + i], -c));
            }
        }
    }
    terms
}

impl CipModel {
    pub fn lp(&self) -> &Problem {
        &self.problem
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// `r lambda_th`, added to the LP objective to obtain the bound.
    pub fn objective_offset(&self) -> f64 {
        self.r as f64 * self.prep.lambda_th
    }

    pub fn point_from(&self, sol: &microlp::Solution) -> CipPoint {
        CipPoint {
            x: self.vars.iter().map(|v| sol.var_value_raw(*v)).collect(),
        }
    }

    pub fn v(&self, pt: &CipPoint) -> DMatrix<f64> {
        let r = self.r;
        DMatrix::from_fn(self.d, r, |l, i| {
            pt.x[self.layout.p[l * r + i].idx()] - pt.x[self.layout.q[l * r + i].idx()]
        })
    }

    pub fn eta(&self, pt: &CipPoint, set: usize) -> Vec<f64> {
        self.layout.eta[set].iter().map(|v| pt.x[v.idx()]).collect()
    }

    /// `(g, xi)` of a set read from its weights.
    pub fn pla_values(&self, pt: &CipPoint, set: usize) -> (f64, f64) {
        let eta = self.eta(pt, set);
        let g = eta.iter().zip(&self.gamma[set]).map(|(e, g)| e * g).sum();
        let xi = eta.iter().zip(&self.gamma[set]).map(|(e, g)| e * g * g).sum();
        (g, xi)
    }

    /// LP objective plus `r lambda_th`.
    pub fn bound_value(&self, pt: &CipPoint) -> f64 {
        self.objective.iter().zip(&pt.x).map(|(c, x)| c * x).sum::<f64>() + self.objective_offset()
    }

    fn v_terms(&self, coeffs: &DMatrix<f64>) -> Vec<(Variable, f64)> {
        v_terms(&self.layout, self.r, coeffs)
    }

    fn g_row(&self, v: &DMatrix<f64>, j: usize) -> DVector<f64> {
        (v.transpose() * self.prep.eig.eigenvectors.column(j)).into_owned()
    }

    /// Amount by which `pt` violates `c`, scaled so that `1e-7` is a
    /// meaningful tolerance. Non-positive when satisfied.
    pub fn violation(&self, c: ConvexConstraint, pt: &CipPoint) -> f64 {
        let v = self.v(pt);
        match c {
            ConvexConstraint::ColumnNorm { column } => v.column(column).norm() - 1.0,
            ConvexConstraint::ColumnPair { a, b, plus } => {
                let u = if plus { v.column(a) + v.column(b) } else { v.column(a) - v.column(b) };
                u.norm() - std::f64::consts::SQRT_2
            }
            ConvexConstraint::RowNorm { row } => v.row(row).norm() - pt.x[self.layout.w[row].idx()],
            ConvexConstraint::SVar => {
                let quad = (v.transpose() * &self.b_minus * &v).trace();
                (quad - pt.x[self.layout.s.idx()]) / quad.abs().max(1.0)
            }
            ConvexConstraint::SparseG { j } => self.g_row(&v, j).norm() - self.prep.theta[j],
            ConvexConstraint::CutG => {
                let quad = (v.transpose() * &self.a * &v).trace().max(0.0);
                (quad.sqrt() - self.baseline.sqrt()) / self.baseline.sqrt().max(1.0)
            }
            ConvexConstraint::TObj => v.norm_squared() - pt.x[self.layout.t.idx()],
        }
    }

    /// Tangent cut of `c` at `pt`. `None` when the constraint is not
    /// differentiable there (which only happens where it is satisfied).
    pub fn cut(&self, c: ConvexConstraint, pt: &CipPoint) -> Option<Cut> {
        let v = self.v(pt);
        let (d, r) = (self.d, self.r);
        match c {
            ConvexConstraint::ColumnNorm { column } => {
                let norm = v.column(column).norm();
                if norm == 0.0 {
                    return None;
                }
                let mut coeffs = DMatrix::zeros(d, r);
                coeffs.set_column(column, &(v.column(column) / norm));
                Some(Cut { terms: self.v_terms(&coeffs), rhs: 1.0 })
            }
            ConvexConstraint::ColumnPair { a, b, plus } => {
                let u = if plus { v.column(a) + v.column(b) } else { v.column(a) - v.column(b) };
                let norm = u.norm();
                if norm == 0.0 {
                    return None;
                }
                let dir = u / norm;
                let mut coeffs = DMatrix::zeros(d, r);
                coeffs.set_column(a, &dir);
                coeffs.set_column(b, &(if plus { dir.clone() } else { -dir }));
                Some(Cut { terms: self.v_terms(&coeffs), rhs: std::f64::consts::SQRT_2 })
            }
            ConvexConstraint::RowNorm { row } => {
                let norm = v.row(row).norm();
                if norm == 0.0 {
                    return None;
                }
                let mut coeffs = DMatrix::zeros(d, r);
                coeffs.set_row(row, &(v.row(row) / norm));
                let mut terms = self.v_terms(&coeffs);
                terms.push((self.layout.w[row], -1.0));
                Some(Cut { terms, rhs: 0.0 })
            }
            ConvexConstraint::SVar => {
                let bv = &self.b_minus * &v;
                let quad = v.dot(&bv);
                let mut terms = self.v_terms(&(2.0 * bv));
                terms.push((self.layout.s, -1.0));
                Some(Cut { terms, rhs: quad })
            }
            ConvexConstraint::SparseG { j } => {
                let g = self.g_row(&v, j);
                let norm = g.norm();
                if norm == 0.0 {
                    return None;
                }
                let a_j = self.prep.eig.eigenvectors.column(j);
                let coeffs = a_j * (g / norm).transpose();
                Some(Cut { terms: self.v_terms(&coeffs), rhs: self.prep.theta[j] })
            }
            ConvexConstraint::CutG => {
                let av = &self.a * &v;
                let quad = v.dot(&av);
                if quad <= 0.0 {
                    return None;
                }
                Some(Cut {
                    terms: self.v_terms(&av),
                    rhs: (self.baseline * quad).sqrt(),
                })
            }
            ConvexConstraint::TObj => {
                let mut terms = self.v_terms(&(2.0 * &v));
                terms.push((self.layout.t, -1.0));
                Some(Cut { terms, rhs: v.norm_squared() })
            }
        }
    }

    /// Embeds a feasible factor into the model's variables: `P, Q` from the
    /// sign split, exact row norms, each `g_ji` written as the convex
    /// combination of its two neighbouring breakpoints, exact `s` and `t`.
    pub fn lift(&self, v: &DMatrix<f64>) -> Result<CipPoint> {
        if v.nrows() != self.d || v.ncols() != self.r {
            return Err(invalid(format!(
                "factor is {}x{}, model expects {}x{}",
                v.nrows(),
                v.ncols(),
                self.d,
                self.r
            )));
        }
        let r = self.r;
        let mut x = vec![0.0; self.num_vars()];
        for l in 0..self.d {
            for i in 0..r {
                let val = v[(l, i)];
                x[self.layout.p[l * r + i].idx()] = val.max(0.0);
                x[self.layout.q[l * r + i].idx()] = (-val).max(0.0);
            }
            x[self.layout.w[l].idx()] = v.row(l).norm();
        }
        let n = self.prep.n_breakpoints;
        for (idx, set) in self.sets.iter().enumerate() {
            let theta = self.prep.theta[set.j];
            let g = self.prep.eig.eigenvectors.column(set.j).dot(&v.column(set.i));
            let g = g.clamp(-theta, theta);
            let h = theta / n as f64;
            let pos = ((g + theta) / h).clamp(0.0, (2 * n) as f64);
            let lo = (pos.floor() as usize).min(2 * n - 1);
            let frac = pos - lo as f64;
            x[self.layout.eta[idx][lo].idx()] = 1.0 - frac;
            x[self.layout.eta[idx][lo + 1].idx()] = frac;
        }
        x[self.layout.s.idx()] = (v.transpose() * &self.b_minus * v).trace().max(0.0);
        x[self.layout.t.idx()] = v.norm_squared();
        Ok(CipPoint { x })
    }

    /// Largest violation of the bounds, linear rows and convex constraints.
    pub fn max_violation(&self, pt: &CipPoint) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, (lo, hi)) in pt.x.iter().zip(&self.bounds) {
            worst = worst.max(lo - x).max(x - hi);
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|(v, c)| c * pt.x[v.idx()]).sum();
            let gap = match row.op {
                ComparisonOp::Le => lhs - row.rhs,
                ComparisonOp::Ge => row.rhs - lhs,
                ComparisonOp::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        for &c in &self.convex {
            worst = worst.max(self.violation(c, pt));
        }
        worst
    }

    /// Left and right sides of the Bessel row for `j` in `J+` and of the
    /// threshold trace cut.
    pub fn named_rows(&self, pt: &CipPoint) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        let tail = &self.rows[self.rows.len() - (self.prep.jplus.len() + self.r + 1 + self.d + 1)..];
        let sparse_xi = &tail[..self.prep.jplus.len()];
        for (row, &j) in sparse_xi.iter().zip(&self.prep.jplus) {
            let lhs: f64 = row.terms.iter().map(|(v, c)| c * pt.x[v.idx()]).sum();
            out.push((format!("sparse-xi[{j}]"), lhs, row.rhs));
        }
        let last = self.rows.last().unwrap();
        let lhs: f64 = last.terms.iter().map(|(v, c)| c * pt.x[v.idx()]).sum();
        out.push(("cut-xi".to_string(), lhs, last.rhs));
        out
    }
}

impl CipPoint {
    pub fn value(&self, v: Variable) -> f64 {
        self.x[v.idx()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::spectral::spectral_prep;
    use crate::oracle::brute_force_opt;
    use crate::primal::exact_support_objective;
    use crate::rng::NormalSampler;

    fn random_psd(d: usize, seed: u64) -> SymmetricMatrix {
        let g = NormalSampler::new(seed).matrix(d, d);
        SymmetricMatrix::new(&g * g.transpose()).unwrap()
    }

    #[test]
    fn sparse_xi_rhs_formula() {
        let a = SymmetricMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let prep = spectral_prep(&a, 2, 40, 3).unwrap();
        let model = build_cip_model(&prep, &a, 2, 2).unwrap();
        let pt = model.lift(&DMatrix::zeros(3, 2)).unwrap();
        let rows = model.named_rows(&pt);
        let (_, _, rhs) = &rows[0];
        assert!((rhs - (1.0 + 2.0 / 6400.0)).abs() < 1e-15);
    }

    #[test]
    fn lifted_optimum_is_feasible_and_dominates() {
        for seed in 0..5 {
            let a = random_psd(7, 40 + seed);
            let (opt, support) = brute_force_opt(&a, 3, 2).unwrap();
            let (_, factor) = exact_support_objective(&a, &support, 2).unwrap();
            let v = factor.to_dense();
            let prep = spectral_prep(&a, 3, 40, 3).unwrap();
            let model = build_cip_model(&prep, &a, 3, 2).unwrap();
            let pt = model.lift(&v).unwrap();
            assert!(model.max_violation(&pt) <= 1e-9, "seed {seed}: {}", model.max_violation(&pt));
            assert!(model.bound_value(&pt) >= opt - 1e-9);
        }
    }

    #[test]
    fn threshold_identity() {
        let a = random_psd(6, 8);
        let prep = spectral_prep(&a, 3, 40, 3).unwrap();
        let v = NormalSampler::new(1).matrix(6, 2);
        let lam = &prep.eig.eigenvalues;
        let lth = prep.lambda_th;
        let g = prep.eig.eigenvectors.transpose() * &v;
        let sq = |j: usize| g.row(j).norm_squared();
        let full: f64 = (0..6).map(|j| lam[j] * sq(j)).sum();
        let split: f64 = prep.jplus.iter().map(|&j| (lam[j] - lth) * sq(j)).sum::<f64>()
            + prep.jminus.iter().map(|&j| (lam[j] - lth) * sq(j)).sum::<f64>()
            + lth * (0..6).map(sq).sum::<f64>();
        assert!((full - split).abs() <= 1e-10 * full.max(1.0));
        assert!((full - (v.transpose() * a.as_matrix() * &v).trace()).abs() <= 1e-9 * full);
    }

    #[test]
    fn cuts_separate_violating_points() {
        let a = random_psd(5, 2);
        let prep = spectral_prep(&a, 2, 4, 2).unwrap();
        let model = build_cip_model(&prep, &a, 2, 2).unwrap();
        let v = 2.0 * NormalSampler::new(5).matrix(5, 2);
        let mut pt = model.lift(&DMatrix::zeros(5, 2)).unwrap();
        let r = 2;
        for l in 0..5 {
            for i in 0..r {
                pt.x[model.layout.p[l * r + i].idx()] = v[(l, i)].max(0.0);
                pt.x[model.layout.q[l * r + i].idx()] = (-v[(l, i)]).max(0.0);
            }
        }
        for &c in &model.convex {
            if model.violation(c, &pt) > 1e-7 {
                let cut = model.cut(c, &pt).unwrap();
                let lhs: f64 = cut.terms.iter().map(|(var, co)| co * pt.x[var.idx()]).sum();
                assert!(lhs > cut.rhs, "{c:?} does not separate");
            }
        }
    }
}
