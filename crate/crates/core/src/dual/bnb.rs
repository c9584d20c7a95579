//! Node relaxations by Kelley outer approximation and the best-bound-first
//! search over PLA weight windows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, LinearExpr, SolveOutcome, Solution};
use serde::Serialize;

use super::model::{CipModel, CipPoint};
use crate::error::{Error, Result};

pub const DEFAULT_CUT_BUDGET: usize = 200;
pub const VIOLATION_TOL: f64 = 1e-7;
/// Mass allowed outside the heaviest adjacent pair of a leaf's weights.
pub const SOS_TOL: f64 = 1e-7;
pub const DEFAULT_GAP_TOL: f64 = 1e-4;
/// A node's cut loop also stops after this many consecutive rounds that
/// lower its bound by less than `STALL_TOL` (relative).
pub const STALL_ROUNDS: usize = 2;
/// Every this many best-bound pops, the search plunges depth first from the
/// popped node until it reaches a leaf or a pruned or infeasible child.
/// Siblings stay in the queue, so plunging only reorders the search.
pub const PLUNGE_INTERVAL: usize = 20;
const MAX_PLA_SAMPLES: usize = 100_000;
/// Cuts added per round, most violated first.
pub const CUTS_PER_ROUND: usize = 5;
pub const STALL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub time_limit: Duration,
    pub cut_budget: usize,
    /// The search stops once no open node exceeds the best leaf by more
    /// than `gap_tol * max(1, |leaf|)`.
    pub gap_tol: f64,
    /// A known feasible objective. Nodes bounded by it are discarded and
    /// the reported bound is never below it.
    pub primal_bound: Option<f64>,
    pub max_nodes: Option<usize>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(60),
            cut_budget: DEFAULT_CUT_BUDGET,
            gap_tol: DEFAULT_GAP_TOL,
            primal_bound: None,
            max_nodes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Optimal,
    TimeLimitAnytime,
}

/// PLA coordinates of one set at a leaf, taken from the clamped and
/// renormalized weights.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlaSample {
    pub j: usize,
    pub i: usize,
    pub g: f64,
    pub xi: f64,
    pub theta: f64,
    /// `sum_l eta_l (gamma_l - g)^2`, which equals `xi - g^2` without the
    /// cancellation error of the subtraction.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualBoundReport {
    pub upper_bound: f64,
    pub status: BoundStatus,
    pub nodes_explored: usize,
    pub cuts_added: usize,
    pub additive_term: f64,
    pub wallclock: f64,
    pub root_bound: f64,
    pub leaves: usize,
    pub open_nodes: usize,
    pub unresolved_nodes: usize,
    pub max_depth: usize,
    #[serde(skip)]
    pub pla_samples: Vec<PlaSample>,
}

/// Result of one node relaxation.
#[derive(Debug, Clone)]
pub struct NodeRelaxation {
    /// LP optimum plus `r lambda_th`; a valid bound on the node.
    pub value: f64,
    pub point: CipPoint,
    pub cuts_added: usize,
    /// Whether every convex constraint holds within tolerance.
    pub converged: bool,
}

enum NodeOutcome {
    Solved(Box<Solution>, NodeRelaxation),
    Infeasible,
    Failed,
}

fn outcome_solution(out: std::result::Result<SolveOutcome, microlp::Error>) -> Option<std::result::Result<Solution, ()>> {
    match out {
        Ok(SolveOutcome::Solution(sol)) => Some(Ok(sol)),
        Ok(SolveOutcome::Interrupted(_)) => Some(Err(())),
        Err(microlp::Error::Infeasible) => None,
        Err(_) => Some(Err(())),
    }
}

fn kelley(
    model: &CipModel,
    mut sol: Solution,
    budget: usize,
    deadline: Option<Instant>,
) -> NodeOutcome {
    let mut cuts_added = 0;
    let mut last_value = f64::INFINITY;
    let mut flat_rounds = 0;
    loop {
        let point = model.point_from(&sol);
        let value = model.bound_value(&point);
        if value < last_value - STALL_TOL * value.abs().max(1.0) {
            flat_rounds = 0;
        } else {
            flat_rounds += 1;
        }
        last_value = value;
        let mut violated: Vec<(f64, usize)> = model
            .convex
            .iter()
            .enumerate()
            .map(|(idx, c)| (model.violation(*c, &point), idx))
            .filter(|(v, _)| *v > VIOLATION_TOL)
            .collect();
        let out_of_time = deadline.is_some_and(|d| Instant::now() >= d);
        let stalled = flat_rounds > STALL_ROUNDS;
        if violated.is_empty() || cuts_added >= budget || out_of_time || stalled {
            let converged = violated.is_empty();
            return NodeOutcome::Solved(
                Box::new(sol),
                NodeRelaxation { value, point, cuts_added, converged },
            );
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, idx) in violated.into_iter().take(CUTS_PER_ROUND.min(budget - cuts_added)) {
            let Some(cut) = model.cut(model.convex[idx], &point) else { continue };
            let expr: LinearExpr = cut.terms.into_iter().collect();
            match outcome_solution(sol.add_constraint(expr, ComparisonOp::Le, cut.rhs)) {
                Some(Ok(next)) => sol = next,
                Some(Err(())) => return NodeOutcome::Failed,
                None => return NodeOutcome::Infeasible,
            }
            cuts_added += 1;
        }
    }
}

/// Window constraint for one set: weights outside `[lo, hi]` are zero.
fn window_expr(model: &CipModel, set: usize, lo: usize, hi: usize) -> Option<LinearExpr> {
    let vars = &model.layout.eta[set];
    let outside: Vec<_> = vars
        .iter()
        .enumerate()
        .filter(|(l, _)| *l < lo || *l > hi)
        .map(|(_, v)| (*v, 1.0))
        .collect();
    if outside.is_empty() {
        None
    } else {
        Some(outside.into_iter().collect())
    }
}

fn solve_root(model: &CipModel, budget: usize) -> Result<(Solution, NodeRelaxation)> {
    let sol = match outcome_solution(model.lp().solve()) {
        Some(Ok(sol)) => sol,
        _ => return Err(Error::Numerical("root LP failed".into())),
    };
    match kelley(model, sol, budget, None) {
        NodeOutcome::Solved(sol, relax) => Ok((*sol, relax)),
        _ => Err(Error::Numerical("root relaxation failed".into())),
    }
}

/// Bound on the relaxation restricted to the given per-set windows
/// (`[lo, hi]` offsets into each set's breakpoints). `Ok(None)` means the
/// restriction is infeasible.
pub fn solve_node_relaxation(
    model: &CipModel,
    windows: &[(usize, usize)],
    cut_budget: usize,
) -> Result<Option<NodeRelaxation>> {
    if windows.len() != model.sets.len() {
        return Err(crate::error::invalid(format!(
            "expected {} windows, got {}",
            model.sets.len(),
            windows.len()
        )));
    }
    let mut problem = model.lp().clone();
    for (set, &(lo, hi)) in windows.iter().enumerate() {
        if let Some(expr) = window_expr(model, set, lo, hi) {
            problem.add_constraint(expr, ComparisonOp::Eq, 0.0);
        }
    }
    let sol = match outcome_solution(problem.solve()) {
        Some(Ok(sol)) => sol,
        Some(Err(())) => return Err(Error::Numerical("node LP failed".into())),
        None => return Ok(None),
    };
    match kelley(model, sol, cut_budget, None) {
        NodeOutcome::Solved(_, relax) => Ok(Some(relax)),
        NodeOutcome::Infeasible => Ok(None),
        NodeOutcome::Failed => Err(Error::Numerical("node LP failed".into())),
    }
}

fn pla_sample(model: &CipModel, point: &CipPoint, s: usize) -> PlaSample {
    // Weights are clamped and renormalized so LP round-off in sum(eta) = 1
    // does not leak into the measurement.
    let eta: Vec<f64> = model.eta(point, s).iter().map(|e| e.max(0.0)).collect();
    let mass: f64 = eta.iter().sum();
    let gamma = &model.gamma[s];
    let g = eta.iter().zip(gamma).map(|(e, gm)| e * gm).sum::<f64>() / mass;
    let xi = eta.iter().zip(gamma).map(|(e, gm)| e * gm * gm).sum::<f64>() / mass;
    let spread = eta.iter().zip(gamma).map(|(e, gm)| e * (gm - g) * (gm - g)).sum::<f64>() / mass;
    let set = model.sets[s];
    PlaSample {
        j: set.j,
        i: set.i,
        g,
        xi,
        theta: model.prep.theta[set.j],
        spread,
    }
}

/// Mass outside the heaviest adjacent pair.
fn mass_outside_pair(eta: &[f64]) -> f64 {
    let total: f64 = eta.iter().sum();
    let best = eta.windows(2).map(|w| w[0] + w[1]).fold(0.0, f64::max);
    (total - best).max(0.0)
}

/// Split offset strictly between the outermost weights with positive mass,
/// rounded from the weighted mean offset.
fn split_point(eta: &[f64]) -> usize {
    let support: Vec<usize> = (0..eta.len()).filter(|&l| eta[l] > 1e-12).collect();
    let (lo, hi) = (support[0], *support.last().unwrap());
    let mass: f64 = support.iter().map(|&l| eta[l]).sum();
    let mean = support.iter().map(|&l| l as f64 * eta[l]).sum::<f64>() / mass;
    (mean.round() as usize).clamp(lo + 1, hi - 1)
}

struct Node {
    bound: f64,
    seq: u64,
    depth: usize,
    windows: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: larger bound first, then earlier creation.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Best-bound-first search. The reported bound is the maximum of the
/// open nodes' bounds, the leaves' values and any unresolved node's
/// inherited bound, so it is valid whenever the search stops.
pub fn branch_and_bound(model: &CipModel, options: &BnbOptions) -> Result<DualBoundReport> {
    let start = Instant::now();
    let deadline = start + options.time_limit;
    let n_sets = model.sets.len();
    let full = model.gamma.first().map_or(0, |g| g.len() - 1);

    let (root_sol, root) = solve_root(model, options.cut_budget)?;
    let root_bound = root.value;

    let mut cuts_added = root.cuts_added;
    let mut nodes_explored = 1;
    let mut best_leaf = f64::NEG_INFINITY;
    let mut unresolved = f64::NEG_INFINITY;
    let mut unresolved_nodes = 0;
    let mut leaves = 0;
    let mut max_depth = 0;
    let mut samples = Vec::new();
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 0u64;
    let floor = options.primal_bound.unwrap_or(f64::NEG_INFINITY);

    let mut pending = Some((root.clone(), vec![(0, full); n_sets], 0usize));
    let mut timed_out = false;
    // Child chosen by an ongoing plunge; evaluated before the next heap pop.
    let mut dive: Option<Node> = None;
    let mut plunging = false;
    let mut pops_since_plunge = 0;

    loop {
        if let Some((relax, windows, depth)) = pending.take() {
            max_depth = max_depth.max(depth);
            let outside: Vec<f64> = (0..n_sets)
                .map(|s| mass_outside_pair(&model.eta(&relax.point, s)))
                .collect();
            let branch = outside
                .iter()
                .enumerate()
                .filter(|(_, m)| **m > SOS_TOL)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(s, _)| s);
            match branch {
                None => {
                    plunging = false;
                    leaves += 1;
                    best_leaf = best_leaf.max(relax.value);
                    if samples.len() < MAX_PLA_SAMPLES {
                        samples.extend((0..n_sets).map(|s| pla_sample(model, &relax.point, s)));
                    }
                }
                Some(s) if relax.value > best_leaf.max(floor) => {
                    let eta = model.eta(&relax.point, s);
                    let b = split_point(&eta);
                    let (lo, hi) = windows[s];
                    let left_mass: f64 = eta[..=b].iter().sum();
                    let prefer_left = left_mass >= 1.0 - left_mass;
                    for (side, child) in [(true, (lo, b)), (false, (b, hi))] {
                        let mut w = windows.clone();
                        w[s] = child;
                        seq += 1;
                        let node = Node {
                            bound: relax.value,
                            seq,
                            depth: depth + 1,
                            windows: w,
                        };
                        if plunging && side == prefer_left {
                            dive = Some(node);
                        } else {
                            heap.push(node);
                        }
                    }
                }
                Some(_) => plunging = false,
            }
        }

        let threshold = best_leaf.max(floor);
        if dive.as_ref().is_some_and(|n| n.bound <= threshold) {
            dive = None;
            plunging = false;
        }
        while heap.peek().is_some_and(|n| n.bound <= threshold) {
            heap.pop();
        }
        let best_open = dive
            .iter()
            .chain(heap.peek())
            .map(|n| n.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        if best_open == f64::NEG_INFINITY {
            break;
        }
        if best_leaf.is_finite() && best_open <= best_leaf + options.gap_tol * best_leaf.abs().max(1.0) {
            break;
        }
        if Instant::now() >= deadline || options.max_nodes.is_some_and(|m| nodes_explored >= m) {
            timed_out = true;
            break;
        }

        let node = match dive.take() {
            Some(node) => node,
            None => {
                plunging = false;
                pops_since_plunge += 1;
                if pops_since_plunge >= PLUNGE_INTERVAL {
                    pops_since_plunge = 0;
                    plunging = true;
                }
                heap.pop().unwrap()
            }
        };
        // Nodes restart from the root LP state. Inherited cuts made deep
        // LPs slower to re-solve than regenerating the few cuts a node needs.
        let mut start_sol = Some(Ok(root_sol.clone()));
        for (set, &(lo, hi)) in node.windows.iter().enumerate() {
            let Some(expr) = window_expr(model, set, lo, hi) else { continue };
            start_sol = match start_sol {
                Some(Ok(sol)) => outcome_solution(sol.add_constraint(expr, ComparisonOp::Le, 0.0)),
                other => other,
            };
        }
        nodes_explored += 1;
        let outcome = match start_sol {
            None => NodeOutcome::Infeasible,
            Some(Err(())) => NodeOutcome::Failed,
            Some(Ok(sol)) => kelley(model, sol, options.cut_budget, Some(deadline)),
        };
        match outcome {
            NodeOutcome::Infeasible => plunging = false,
            NodeOutcome::Failed => {
                plunging = false;
                unresolved_nodes += 1;
                unresolved = unresolved.max(node.bound);
            }
            NodeOutcome::Solved(_, mut relax) => {
                cuts_added += relax.cuts_added;
                // A child can never be looser than its parent.
                relax.value = relax.value.min(node.bound);
                pending = Some((relax, node.windows, node.depth));
            }
        }
    }
    heap.extend(dive);

    let open_max = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let mut upper_bound = best_leaf.max(open_max).max(unresolved);
    if options.primal_bound.is_some() {
        upper_bound = upper_bound.max(floor);
    }
    if !upper_bound.is_finite() {
        // Only reachable if every child LP was reported infeasible.
        upper_bound = root_bound;
    }
    let status = if timed_out { BoundStatus::TimeLimitAnytime } else { BoundStatus::Optimal };
    Ok(DualBoundReport {
        upper_bound,
        status,
        nodes_explored,
        cuts_added,
        additive_term: model.prep.additive_term(model.r),
        wallclock: start.elapsed().as_secs_f64(),
        root_bound,
        leaves,
        open_nodes: heap.len(),
        unresolved_nodes,
        max_depth,
        pla_samples: samples,
    })
}
