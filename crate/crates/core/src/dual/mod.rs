//! Certified upper bounds.
//!
//! The objective is split at the eigenvalue threshold `lambda_th`: the
//! convex part over `J+` is relaxed by piecewise-linear interpolation of
//! `g^2` on a breakpoint grid, the concave part over `J-` is replaced by a
//! surrogate `s`, and feasibility is relaxed to the second convex region
//! (column norms, pairwise column sums, column l1 norms and the row-norm
//! sum). A branch and bound over the interpolation weights turns the
//! relaxation into a certified bound that is valid whenever it stops.

mod bnb;
mod model;
mod spectral;

pub use bnb::{
    branch_and_bound, solve_node_relaxation, BnbOptions, BoundStatus, DualBoundReport, NodeRelaxation,
    PlaSample, DEFAULT_CUT_BUDGET, DEFAULT_GAP_TOL, SOS_TOL, VIOLATION_TOL,
};
pub use model::{build_cip_model, CipModel, CipPoint, ConvexConstraint, Cut, SosSet, VarLayout};
pub use spectral::{
    additive_term, baseline1, breakpoints, check_affine_guarantee, pla_gap_bound, pla_interpolant,
    prep_from_eig, sparse_norm, spectral_prep, AffineCheck, SpectralPrep, DEFAULT_BREAKPOINTS, DEFAULT_JPLUS,
};

use crate::error::Result;
use crate::linalg::SymmetricMatrix;

#[derive(Debug, Clone)]
pub struct DualOptions {
    pub n_breakpoints: usize,
    pub jplus: usize,
    pub bnb: BnbOptions,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            n_breakpoints: DEFAULT_BREAKPOINTS,
            jplus: DEFAULT_JPLUS,
            bnb: BnbOptions::default(),
        }
    }
}

/// Spectral preprocessing, model construction and branch and bound in one
/// call.
pub fn dual_bound(a: &SymmetricMatrix, k: usize, r: usize, options: &DualOptions) -> Result<DualBoundReport> {
    let jplus = options.jplus.min(a.dim());
    let prep = spectral_prep(a, k, options.n_breakpoints, jplus)?;
    let model = build_cip_model(&prep, a, k, r)?;
    branch_and_bound(&model, &options.bnb)
}
