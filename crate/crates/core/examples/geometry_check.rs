//! Samples points of the feasible set and checks them against both convex
//! relaxations.
//!
//!     cargo run --release --example geometry_check

use rspca::geometry::{cr1_membership_approx, cr2_membership, rho_constants, sample_feasible, MEMBERSHIP_TOL};

fn main() -> rspca::Result<()> {
    let (d, k) = (12, 4);
    for r in 1..=3 {
        let (rho1, rho2) = rho_constants(r);
        let mut outside = 0;
        for seed in 0..200 {
            let v = sample_feasible(d, r, k, seed)?.to_dense();
            let in2 = cr2_membership(&v, k, MEMBERSHIP_TOL)?.is_member();
            let in1 = cr1_membership_approx(&v, k, 200)?.is_member();
            outside += (!in1 || !in2) as usize;
        }
        println!("r = {r}: rho_cr1 = {rho1:.3}, rho_cr2 = {rho2:.3}, points outside = {outside}/200");
    }
    Ok(())
}
