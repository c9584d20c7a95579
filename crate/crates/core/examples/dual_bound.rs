//! Certified upper bound by branch and bound, next to the trivial one.
//!
//!     cargo run --release --example dual_bound -- 10

use std::time::Duration;

use rspca::dual::{baseline1, dual_bound, DualOptions};
use rspca::instances::{generate_spiked_instance, SpikedSpec};
use rspca::primal::multistart;

fn main() -> rspca::Result<()> {
    let secs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let a = generate_spiked_instance(&SpikedSpec::new(100, 10, 3000, 1))?;
    let (k, r) = (10, 2);

    let lb = multistart(&a, k, r, 400, 0)?.objective;
    let mut options = DualOptions::default();
    options.bnb.time_limit = Duration::from_secs(secs);
    options.bnb.primal_bound = Some(lb);
    let rep = dual_bound(&a, k, r, &options)?;

    println!("lb          {lb:.4}");
    println!("ub          {:.4} ({:?})", rep.upper_bound, rep.status);
    println!("root bound  {:.4}", rep.root_bound);
    println!("baseline-1  {:.4}", baseline1(&a, k)?);
    println!("gap         {:.4}", (rep.upper_bound - lb) / lb);
    println!("nodes {} cuts {} leaves {}", rep.nodes_explored, rep.cuts_added, rep.leaves);
    Ok(())
}
