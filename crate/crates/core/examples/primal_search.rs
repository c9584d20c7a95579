//! Greedy swap search from one start, then the multistart best.
//!
//!     cargo run --release --example primal_search

use rspca::instances::{generate_spiked_instance, SpikedSpec};
use rspca::primal::PrimalContext;
use rspca::rng::{random_subset, seeded};

fn main() -> rspca::Result<()> {
    let a = generate_spiked_instance(&SpikedSpec::new(100, 10, 3000, 1))?;
    let (k, r) = (10, 2);
    let ctx = PrimalContext::new(&a)?;

    let start = random_subset(&mut seeded(3), a.dim(), k);
    let one = ctx.greedy_search(k, r, &start, a.dim())?;
    println!("from {start:?}: {:.4} after {} swaps", one.objective, one.iterations);
    for (t, f) in one.trajectory.iter().enumerate() {
        println!("  f_bar[{t}] = {f:.6}");
    }

    let best = ctx.multistart(k, r, 400, 7, a.dim())?;
    println!("multistart(400): {:.4} on {:?}", best.objective, best.support);
    Ok(())
}
