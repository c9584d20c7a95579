//! Upper bounds from the top-diagonal block for several ratios m.
//!
//!     cargo run --release --example submatrix_bound

use std::time::Duration;

use rspca::instances::{generate_spiked_instance, SpikedSpec};
use rspca::primal::multistart;
use rspca::submatrix::submatrix_upper_bound;

fn main() -> rspca::Result<()> {
    let a = generate_spiked_instance(&SpikedSpec::new(200, 10, 3000, 2))?;
    let (k, r) = (10, 2);
    let lb = multistart(&a, k, r, 100, 0)?.objective;
    println!("lb = {lb:.4}");
    for m in [1.5, 2.0, 5.0] {
        let (ub, plan) = submatrix_upper_bound(&a, k, r, m, Duration::from_secs(5))?;
        let worst = plan.per_ktilde.iter().max_by(|x, y| x.total.total_cmp(&y.total)).unwrap();
        println!(
            "m = {m:>4}: |S| = {:>3}, ub = {ub:.4}, gap = {:.4}, binding kt = {}",
            plan.s.len(),
            (ub - lb) / lb,
            worst.ktilde
        );
    }
    Ok(())
}
