//! Compares the multistart search with exhaustive enumeration on small
//! random instances.
//!
//!     cargo run --release --example oracle_check

use rspca::instances::{generate_spiked_instance, SpikedSpec};
use rspca::oracle::brute_force_opt;
use rspca::primal::multistart;
use rspca::rng::NormalSampler;
use rspca::SymmetricMatrix;

fn main() -> rspca::Result<()> {
    let (k, r) = (3, 2);
    let mut hits = 0;
    for seed in 0..10u64 {
        let a = if seed % 2 == 0 {
            let g = NormalSampler::new(seed).matrix(10, 10);
            SymmetricMatrix::new(&g * g.transpose())?
        } else {
            generate_spiked_instance(&SpikedSpec::new(10, 4, 200, seed))?
        };
        let (opt, s) = brute_force_opt(&a, k, r)?;
        let lb = multistart(&a, k, r, 50, seed)?.objective;
        let hit = lb >= opt - 1e-6 * opt.max(1.0);
        hits += hit as usize;
        println!("seed {seed}: opt {opt:.5} on {s:?}, search {lb:.5} {}", if hit { "" } else { "(miss)" });
    }
    println!("{hits}/10 optimal");
    Ok(())
}
