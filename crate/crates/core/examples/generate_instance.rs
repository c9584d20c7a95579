//! Draws a spiked covariance instance and writes it in both file formats.
//!
//!     cargo run --release --example generate_instance -- 100 10 3000 1

use rspca::instances::{generate_spiked_instance, load_matrix, save_matrix, MatrixFormat, SpikedSpec};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> rspca::Result<()> {
    let spec = SpikedSpec::new(arg(1, 100) as usize, arg(2, 10) as usize, arg(3, 3000) as usize, arg(4, 1));
    let a = generate_spiked_instance(&spec)?;
    println!("d = {}, trace = {:.6}", a.dim(), a.trace());

    let dir = std::env::temp_dir();
    let csv = dir.join("rspca_example.csv");
    let mm = dir.join("rspca_example.mtx");
    save_matrix(&a, &csv, MatrixFormat::DenseCsv)?;
    save_matrix(&a, &mm, MatrixFormat::MatrixMarket)?;
    let back = load_matrix(&mm, MatrixFormat::MatrixMarket)?;
    let diff = (back.as_matrix() - a.as_matrix()).abs().max();
    println!("wrote {} and {}", csv.display(), mm.display());
    println!("max round-trip error {diff:e}");
    Ok(())
}
