//! Drives the command-line interface: two instances, bound runs, and the
//! gap table built from their JSON reports.
//!
//!     cargo run --release --example gap_report

use rspca::cli::run;

fn main() {
    let dir = std::env::temp_dir().join("rspca_gap_report");
    std::fs::create_dir_all(&dir).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let mut reports = Vec::new();
    for seed in [1, 2] {
        let inst = p(&format!("artificial{seed}.csv"));
        let code = run(["rspca", "generate", "--d", "60", "--ka", "10", "--m-samples", "3000"]
            .into_iter()
            .map(String::from)
            .chain(["--seed".into(), seed.to_string(), "--out".into(), inst.clone()]));
        assert_eq!(code, 0);
        for r in ["2", "3"] {
            let out = p(&format!("artificial{seed}_r{r}.json"));
            let args = ["rspca", "bound", "--input", &inst, "--k", "10", "--r", r, "--restarts", "100"];
            let code = run(args.into_iter().chain(["--time-limit-s", "3", "--out", &out]));
            assert_eq!(code, 0);
            reports.push(out);
        }
    }
    let code = run(["rspca", "report"].into_iter().chain(reports.iter().map(String::as_str)));
    std::process::exit(code);
}
