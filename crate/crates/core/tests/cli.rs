use std::path::Path;
use std::process::{Command, Output};

use rspca::cli::{parse_gap_table, read_report, RunReport};
use rspca::instances::{save_matrix, MatrixFormat};
use rspca::rng::NormalSampler;
use rspca::SymmetricMatrix;

fn rspca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspca"))
        .args(args)
        .env("RSPCA_THREADS", "1")
        .output()
        .unwrap()
}

fn write_random(path: &Path, d: usize, seed: u64) {
    let g = NormalSampler::new(seed).matrix(d, d);
    let a = SymmetricMatrix::new(&g * g.transpose()).unwrap();
    save_matrix(&a, path, MatrixFormat::DenseCsv).unwrap();
}

fn report_from(out: &Output) -> RunReport {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_writes_dimension_first_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = ["generate", "--d", "100", "--ka", "10", "--m-samples", "3000", "--seed", "1", "--out"];
    let out = rspca(&[&args[..], &[a.to_str().unwrap()]].concat());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("trace"));
    assert!(stdout.contains("seed 1"));
    rspca(&[&args[..], &[b.to_str().unwrap()]].concat());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("100"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn generate_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let res = rspca(&["generate", "--d", "10", "--ka", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let res = rspca(&["generate", "--d", "ten", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn primal_bound_and_oracle_reports() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("tiny.csv");
    write_random(&inst, 8, 5);
    let p = inst.to_str().unwrap();

    let oracle = report_from(&rspca(&["oracle", "--input", p, "--k", "3", "--r", "2"]));
    assert_eq!(oracle.schema, 1);
    assert_eq!(oracle.instance, "tiny");
    assert_eq!(oracle.gap, Some(0.0));
    let opt = oracle.ub.unwrap();

    let primal = report_from(&rspca(&["primal", "--input", p, "--k", "3", "--r", "2", "--restarts", "20"]));
    assert!(primal.lb.unwrap() <= opt + 1e-9);
    assert!(primal.ub.is_none() && primal.gap.is_none());

    let bound = report_from(&rspca(&[
        "bound", "--input", p, "--k", "3", "--r", "2", "--restarts", "20", "--time-limit-s", "2",
    ]));
    let (lb, ub) = (bound.lb.unwrap(), bound.ub.unwrap());
    assert!(ub >= opt - 1e-6);
    assert_eq!(bound.gap.unwrap(), (ub - lb) / lb);
    assert!(bound.solver_stats["dual"]["nodes_explored"].as_u64().unwrap() >= 1);
}

#[test]
fn submatrix_report_skips_oversized_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("s.csv");
    let json = dir.path().join("s.json");
    write_random(&inst, 12, 8);
    let out = rspca(&[
        "submatrix", "--input", inst.to_str().unwrap(), "--k", "3", "--r", "2", "--ratios", "2,10",
        "--time-limit-s", "1", "--restarts", "10", "--out", json.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping ratio 10"));
    let rep = read_report(&json).unwrap();
    assert_eq!(rep.command, "submatrix");
    assert_eq!(rep.solver_stats["per_ratio"].as_array().unwrap().len(), 1);
}

#[test]
fn exit_codes_for_bad_parameters_and_guard() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("m.csv");
    write_random(&inst, 30, 1);
    let p = inst.to_str().unwrap();
    assert_eq!(rspca(&["bound", "--input", p, "--k", "2", "--r", "3"]).status.code(), Some(2));
    assert_eq!(rspca(&["primal", "--input", p, "--k", "31", "--r", "1"]).status.code(), Some(2));
    assert_eq!(rspca(&["oracle", "--input", p, "--k", "15", "--r", "2"]).status.code(), Some(3));
    assert_eq!(rspca(&["primal", "--input", "/nonexistent.csv", "--k", "2", "--r", "1"]).status.code(), Some(2));
    assert_eq!(rspca(&["bogus"]).status.code(), Some(2));
    assert_eq!(rspca(&["--help"]).status.code(), Some(0));
}

#[test]
fn matrix_market_input() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("d.mtx");
    save_matrix(&SymmetricMatrix::from_diagonal(&[4.0, 3.0, 2.0, 1.0]), &inst, MatrixFormat::MatrixMarket).unwrap();
    let rep = report_from(&rspca(&[
        "oracle", "--input", inst.to_str().unwrap(), "--format", "mm", "--k", "2", "--r", "2",
    ]));
    assert!((rep.lb.unwrap() - 7.0).abs() < 1e-12);
}

#[test]
fn report_round_trip_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for seed in 0..3u64 {
        let inst = dir.path().join(format!("inst{seed}.csv"));
        write_random(&inst, 8, seed);
        for (cmd, r) in [("oracle", "1"), ("oracle", "2")] {
            let json = dir.path().join(format!("inst{seed}_{cmd}_{r}.json"));
            let out = rspca(&[
                cmd, "--input", inst.to_str().unwrap(), "--k", "3", "--r", r, "--out", json.to_str().unwrap(),
            ]);
            assert!(out.status.success());
            files.push(json);
        }
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema\": 1}").unwrap();
    let csv_path = dir.path().join("table.csv");
    let mut args: Vec<&str> = vec!["report"];
    args.extend(files.iter().map(|f| f.to_str().unwrap()));
    args.push(bad.to_str().unwrap());
    args.extend(["--out", csv_path.to_str().unwrap()]);
    let out = rspca(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: skipping"));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().next().unwrap(), "instance,oracle r=1 k=3,oracle r=2 k=3");
    let rows = parse_gap_table(&csv).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.gap == Some(0.0)));

    let out = rspca(&["report", bad.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}
