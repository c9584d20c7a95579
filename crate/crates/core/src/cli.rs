//! Command-line front end. The binary is a thin wrapper around [`run`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dual::{baseline1, dual_bound, BnbOptions, DualOptions, DEFAULT_BREAKPOINTS, DEFAULT_JPLUS};
use crate::error::{invalid, Error, Result};
use crate::instances::{generate_spiked_instance, load_matrix, save_matrix, write_atomic, MatrixFormat, SpikedSpec};
use crate::linalg::SymmetricMatrix;
use crate::oracle::{binomial, brute_force_opt};
use crate::primal::{PrimalContext, PrimalSolution, DEFAULT_RESTARTS};
use crate::submatrix::{plan_size, submatrix_upper_bound_with};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const THREADS_ENV: &str = "RSPCA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rspca", version, about = "Row-sparse PCA solver and bound certifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a spiked covariance instance.
    Generate(GenerateArgs),
    /// Multistart greedy search for a feasible support.
    Primal(RunConfig),
    /// Branch-and-bound upper bound on the whole matrix.
    Bound(RunConfig),
    /// Upper bound from a principal sub-matrix, one per ratio.
    Submatrix(RunConfig),
    /// Exact optimum by enumeration (small instances only).
    Oracle(RunConfig),
    /// Collect JSON reports into a gap table.
    Report(ReportArgs),
}

fn parse_format(s: &str) -> Result<MatrixFormat> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub ka: usize,
    #[arg(long = "m-samples", default_value_t = 3000)]
    pub m_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dense-csv", value_parser = parse_format)]
    pub format: MatrixFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "dense-csv", value_parser = parse_format)]
    pub format: MatrixFormat,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long = "n-breakpoints", default_value_t = DEFAULT_BREAKPOINTS)]
    pub n_breakpoints: usize,
    /// Multistart restarts. For `bound` and `submatrix` these supply the
    /// lower bound; 0 skips it.
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Swap cap per restart, defaults to d.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// For `submatrix` the limit applies to each relaxation run.
    #[arg(long = "time-limit-s", default_value_t = 60.0)]
    pub time_limit_s: f64,
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,2.5,5,10")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    fn time_limit(&self) -> Result<Duration> {
        Duration::try_from_secs_f64(self.time_limit_s)
            .map_err(|_| invalid(format!("bad --time-limit-s {}", self.time_limit_s)))
    }

    fn check_dims(&self, d: usize) -> Result<()> {
        if self.r == 0 || self.r > self.k || self.k > d {
            return Err(invalid(format!(
                "need 1 <= r <= k <= d, got r={} k={} d={d}",
                self.r, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// JSON reports.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    pub instance: String,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub wallclock_s: f64,
    #[serde(default)]
    pub solver_stats: Value,
}

/// `(ub - lb) / lb`, only for a positive lower bound.
pub fn relative_gap(lb: Option<f64>, ub: Option<f64>) -> Option<f64> {
    match (lb, ub) {
        (Some(l), Some(u)) if l > 0.0 => Some((u - l) / l),
        _ => None,
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GuardExceeded { .. } => EXIT_GUARD,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{THREADS_ENV} must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Generate(args) => cmd_generate(args).map(|_| EXIT_OK),
        Command::Primal(c) => emit(c, cmd_primal(c)?),
        Command::Bound(c) => emit(c, cmd_bound(c)?),
        Command::Submatrix(c) => emit(c, cmd_submatrix(c)?),
        Command::Oracle(c) => emit(c, cmd_oracle(c)?),
        Command::Report(args) => cmd_report(args),
    }
}

fn emit(config: &RunConfig, report: RunReport) -> Result<i32> {
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    match &config.out {
        Some(path) => write_atomic(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<SymmetricMatrix> {
    let spec = SpikedSpec::new(args.d, args.ka, args.m_samples, args.seed);
    let a = generate_spiked_instance(&spec)?;
    save_matrix(&a, &args.out, args.format)?;
    println!("trace {:.12e}", a.trace());
    println!("seed {}", args.seed);
    Ok(a)
}

fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load(config: &RunConfig) -> Result<SymmetricMatrix> {
    let a = load_matrix(&config.input, config.format)?;
    config.check_dims(a.dim())?;
    Ok(a)
}

fn report(config: &RunConfig, command: &str, lb: Option<f64>, ub: Option<f64>, start: Instant, stats: Value) -> RunReport {
    RunReport {
        schema: SCHEMA_VERSION,
        command: command.to_string(),
        instance: instance_name(&config.input),
        k: config.k,
        r: config.r,
        seed: config.seed,
        lb,
        ub,
        gap: relative_gap(lb, ub),
        wallclock_s: start.elapsed().as_secs_f64(),
        solver_stats: stats,
    }
}

fn primal_stats(sol: &PrimalSolution, restarts: usize) -> Value {
    json!({
        "restarts": restarts,
        "support": sol.support,
        "objective": sol.objective,
        "swaps": sol.iterations,
    })
}

fn run_primal(config: &RunConfig, a: &SymmetricMatrix) -> Result<Option<PrimalSolution>> {
    if config.restarts == 0 {
        return Ok(None);
    }
    let ctx = PrimalContext::new(a)?;
    let max_iters = config.max_iters.unwrap_or(a.dim());
    ctx.multistart(config.k, config.r, config.restarts, config.seed, max_iters)
        .map(Some)
}

fn dual_options(config: &RunConfig, primal: Option<&PrimalSolution>) -> Result<DualOptions> {
    if config.n_breakpoints == 0 {
        return Err(invalid("--n-breakpoints must be at least 1"));
    }
    Ok(DualOptions {
        n_breakpoints: config.n_breakpoints,
        jplus: DEFAULT_JPLUS,
        bnb: BnbOptions {
            time_limit: config.time_limit()?,
            primal_bound: primal.map(|p| p.objective),
            ..BnbOptions::default()
        },
    })
}

pub fn cmd_primal(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    if config.restarts == 0 {
        return Err(invalid("--restarts must be at least 1"));
    }
    let a = load(config)?;
    let sol = run_primal(config, &a)?.expect("restarts checked above");
    let stats = primal_stats(&sol, config.restarts);
    Ok(report(config, "primal", Some(sol.objective), None, start, stats))
}

pub fn cmd_bound(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let a = load(config)?;
    let primal = run_primal(config, &a)?;
    let options = dual_options(config, primal.as_ref())?;
    let dual = dual_bound(&a, config.k, config.r, &options)?;
    let stats = json!({
        "dual": dual,
        "baseline1": baseline1(&a, config.k)?,
        "primal": primal.as_ref().map(|p| primal_stats(p, config.restarts)),
    });
    let lb = primal.map(|p| p.objective);
    Ok(report(config, "bound", lb, Some(dual.upper_bound), start, stats))
}

pub fn cmd_submatrix(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let a = load(config)?;
    let d = a.dim();
    let mut ratios = Vec::new();
    for &m in &config.ratios {
        match plan_size(d, config.k, m) {
            Ok(_) => ratios.push(m),
            Err(e) => eprintln!("warning: skipping ratio {m}: {e}"),
        }
    }
    if ratios.is_empty() {
        return Err(invalid("no usable --ratios for this instance"));
    }
    let primal = run_primal(config, &a)?;
    let options = dual_options(config, None)?;
    let mut per_ratio = Vec::with_capacity(ratios.len());
    let mut best = f64::INFINITY;
    for m in ratios {
        let (bound, plan) = submatrix_upper_bound_with(&a, config.k, config.r, m, &options)?;
        best = best.min(bound);
        per_ratio.push(json!({ "m": m, "bound": bound, "plan": plan }));
    }
    let stats = json!({
        "per_ratio": per_ratio,
        "primal": primal.as_ref().map(|p| primal_stats(p, config.restarts)),
    });
    let lb = primal.map(|p| p.objective);
    Ok(report(config, "submatrix", lb, Some(best), start, stats))
}

pub fn cmd_oracle(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let a = load(config)?;
    let (opt, support) = brute_force_opt(&a, config.k, config.r)?;
    let stats = json!({
        "support": support,
        "supports_enumerated": binomial(a.dim(), config.k) as u64,
    });
    Ok(report(config, "oracle", Some(opt), Some(opt), start, stats))
}

/// One cell of the gap table.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub instance: String,
    pub method: String,
    pub r: usize,
    pub k: usize,
    pub gap: Option<f64>,
}

impl From<&RunReport> for GapRow {
    fn from(rep: &RunReport) -> Self {
        Self {
            instance: rep.instance.clone(),
            method: rep.command.clone(),
            r: rep.r,
            k: rep.k,
            gap: rep.gap,
        }
    }
}

fn column_name(method: &str, r: usize, k: usize) -> String {
    format!("{method} r={r} k={k}")
}

fn parse_column(name: &str) -> Option<(String, usize, usize)> {
    let mut parts = name.rsplitn(3, ' ');
    let k = parts.next()?.strip_prefix("k=")?.parse().ok()?;
    let r = parts.next()?.strip_prefix("r=")?.parse().ok()?;
    let method = parts.next()?.to_string();
    Some((method, r, k))
}

/// Pivots rows into one line per instance. Columns come in one block per
/// method (first-seen order), sorted by `(r, k)` inside a block. Repeated
/// cells keep the smallest gap.
pub fn gap_table_csv(rows: &[GapRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut instances: Vec<&str> = Vec::new();
    let mut pairs: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    let mut cells: BTreeMap<(&str, &str, usize, usize), Option<f64>> = BTreeMap::new();
    for row in rows {
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
        if !instances.contains(&row.instance.as_str()) {
            instances.push(&row.instance);
        }
        let p = pairs.entry(&row.method).or_default();
        if !p.contains(&(row.r, row.k)) {
            p.push((row.r, row.k));
        }
        let cell = cells
            .entry((row.instance.as_str(), row.method.as_str(), row.r, row.k))
            .or_insert(row.gap);
        *cell = match (*cell, row.gap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    let mut columns = Vec::new();
    for m in &methods {
        let p = pairs.get_mut(m).unwrap();
        p.sort_unstable();
        columns.extend(p.iter().map(|&(r, k)| (*m, r, k)));
    }
    let mut out = String::from("instance");
    for &(m, r, k) in &columns {
        out.push(',');
        out.push_str(&column_name(m, r, k));
    }
    out.push('\n');
    for inst in instances {
        out.push_str(inst);
        for &(m, r, k) in &columns {
            out.push(',');
            if let Some(Some(g)) = cells.get(&(inst, m, r, k)) {
                out.push_str(&g.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`gap_table_csv`] up to row order; empty cells are dropped.
pub fn parse_gap_table(text: &str) -> Result<Vec<GapRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| invalid("empty gap table"))?;
    let mut head = header.split(',');
    if head.next() != Some("instance") {
        return Err(invalid("gap table must start with an 'instance' column"));
    }
    let columns: Vec<(String, usize, usize)> = head
        .map(|h| parse_column(h).ok_or_else(|| invalid(format!("bad column '{h}'"))))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() + 1 {
            return Err(Error::Parse {
                line: n + 2,
                message: format!("expected {} fields, found {}", columns.len() + 1, fields.len()),
            });
        }
        for ((method, r, k), cell) in columns.iter().zip(&fields[1..]) {
            if cell.is_empty() {
                continue;
            }
            let gap = cell.parse().map_err(|_| Error::Parse {
                line: n + 2,
                message: format!("bad gap '{cell}'"),
            })?;
            rows.push(GapRow {
                instance: fields[0].to_string(),
                method: method.clone(),
                r: *r,
                k: *k,
                gap: Some(gap),
            });
        }
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path)?;
    let rep: RunReport =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if rep.schema != SCHEMA_VERSION {
        return Err(invalid(format!("{}: unsupported schema {}", path.display(), rep.schema)));
    }
    Ok(rep)
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let mut rows = Vec::new();
    for path in &args.reports {
        match read_report(path) {
            Ok(rep) => rows.push(GapRow::from(&rep)),
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        eprintln!("error: no readable reports");
        return Ok(EXIT_USAGE);
    }
    let csv = gap_table_csv(&rows);
    match &args.out {
        Some(path) => write_atomic(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(instance: &str, method: &str, r: usize, k: usize, gap: f64) -> GapRow {
        GapRow {
            instance: instance.into(),
            method: method.into(),
            r,
            k,
            gap: Some(gap),
        }
    }

    #[test]
    fn gap_formula() {
        assert!((relative_gap(Some(2.0), Some(2.2)).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(relative_gap(Some(3.0), Some(3.0)), Some(0.0));
        assert_eq!(relative_gap(Some(3.0), None), None);
        assert_eq!(relative_gap(Some(0.0), Some(1.0)), None);
    }

    #[test]
    fn one_report_one_row() {
        let csv = gap_table_csv(&[row("a", "bound", 2, 10, 0.031)]);
        assert_eq!(csv, "instance,bound r=2 k=10\na,0.031\n");
    }

    #[test]
    fn method_blocks() {
        let rows = vec![
            row("a", "bound", 3, 10, 0.2),
            row("a", "submatrix", 2, 10, 0.5),
            row("b", "bound", 2, 10, 0.1),
            row("b", "bound", 2, 10, 0.05),
        ];
        let csv = gap_table_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance,bound r=2 k=10,bound r=3 k=10,submatrix r=2 k=10"
        );
        assert_eq!(lines.next().unwrap(), "a,,0.2,0.5");
        assert_eq!(lines.next().unwrap(), "b,0.05,,");
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![
            row("x1", "bound", 2, 10, 0.1234567890123),
            row("x2", "bound", 2, 10, 1.0 / 3.0),
            row("x1", "oracle", 1, 3, 0.0),
        ];
        let mut back = parse_gap_table(&gap_table_csv(&rows)).unwrap();
        let mut want = rows.clone();
        let key = |g: &GapRow| (g.instance.clone(), g.method.clone(), g.r, g.k);
        back.sort_by_key(key);
        want.sort_by_key(key);
        assert_eq!(back, want);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::GuardExceeded { count: 10, limit: 1 }), EXIT_GUARD);
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&invalid("x")), EXIT_USAGE);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "rspca", "submatrix", "--input", "a.mtx", "--format", "mm", "--k", "10", "--r", "2", "--ratios", "2,5",
        ])
        .unwrap();
        match cli.command {
            Command::Submatrix(c) => {
                assert_eq!(c.format, MatrixFormat::MatrixMarket);
                assert_eq!(c.ratios, vec![2.0, 5.0]);
                assert_eq!(c.restarts, 400);
                assert_eq!(c.n_breakpoints, 40);
                assert_eq!(c.time_limit_s, 60.0);
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["rspca", "bound", "--input", "a.csv", "--k", "3", "--r", "2"]).unwrap();
        match cli.command {
            Command::Bound(c) => assert_eq!(c.ratios, vec![1.5, 2.0, 2.5, 5.0, 10.0]),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["rspca", "bound", "--k", "3"]).is_err());
    }
}
