//! Problem instances: the block spiked-covariance generator, sample
//! covariance, file ingestion and top-diagonal sub-instances.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{psd_sqrt, SymmetricMatrix};
use crate::rng::NormalSampler;

/// Maximum allowed `|A[i][j] - A[j][i]|` in a dense CSV file.
pub const CSV_ASYMMETRY_TOL: f64 = 1e-9;

/// Parameters of an Artificial-`kA` instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedSpec {
    pub d: usize,
    /// Planted sparsity. Must be even so the alternating spike is exactly
    /// orthogonal to the flat one.
    pub ka: usize,
    pub samples: usize,
    pub seed: u64,
    pub spike_values: [f64; 3],
}

impl SpikedSpec {
    pub const DEFAULT_SPIKES: [f64; 3] = [55.0, 52.0, 50.0];

    pub fn new(d: usize, ka: usize, samples: usize, seed: u64) -> Self {
        Self {
            d,
            ka,
            samples,
            seed,
            spike_values: Self::DEFAULT_SPIKES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ka == 0 || 2 * self.ka > self.d {
            return Err(invalid(format!(
                "need 1 <= kA and 2*kA <= d, got kA={} d={}",
                self.ka, self.d
            )));
        }
        if !self.ka.is_multiple_of(2) {
            return Err(invalid(format!(
                "kA must be even so that u1 and u2 are orthogonal, got {}",
                self.ka
            )));
        }
        if self.samples == 0 {
            return Err(invalid("sample count M must be at least 1"));
        }
        if self.spike_values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("spike values must be positive and finite"));
        }
        Ok(())
    }
}

/// `d x M` matrix whose columns are zero-mean samples.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(invalid("sample matrix needs at least one row and one column"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(invalid("sample matrix has non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Population covariance `Sigma_1 (+) Sigma_2 (+) I`, where
/// `Sigma_1 = s1 u1 u1^T + s2 u2 u2^T`, `Sigma_2 = s3 I` and
/// `u1 = 1/sqrt(kA)`, `u2 = (+1, -1, ...)/sqrt(kA)`.
pub fn population_spiked(spec: &SpikedSpec) -> Result<SymmetricMatrix> {
    spec.validate()?;
    let SpikedSpec { d, ka, .. } = *spec;
    let [s1, s2, s3] = spec.spike_values;
    let inv = 1.0 / ka as f64;
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for i in 0..ka {
        for j in 0..ka {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sigma[(i, j)] = s1 * inv + s2 * sign * inv;
        }
    }
    for i in ka..2 * ka {
        sigma[(i, i)] = s3;
    }
    for i in 2 * ka..d {
        sigma[(i, i)] = 1.0;
    }
    SymmetricMatrix::new(sigma)
}

/// `A = (1/M) X X^T`.
pub fn sample_covariance(x: &SampleMatrix) -> Result<SymmetricMatrix> {
    let m = x.samples() as f64;
    let xm = x.as_matrix();
    SymmetricMatrix::new(xm * xm.transpose() / m)
}

/// Draws `M` samples `x = Sigma^{1/2} z` with `z ~ N(0, I)` (Box–Muller on a
/// ChaCha8 stream seeded by `spec.seed`) and returns their sample covariance.
pub fn generate_spiked_instance(spec: &SpikedSpec) -> Result<SymmetricMatrix> {
    let sigma = population_spiked(spec)?;
    let root = psd_sqrt(&sigma)?;
    let mut normal = NormalSampler::new(spec.seed);
    let z = normal.matrix(spec.d, spec.samples);
    let x = SampleMatrix::new(root.as_matrix() * z)?;
    sample_covariance(&x)
}

/// Supported on-disk matrix formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Line 1 holds `d`; lines 2..=d+1 hold the rows, comma separated.
    DenseCsv,
    /// `%%MatrixMarket matrix coordinate real symmetric`.
    MatrixMarket,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-csv" | "csv" => Ok(Self::DenseCsv),
            "matrix-market-sym" | "mm" | "matrix-market" => Ok(Self::MatrixMarket),
            other => Err(invalid(format!("unknown matrix format '{other}'"))),
        }
    }
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<SymmetricMatrix> {
    let text = fs::read_to_string(path)?;
    match format {
        MatrixFormat::DenseCsv => parse_dense_csv(&text),
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_dense_csv(text: &str) -> Result<SymmetricMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first_no, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let d: usize = first
        .parse()
        .map_err(|_| parse_err(first_no, format!("expected dimension, found '{first}'")))?;
    if d == 0 {
        return Err(parse_err(first_no, "dimension must be positive"));
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for row in 0..d {
        let (no, line) = lines
            .next()
            .ok_or_else(|| parse_err(first_no + row + 1, format!("missing row {}", row + 1)))?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d {
            return Err(parse_err(
                no,
                format!("expected {d} values, found {}", fields.len()),
            ));
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(no, format!("bad number '{f}'")))?;
            if !v.is_finite() {
                return Err(parse_err(no, format!("non-finite value '{f}'")));
            }
            m[(row, col)] = v;
        }
    }
    if let Some((no, _)) = lines.next() {
        return Err(parse_err(no, "trailing content after the last row"));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if (m[(i, j)] - m[(j, i)]).abs() > CSV_ASYMMETRY_TOL {
                return Err(invalid(format!(
                    "matrix is not symmetric at ({}, {}): {} vs {}",
                    i + 1,
                    j + 1,
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    SymmetricMatrix::new(m)
}

pub fn parse_matrix_market(text: &str) -> Result<SymmetricMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing '%%MatrixMarket matrix' header"));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" || tokens[4] != "symmetric" {
        return Err(parse_err(
            1,
            "only 'coordinate real symmetric' matrices are supported",
        ));
    }
    let mut data_lines = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_no, size_line) = data_lines
        .next()
        .ok_or_else(|| parse_err(2, "missing size line"))?;
    let size: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(size_no, "size line must hold three integers"))?;
    if size.len() != 3 {
        return Err(parse_err(size_no, "size line must hold three integers"));
    }
    let (rows, cols, nnz) = (size[0], size[1], size[2]);
    if rows != cols || rows == 0 {
        return Err(parse_err(size_no, "symmetric matrix must be square and non-empty"));
    }
    let mut m = DMatrix::<f64>::zeros(rows, rows);
    let mut seen = 0;
    for (no, line) in data_lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(no, "entry must be 'row col value'"));
        }
        let i: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(no, format!("bad row index '{}'", parts[0])))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|_| parse_err(no, format!("bad column index '{}'", parts[1])))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| parse_err(no, format!("bad value '{}'", parts[2])))?;
        if i == 0 || j == 0 || i > rows || j > rows {
            return Err(parse_err(no, format!("index ({i}, {j}) out of range")));
        }
        if !v.is_finite() {
            return Err(parse_err(no, "non-finite value"));
        }
        m[(i - 1, j - 1)] = v;
        m[(j - 1, i - 1)] = v;
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(
            size_no,
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    SymmetricMatrix::new(m)
}

/// Dense CSV rendering with 17 significant digits, which round-trips every
/// `f64` exactly.
pub fn to_dense_csv(a: &SymmetricMatrix) -> String {
    let d = a.dim();
    let mut out = String::with_capacity(d * d * 24 + 8);
    out.push_str(&d.to_string());
    out.push('\n');
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format!("{:.16e}", a.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Lower-triangle coordinate rendering.
pub fn to_matrix_market(a: &SymmetricMatrix) -> String {
    let d = a.dim();
    let mut entries = Vec::new();
    for j in 0..d {
        for i in j..d {
            let v = a.get(i, j);
            if v != 0.0 {
                entries.push(format!("{} {} {:.16e}", i + 1, j + 1, v));
            }
        }
    }
    format!(
        "%%MatrixMarket matrix coordinate real symmetric\n{d} {d} {}\n{}\n",
        entries.len(),
        entries.join("\n")
    )
}

/// Writes through a temporary file in the same directory and renames it into
/// place.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_matrix(
    a: &SymmetricMatrix,
    path: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<()> {
    let text = match format {
        MatrixFormat::DenseCsv => to_dense_csv(a),
        MatrixFormat::MatrixMarket => to_matrix_market(a),
    };
    write_atomic(path, &text)
}

/// Indices of the `n` largest diagonal entries (ties go to the smaller
/// index), returned in ascending order together with `A_{S,S}`.
pub fn top_diagonal_subinstance(
    a: &SymmetricMatrix,
    n: usize,
) -> Result<(Vec<usize>, SymmetricMatrix)> {
    let d = a.dim();
    if n == 0 || n > d {
        return Err(invalid(format!("need 1 <= n <= d, got n={n} d={d}")));
    }
    let s = top_diagonal_indices(&a.diagonal(), n);
    let sub = a.principal(&s)?;
    Ok((s, sub))
}

/// Positions of the `n` largest values, ties to the smaller index, sorted
/// ascending.
pub(crate) fn top_diagonal_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap().then(i.cmp(&j)));
    let mut s: Vec<usize> = order.into_iter().take(n).collect();
    s.sort_unstable();
    s
}
