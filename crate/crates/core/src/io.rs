//! File formats: CSV for matrices, edges, coordinates, signals, samples and
//! coefficient tables; JSON for distribution, kernel and base-map specs.
//!
//! Reals are written with Rust's shortest round-trip formatting, so a write
//! followed by a read reproduces every value bit for bit. All writes go
//! through a temporary file in the target directory and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::base_change::BaseMap;
use crate::ensemble::{DensitySpec, DistributionSpec, IntervalFamily, QuadratureRule};
use crate::error::{Error, Result};
use crate::filters::{BandSpec, FilterKernel};
use crate::operator::{Edge, EdgeList, Signal, SymOperator};
use crate::transform::SpectralCoefficients;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn name_of(path: &Path) -> String {
    path.display().to_string()
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Writes `bytes` to `path` via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn fmt_real(x: f64) -> String {
    format!("{x}")
}

fn join_reals(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(fmt_real).collect::<Vec<_>>().join(",")
}

fn parse_real(s: &str, source: &str, line: u64) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .map_err(|_| Error::parse(source, Some(line), format!("not a number: {t:?}")))
}

fn parse_index(s: &str, source: &str, line: u64) -> Result<usize> {
    let t = s.trim();
    t.parse::<usize>()
        .map_err(|_| Error::parse(source, Some(line), format!("not a vertex index: {t:?}")))
}

/// Records of a CSV text with their 1-based line numbers. The header, when
/// requested, is returned separately.
fn csv_records(text: &str, source: &str, header: bool) -> Result<(Option<Vec<String>>, Vec<(u64, Vec<String>)>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let head = if header {
        let h = rdr
            .headers()
            .map_err(|e| Error::parse(source, Some(1), e.to_string()))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            Error::parse(source, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((head, rows))
}

// ---- matrices ----

pub fn parse_matrix_csv(text: &str, source: &str) -> Result<DMatrix<f64>> {
    let (_, rows) = csv_records(text, source, false)?;
    if rows.is_empty() {
        return Err(Error::parse(source, None, "empty matrix"));
    }
    let cols = rows[0].1.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, rec) in &rows {
        if rec.len() != cols {
            return Err(Error::parse(
                source,
                Some(*line),
                format!("expected {cols} entries, found {}", rec.len()),
            ));
        }
        for f in rec {
            data.push(parse_real(f, source, *line)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        out.push_str(&join_reals(m.row(r).iter().copied()));
        out.push('\n');
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&read_text(path)?, &name_of(path))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, format_matrix_csv(m).as_bytes())
}

/// Reads a matrix CSV as a symmetric PSD operator labelled by its file name.
pub fn read_operator(path: &Path) -> Result<SymOperator> {
    let m = read_matrix(path)?;
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!(
            "{} is {}x{}, operators must be square",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    let label = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SymOperator::with_label(m, label)
}

// ---- edges and coordinates ----

pub fn parse_edges_csv(text: &str, source: &str) -> Result<EdgeList> {
    let (head, rows) = csv_records(text, source, true)?;
    let head = head.unwrap_or_default();
    if head != ["u", "v", "w"] {
        return Err(Error::parse(source, Some(1), format!("expected header u,v,w, found {}", head.join(","))));
    }
    let mut edges = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != 3 {
            return Err(Error::parse(source, Some(line), "edge rows need 3 fields"));
        }
        edges.push(Edge {
            u: parse_index(&rec[0], source, line)?,
            v: parse_index(&rec[1], source, line)?,
            w: parse_real(&rec[2], source, line)?,
        });
    }
    Ok(EdgeList::new(edges))
}

pub fn format_edges_csv(edges: &EdgeList) -> String {
    let mut out = String::from("u,v,w\n");
    for e in &edges.edges {
        out.push_str(&format!("{},{},{}\n", e.u, e.v, fmt_real(e.w)));
    }
    out
}

pub fn read_edges(path: &Path) -> Result<EdgeList> {
    parse_edges_csv(&read_text(path)?, &name_of(path))
}

pub fn write_edges(path: &Path, edges: &EdgeList) -> Result<()> {
    write_atomic(path, format_edges_csv(edges).as_bytes())
}

/// Point coordinates with their ids, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinates {
    pub ids: Vec<String>,
    pub points: Vec<Vec<f64>>,
}

pub fn parse_coords_csv(text: &str, source: &str) -> Result<Coordinates> {
    let (head, rows) = csv_records(text, source, true)?;
    let head = head.unwrap_or_default();
    let d = head.len().saturating_sub(1);
    let ok = head.first().map(String::as_str) == Some("id")
        && d > 0
        && head[1..].iter().enumerate().all(|(i, h)| *h == format!("x{}", i + 1));
    if !ok {
        return Err(Error::parse(source, Some(1), "expected header id,x1,...,xd"));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut points = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != d + 1 {
            return Err(Error::parse(source, Some(line), format!("expected {} fields", d + 1)));
        }
        ids.push(rec[0].clone());
        points.push(rec[1..].iter().map(|f| parse_real(f, source, line)).collect::<Result<_>>()?);
    }
    Ok(Coordinates { ids, points })
}

pub fn format_coords_csv(c: &Coordinates) -> String {
    let d = c.points.first().map_or(0, Vec::len);
    let mut out = String::from("id");
    for i in 1..=d {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (id, p) in c.ids.iter().zip(&c.points) {
        out.push_str(&format!("{id},{}\n", join_reals(p.iter().copied())));
    }
    out
}

pub fn read_coords(path: &Path) -> Result<Coordinates> {
    parse_coords_csv(&read_text(path)?, &name_of(path))
}

pub fn write_coords(path: &Path, c: &Coordinates) -> Result<()> {
    write_atomic(path, format_coords_csv(c).as_bytes())
}

// ---- signals ----

/// Vertex labels and one signal per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub labels: Vec<String>,
    pub signals: Vec<Signal>,
}

impl SignalTable {
    pub fn unlabelled(signals: Vec<Signal>) -> Result<Self> {
        let n = signals.first().map_or(0, Signal::len);
        if signals.iter().any(|s| s.len() != n) {
            return Err(Error::dim("signals differ in length"));
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            signals,
        })
    }
}

pub fn parse_signals_csv(text: &str, source: &str) -> Result<SignalTable> {
    let (head, rows) = csv_records(text, source, true)?;
    let labels = head.unwrap_or_default();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(Error::parse(source, Some(1), "missing vertex-label header"));
    }
    let mut signals = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if rec.len() != labels.len() {
            return Err(Error::parse(
                source,
                Some(line),
                format!("expected {} values, found {}", labels.len(), rec.len()),
            ));
        }
        let vals = rec.iter().map(|f| parse_real(f, source, line)).collect::<Result<Vec<_>>>()?;
        signals.push(Signal::new(vals).map_err(|e| Error::parse(source, Some(line), e.to_string()))?);
    }
    Ok(SignalTable { labels, signals })
}

pub fn format_signals_csv(t: &SignalTable) -> String {
    let mut out = t.labels.join(",");
    out.push('\n');
    for s in &t.signals {
        out.push_str(&join_reals(s.values().iter().copied()));
        out.push('\n');
    }
    out
}

pub fn read_signals(path: &Path) -> Result<SignalTable> {
    parse_signals_csv(&read_text(path)?, &name_of(path))
}

pub fn write_signals(path: &Path, t: &SignalTable) -> Result<()> {
    write_atomic(path, format_signals_csv(t).as_bytes())
}

/// Station-major table `station,value_1,...,value_T` (one row per vertex,
/// one column per observation), transposed into one signal per observation.
pub fn parse_station_csv(text: &str, source: &str) -> Result<SignalTable> {
    let (_, rows) = csv_records(text, source, true)?;
    if rows.is_empty() {
        return Err(Error::parse(source, None, "no stations"));
    }
    let t = rows[0].1.len() - 1;
    let mut labels = Vec::with_capacity(rows.len());
    let mut cols = vec![Vec::with_capacity(rows.len()); t];
    for (line, rec) in rows {
        if rec.len() != t + 1 {
            return Err(Error::parse(source, Some(line), format!("expected {} fields", t + 1)));
        }
        labels.push(rec[0].clone());
        for (k, f) in rec[1..].iter().enumerate() {
            cols[k].push(parse_real(f, source, line)?);
        }
    }
    let signals = cols.into_iter().map(Signal::new).collect::<Result<_>>()?;
    Ok(SignalTable { labels, signals })
}

// ---- samples ----

pub fn parse_samples_csv(text: &str, source: &str) -> Result<BTreeMap<usize, f64>> {
    let (head, rows) = csv_records(text, source, true)?;
    if head.unwrap_or_default() != ["vertex", "value"] {
        return Err(Error::parse(source, Some(1), "expected header vertex,value"));
    }
    let mut out = BTreeMap::new();
    for (line, rec) in rows {
        if rec.len() != 2 {
            return Err(Error::parse(source, Some(line), "sample rows need 2 fields"));
        }
        let v = parse_index(&rec[0], source, line)?;
        if out.insert(v, parse_real(&rec[1], source, line)?).is_some() {
            return Err(Error::parse(source, Some(line), format!("vertex {v} sampled twice")));
        }
    }
    Ok(out)
}

pub fn format_samples_csv(samples: &BTreeMap<usize, f64>) -> String {
    let mut out = String::from("vertex,value\n");
    for (v, x) in samples {
        out.push_str(&format!("{v},{}\n", fmt_real(*x)));
    }
    out
}

// ---- spectral coefficients ----

/// `fiber_param,weight,c_1..c_n`; `fiber_param` is empty for fibers without
/// a family parameter. With `magnitude` the absolute values are written.
pub fn format_coefficients_csv(c: &SpectralCoefficients<'_>, magnitude: bool) -> String {
    let ens = c.ensemble();
    let n = ens.dim();
    let mut out = String::from("fiber_param,weight");
    for i in 1..=n {
        out.push_str(&format!(",c_{i}"));
    }
    out.push('\n');
    for (q, fiber) in ens.fibers().iter().enumerate() {
        let param = fiber.param.map(fmt_real).unwrap_or_default();
        let row = c.table().row(q);
        let vals = row.iter().map(|&x| if magnitude { x.abs() } else { x });
        out.push_str(&format!("{param},{},{}\n", fmt_real(fiber.weight), join_reals(vals)));
    }
    out
}

/// Coefficient table body (without params and weights) of a coefficients CSV.
pub fn parse_coefficients_csv(text: &str, source: &str) -> Result<DMatrix<f64>> {
    let (head, rows) = csv_records(text, source, true)?;
    let head = head.unwrap_or_default();
    if head.len() < 3 || head[0] != "fiber_param" || head[1] != "weight" {
        return Err(Error::parse(source, Some(1), "expected header fiber_param,weight,c_1,..."));
    }
    let n = head.len() - 2;
    let mut data = Vec::with_capacity(rows.len() * n);
    for (line, rec) in &rows {
        if rec.len() != n + 2 {
            return Err(Error::parse(source, Some(*line), format!("expected {} fields", n + 2)));
        }
        for f in &rec[2..] {
            data.push(parse_real(f, source, *line)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), n, &data))
}

// ---- JSON specs ----

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(source, Some(e.line() as u64), e.to_string()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("spec types serialize");
    s.push('\n');
    s
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpecFile {
    Delta {
        operator: String,
    },
    Discrete {
        operators: Vec<String>,
        weights: Vec<f64>,
    },
    IntervalFamily {
        #[serde(rename = "L1")]
        l1: String,
        #[serde(rename = "L2")]
        l2: String,
        #[serde(default = "uniform_density")]
        density: DensitySpec,
        #[serde(default)]
        quadrature: QuadratureRule,
    },
}

fn uniform_density() -> DensitySpec {
    DensitySpec::Uniform
}

impl DistributionSpecFile {
    /// Loads the referenced matrices, resolving relative paths against `base`.
    pub fn load(&self, base: &Path) -> Result<DistributionSpec> {
        let op = |rel: &str| read_operator(&resolve(base, rel)).map(Arc::new);
        Ok(match self {
            DistributionSpecFile::Delta { operator } => DistributionSpec::Delta(op(operator)?),
            DistributionSpecFile::Discrete { operators, weights } => DistributionSpec::Discrete {
                operators: operators.iter().map(|o| op(o)).collect::<Result<_>>()?,
                weights: weights.clone(),
            },
            DistributionSpecFile::IntervalFamily {
                l1,
                l2,
                density,
                quadrature,
            } => DistributionSpec::IntervalFamily(Arc::new(IntervalFamily::new(
                op(l1)?,
                op(l2)?,
                density.clone(),
                *quadrature,
            )?)),
        })
    }
}

pub fn read_distribution_spec(path: &Path) -> Result<DistributionSpec> {
    let file: DistributionSpecFile = parse_json(&read_text(path)?, &name_of(path))?;
    file.load(&base_dir(path))
}

/// Writes `spec` as JSON at `path`, with its operator matrices as CSV files
/// next to it named `<stem>_<k>.csv` (or `<stem>_L1.csv`, `<stem>_L2.csv`).
pub fn write_distribution_spec(path: &Path, spec: &DistributionSpec) -> Result<()> {
    let dir = base_dir(path);
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spec".into());
    let put = |suffix: &str, op: &SymOperator| -> Result<String> {
        let name = format!("{stem}_{suffix}.csv");
        write_matrix(&dir.join(&name), op.matrix())?;
        Ok(name)
    };
    let file = match spec {
        DistributionSpec::Delta(op) => DistributionSpecFile::Delta { operator: put("0", op)? },
        DistributionSpec::Discrete { operators, weights } => DistributionSpecFile::Discrete {
            operators: operators
                .iter()
                .enumerate()
                .map(|(k, op)| put(&k.to_string(), op))
                .collect::<Result<_>>()?,
            weights: weights.clone(),
        },
        DistributionSpec::IntervalFamily(fam) => DistributionSpecFile::IntervalFamily {
            l1: put("L1", fam.l1())?,
            l2: put("L2", fam.l2())?,
            density: fam.density().clone(),
            quadrature: fam.quadrature(),
        },
    };
    write_atomic(path, to_json(&file).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFile {
    Band {
        bottom: usize,
    },
    Table {
        csv: String,
    },
    Lambda {
        #[serde(default = "one")]
        power: u32,
    },
    Allpass,
}

fn one() -> u32 {
    1
}

impl KernelFile {
    pub fn load(&self, base: &Path) -> Result<FilterKernel> {
        Ok(match self {
            KernelFile::Band { bottom } => FilterKernel::Band(BandSpec::Bottom(*bottom)),
            KernelFile::Table { csv } => FilterKernel::Table(read_matrix(&resolve(base, csv))?),
            KernelFile::Lambda { power } => FilterKernel::Lambda { power: *power },
            KernelFile::Allpass => FilterKernel::AllPass,
        })
    }
}

pub fn read_kernel(path: &Path) -> Result<FilterKernel> {
    let file: KernelFile = parse_json(&read_text(path)?, &name_of(path))?;
    file.load(&base_dir(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseMapFile {
    Identity,
    Stretch { eta: f64 },
    Coarsening { breakpoints: Vec<f64>, reps: Vec<f64> },
    Discrete { map: Vec<usize> },
}

impl BaseMapFile {
    pub fn load(&self) -> Result<BaseMap> {
        match self {
            BaseMapFile::Identity => Ok(BaseMap::Identity),
            BaseMapFile::Stretch { eta } => BaseMap::stretch(*eta),
            BaseMapFile::Coarsening { breakpoints, reps } => BaseMap::coarsening(breakpoints.clone(), reps.clone()),
            BaseMapFile::Discrete { map } => Ok(BaseMap::Discrete { map: map.clone() }),
        }
    }
}

pub fn parse_base_map_json(text: &str, source: &str) -> Result<BaseMap> {
    parse_json::<BaseMapFile>(text, source)?.load()
}

pub fn read_base_map(path: &Path) -> Result<BaseMap> {
    parse_base_map_json(&read_text(path)?, &name_of(path))
}

pub fn parse_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    parse_json(&read_text(path)?, &name_of(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value).as_bytes())
}
