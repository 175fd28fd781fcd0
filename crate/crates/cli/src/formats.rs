//! CSV and JSON artifacts.
//!
//! Numeric cells are written with the shortest representation that parses
//! back to the same `f64`, so every write/read cycle is bit-exact. Class
//! indices are 0-based.
//!
//! | file | header |
//! |------|--------|
//! | `probs.csv`, `probs_t{t}.csv` | `c0,...,c{C-1}` |
//! | `features.csv` | `f0,...,f{d-1}` |
//! | `labels.csv`, `predicted.csv` | `label` |
//! | `entropy.csv` | `entropy` |
//! | `flags.csv` | `flag,set_size,quantile` |

use std::fs;
use std::path::{Path, PathBuf};

use dualcal_core::conformal::{ConformalConfig, StratificationFlags};
use dualcal_core::data::{FeatureMatrix, LabelVector, PredictionStack, ProbMatrix};
use dualcal_core::isotonic::{CalibrationMode, IsotonicModel, MulticlassCalibrator};
use dualcal_core::pipeline::DualCalibrator;
use dualcal_core::synth::SplitData;
use serde::{Deserialize, Serialize};

pub const PROBS: &str = "probs.csv";
pub const FEATURES: &str = "features.csv";
pub const LABELS: &str = "labels.csv";
pub const PREDICTED: &str = "predicted.csv";
pub const ENTROPY: &str = "entropy.csv";
pub const FLAGS: &str = "flags.csv";
pub const CALIBRATOR: &str = "calibrator.json";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A malformed cell. `line` is 1-based and counts the header.
    #[error("{}: line {line}, column {column}: {message}", .path.display())]
    Cell {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{}: {message}", .path.display())]
    Layout { path: PathBuf, message: String },
    #[error("{}: {source}", .path.display())]
    Invalid {
        path: PathBuf,
        source: dualcal_core::Error,
    },
    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl FormatError {
    /// True when the file could not be read or written at all, as opposed to
    /// having bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path) -> impl FnOnce(dualcal_core::Error) -> FormatError + '_ {
    move |source| FormatError::Invalid {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> FormatError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => FormatError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => FormatError::Layout {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Column names `{prefix}0 .. {prefix}{n-1}`.
pub fn indexed_header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Rows of a numeric table, checked against its header.
struct Table {
    header: Vec<String>,
    rows: usize,
    values: Vec<f64>,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io(path))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

/// Reads a table of finite floats. `check_header` returns a complaint for an
/// unacceptable header.
fn read_table(path: &Path, check_header: impl Fn(&[String]) -> Option<String>) -> Result<Table> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if let Some(message) = check_header(&header) {
        return Err(FormatError::Layout {
            path: path.to_path_buf(),
            message,
        });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(FormatError::Cell {
                path: path.to_path_buf(),
                line,
                column: header.get(record.len()).cloned().unwrap_or_else(|| "-".into()),
                message: format!("{} values under a {}-column header", record.len(), header.len()),
            });
        }
        for (cell, name) in record.iter().zip(&header) {
            let v = parse_f64(cell).ok_or_else(|| FormatError::Cell {
                path: path.to_path_buf(),
                line,
                column: name.clone(),
                message: format!("`{cell}` is not a finite number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Table { header, rows, values })
}

fn parse_f64(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_indexed(path: &Path, prefix: &str) -> Result<Table> {
    read_table(path, |h| {
        if h.is_empty() {
            return Some("empty header".into());
        }
        let want = indexed_header(prefix, h.len());
        (h != want).then(|| format!("header must be {}, found {}", want.join(","), h.join(",")))
    })
}

fn write_rows<'a>(path: &Path, header: &[String], rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_probs(path: &Path) -> Result<ProbMatrix> {
    let t = read_indexed(path, "c")?;
    ProbMatrix::new(t.rows, t.header.len(), t.values).map_err(invalid(path))
}

pub fn write_probs(path: &Path, probs: &ProbMatrix) -> Result<()> {
    write_rows(path, &indexed_header("c", probs.classes()), probs.rows())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let t = read_indexed(path, "f")?;
    FeatureMatrix::new(t.rows, t.header.len(), t.values).map_err(invalid(path))
}

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let d = features.dim();
    write_rows(path, &indexed_header("f", d), features.as_slice().chunks_exact(d))
}

/// Per-run metric table: one named column per method, one row per run.
/// Returns the method names and the columns.
pub fn read_metric_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let t = read_table(path, |h| {
        if h.iter().any(String::is_empty) {
            return Some("method names must be non-empty".into());
        }
        let mut sorted: Vec<&String> = h.iter().collect();
        sorted.sort();
        sorted.dedup();
        (sorted.len() != h.len()).then(|| "method names must be unique".into())
    })?;
    let k = t.header.len();
    let columns = (0..k).map(|j| t.values.iter().skip(j).step_by(k).copied().collect()).collect();
    Ok((t.header, columns))
}

/// Reads a single-column table named `column`.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let t = read_table(path, |h| (h != [column]).then(|| format!("header must be `{column}`")))?;
    Ok(t.values)
}

pub fn write_column(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    write_rows(path, &[column.to_string()], values.chunks(1))
}

/// Class indices under the header `label`, unvalidated against a class count.
pub fn read_label_indices(path: &Path) -> Result<Vec<usize>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?;
    if header.len() != 1 || header[0].trim() != "label" {
        return Err(FormatError::Layout {
            path: path.to_path_buf(),
            message: "header must be `label`".into(),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = (record.len() == 1).then(|| record[0].trim());
        let label = cell.and_then(|c| c.parse::<usize>().ok());
        out.push(label.ok_or_else(|| FormatError::Cell {
            path: path.to_path_buf(),
            line,
            column: "label".into(),
            message: format!("expected one non-negative integer, found `{}`", record.iter().collect::<Vec<_>>().join(",")),
        })?);
    }
    Ok(out)
}

pub fn read_labels(path: &Path, classes: usize) -> Result<LabelVector> {
    LabelVector::new(read_label_indices(path)?, classes).map_err(invalid(path))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["label"]).map_err(|e| csv_error(path, e))?;
    for l in labels {
        w.write_record([l.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io(path))
}

pub fn pass_file(t: usize) -> String {
    format!("probs_t{t}.csv")
}

/// Reads `probs_t0.csv, probs_t1.csv, ...` up to the first missing index.
pub fn read_stack(dir: &Path) -> Result<PredictionStack> {
    if !dir.is_dir() {
        return Err(FormatError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        });
    }
    let mut passes = Vec::new();
    loop {
        let path = dir.join(pass_file(passes.len()));
        if !path.exists() {
            break;
        }
        passes.push(read_probs(&path)?);
    }
    if passes.is_empty() {
        return Err(FormatError::Layout {
            path: dir.to_path_buf(),
            message: format!("no {} found", pass_file(0)),
        });
    }
    PredictionStack::from_passes(&passes).map_err(invalid(dir))
}

pub fn write_stack(dir: &Path, stack: &PredictionStack) -> Result<()> {
    for t in 0..stack.passes() {
        write_probs(&dir.join(pass_file(t)), &stack.pass(t))?;
    }
    Ok(())
}

/// Mean probabilities of a directory: `probs.csv` when present, otherwise
/// the pass mean of `probs_t*.csv`.
pub fn read_mean_probs(dir: &Path) -> Result<ProbMatrix> {
    let path = dir.join(PROBS);
    if path.exists() {
        read_probs(&path)
    } else {
        Ok(read_stack(dir)?.mean_over_passes())
    }
}

fn check_rows(dir: &Path, file: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(FormatError::Layout {
            path: dir.join(file),
            message: format!("{got} rows, expected {want} to match {}", pass_file(0)),
        });
    }
    Ok(())
}

/// One bundle subset: `features.csv`, `labels.csv` and the pass files.
pub fn read_split(dir: &Path) -> Result<SplitData> {
    let stack = read_stack(dir)?;
    let features = read_features(&dir.join(FEATURES))?;
    let labels = read_labels(&dir.join(LABELS), stack.classes())?;
    check_rows(dir, FEATURES, features.samples(), stack.samples())?;
    check_rows(dir, LABELS, labels.len(), stack.samples())?;
    Ok(SplitData { features, labels, stack })
}

pub fn write_split(dir: &Path, part: &SplitData) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_features(&dir.join(FEATURES), &part.features)?;
    write_labels(&dir.join(LABELS), part.labels.as_slice())?;
    write_stack(dir, &part.stack)
}

#[derive(Debug, Serialize, Deserialize)]
struct FlagRecord {
    flag: u8,
    set_size: usize,
    quantile: f64,
}

pub fn write_flags(path: &Path, flags: &StratificationFlags) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for i in 0..flags.len() {
        w.serialize(FlagRecord {
            flag: u8::from(flags.flags[i]),
            set_size: flags.set_sizes[i],
            quantile: flags.quantiles[i],
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_flags(path: &Path) -> Result<StratificationFlags> {
    let mut rdr = reader(path)?;
    let (mut flags, mut sizes, mut quantiles) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.deserialize::<FlagRecord>().enumerate() {
        let rec = rec.map_err(|e| FormatError::Cell {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            column: "flag,set_size,quantile".into(),
            message: e.to_string(),
        })?;
        flags.push(rec.flag != 0);
        sizes.push(rec.set_size);
        quantiles.push(rec.quantile);
    }
    StratificationFlags::new(flags, sizes, quantiles).map_err(invalid(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Serialized form of one [`IsotonicModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub boundaries: Vec<f64>,
    pub block_values: Vec<f64>,
    pub training_range: [f64; 2],
}

impl From<&IsotonicModel> for ModelDoc {
    fn from(m: &IsotonicModel) -> Self {
        let (lo, hi) = m.training_range();
        Self {
            boundaries: m.boundaries().to_vec(),
            block_values: m.block_values().to_vec(),
            training_range: [lo, hi],
        }
    }
}

impl ModelDoc {
    fn model(&self) -> dualcal_core::Result<IsotonicModel> {
        IsotonicModel::from_parts(
            self.boundaries.clone(),
            self.block_values.clone(),
            (self.training_range[0], self.training_range[1]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalDoc {
    pub k: usize,
    pub alpha: f64,
}

/// Calibrator JSON. `standard` is present for the isotonic and dual modes,
/// `underconfident` and `conformal` only for the dual mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorDoc {
    pub mode: String,
    pub beta: Option<f64>,
    pub classes: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conformal: Option<ConformalDoc>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub standard: Option<Vec<ModelDoc>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub underconfident: Option<Vec<ModelDoc>>,
}

/// A fitted calibrator of any mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibrator {
    PassThrough { classes: usize },
    Isotonic(MulticlassCalibrator),
    Dual(DualCalibrator),
}

fn docs(c: &MulticlassCalibrator) -> Vec<ModelDoc> {
    c.models().iter().map(ModelDoc::from).collect()
}

impl Calibrator {
    pub fn to_doc(&self) -> CalibratorDoc {
        match self {
            Calibrator::PassThrough { classes } => CalibratorDoc {
                mode: "none".into(),
                beta: None,
                classes: *classes,
                conformal: None,
                standard: None,
                underconfident: None,
            },
            Calibrator::Isotonic(c) => CalibratorDoc {
                mode: "isotonic".into(),
                beta: None,
                classes: c.classes(),
                conformal: None,
                standard: Some(docs(c)),
                underconfident: None,
            },
            Calibrator::Dual(d) => CalibratorDoc {
                mode: "dual".into(),
                beta: Some(d.beta()),
                classes: d.classes(),
                conformal: Some(ConformalDoc {
                    k: d.config().k,
                    alpha: d.config().alpha,
                }),
                standard: Some(docs(d.standard())),
                underconfident: Some(docs(d.underconfident())),
            },
        }
    }

    pub fn from_doc(doc: &CalibratorDoc) -> dualcal_core::Result<Self> {
        use dualcal_core::Error;
        let missing = |what: &str| Error::Config(format!("{} calibrator without `{what}`", doc.mode));
        let models = |m: &Option<Vec<ModelDoc>>, what: &str, mode| -> dualcal_core::Result<MulticlassCalibrator> {
            let m = m.as_ref().ok_or_else(|| missing(what))?;
            if m.len() != doc.classes {
                return Err(Error::Shape(format!("{} `{what}` models for {} classes", m.len(), doc.classes)));
            }
            let m = m.iter().map(ModelDoc::model).collect::<dualcal_core::Result<Vec<_>>>()?;
            MulticlassCalibrator::from_parts(m, mode)
        };
        match doc.mode.as_str() {
            "none" => Ok(Calibrator::PassThrough { classes: doc.classes }),
            "isotonic" => Ok(Calibrator::Isotonic(models(&doc.standard, "standard", CalibrationMode::Standard)?)),
            "dual" => {
                let beta = doc.beta.ok_or_else(|| missing("beta"))?;
                let conformal = doc.conformal.ok_or_else(|| missing("conformal"))?;
                DualCalibrator::from_parts(
                    models(&doc.standard, "standard", CalibrationMode::Standard)?,
                    models(&doc.underconfident, "underconfident", CalibrationMode::Underconfident { beta })?,
                    ConformalConfig::new(conformal.k, conformal.alpha)?,
                    beta,
                )
                .map(Calibrator::Dual)
            }
            other => Err(Error::Config(format!("unknown calibrator mode `{other}`"))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_doc())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_doc(&read_json(path)?).map_err(invalid(path))
    }
}
