//! Frozen-backbone representations consumed by the classifier head.
//!
//! # File format
//!
//! ```text
//! EMB v1 <d> <count> <pooled|tokens>\n
//! <id>\t<label>\t<n>\n                  (count manifest lines)
//! DATA <bytes> <crc32 as 8 hex digits>\n
//! <bytes of little-endian f32>          (n*d per record, in manifest order)
//! ```
//!
//! Pooled stores have `n = 1`. A text variant, headed
//! `EMBTXT v1 <d> <count> <pooled|tokens>`, carries one record per line as
//! `<id> <label> <n> <v1> ... <v_{n*d}>` and is meant for small fixtures.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

const MAGIC: &str = "EMB";
const TEXT_MAGIC: &str = "EMBTXT";
const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad header: {0}")]
    Header(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("header declares {declared} records, found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("checksum mismatch: expected {expected:08x}, computed {actual:08x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("record {id}: expected width {expected}, found {found}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("record {id}: non-finite value at position {position}")]
    NonFinite { id: String, position: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("record id {0:?} is empty or contains whitespace")]
    InvalidId(String),
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("synthetic class {class}: {reason}")]
    InvalidSpec { class: usize, reason: String },
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

/// Whether records carry only the pooled vector or the full token matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreMode {
    Pooled,
    Tokens,
}

impl StoreMode {
    pub fn name(self) -> &'static str {
        match self {
            StoreMode::Pooled => "pooled",
            StoreMode::Tokens => "tokens",
        }
    }
}

impl fmt::Display for StoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(StoreMode::Pooled),
            "tokens" => Ok(StoreMode::Tokens),
            other => Err(format!("unknown store mode {other:?} (expected pooled or tokens)")),
        }
    }
}

/// One review's representation. `values` holds `rows * d` floats row-major;
/// row 0 is the pooled `[CLS]` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: usize,
    rows: usize,
    values: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn pooled(id: impl Into<String>, label: usize, vector: Vec<f32>) -> Self {
        Self { id: id.into(), label, rows: 1, values: vector }
    }

    /// A token matrix of `rows` rows; `values.len()` must be a multiple of `rows`.
    pub fn tokens(id: impl Into<String>, label: usize, rows: usize, values: Vec<f32>) -> Self {
        Self { id: id.into(), label, rows, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn width(&self) -> usize {
        self.values.len().checked_div(self.rows).unwrap_or(0)
    }

    /// The pooled vector C (first row).
    pub fn pooled_vector(&self) -> &[f32] {
        &self.values[..self.width()]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.width();
        &self.values[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    File(PathBuf),
    Service(String),
    Synthetic { seed: u64 },
    InMemory,
}

/// An immutable, id-indexed set of embedding records of a common width.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    mode: StoreMode,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
    provenance: Provenance,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.mode == other.mode && self.records == other.records
    }
}

fn check_id(id: &str) -> Result<(), StoreError> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(StoreError::InvalidId(id.to_string()));
    }
    Ok(())
}

impl EmbeddingStore {
    /// Validates widths, finiteness, id uniqueness and the mode's row rule.
    pub fn new(
        dim: usize,
        mode: StoreMode,
        records: Vec<EmbeddingRecord>,
        provenance: Provenance,
    ) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::Header("dimension must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            check_id(&r.id)?;
            let bad = |reason: String| StoreError::InvalidRecord { id: r.id.clone(), reason };
            match mode {
                StoreMode::Pooled if r.rows != 1 => return Err(bad(format!("pooled record has {} rows", r.rows))),
                StoreMode::Tokens if r.rows == 0 => return Err(bad("token record has no rows".into())),
                _ => {}
            }
            if r.values.len() != r.rows * dim {
                return Err(StoreError::DimensionMismatch {
                    id: r.id.clone(),
                    expected: dim,
                    found: r.values.len() / r.rows.max(1),
                });
            }
            if let Some(position) = r.values.iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite { id: r.id.clone(), position });
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { dim, mode, records, index, provenance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> StoreMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    /// Writes the binary format.
    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        let mut out = Vec::new();
        self.write_to(&mut out).map_err(|e| StoreError::io(path, e))?;
        fs::write(path, out).map_err(|e| StoreError::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION} {} {} {}", self.dim, self.records.len(), self.mode)?;
        let mut data = Vec::with_capacity(self.records.iter().map(|r| r.values.len() * 4).sum());
        for r in &self.records {
            writeln!(w, "{}\t{}\t{}", r.id, r.label, r.rows)?;
            for v in &r.values {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        writeln!(w, "DATA {} {:08x}", data.len(), crc32fast::hash(&data))?;
        w.write_all(&data)
    }

    /// Writes the text variant. Values are printed with enough digits to
    /// round-trip exactly.
    pub fn write_text(&self, path: &Path) -> Result<(), StoreError> {
        let mut out = String::new();
        out.push_str(&format!("{TEXT_MAGIC} {VERSION} {} {} {}\n", self.dim, self.records.len(), self.mode));
        for r in &self.records {
            out.push_str(&format!("{} {} {}", r.id, r.label, r.rows));
            for v in &r.values {
                out.push_str(&format!(" {v:?}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| StoreError::io(path, e))
    }
}

struct Header {
    text: bool,
    dim: usize,
    count: usize,
    mode: StoreMode,
}

fn parse_header(line: &str) -> Result<Header, StoreError> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    let bad = |why: &str| StoreError::Header(format!("{why}: {line:?}"));
    if fields.len() != 5 {
        return Err(bad("expected `EMB v1 <d> <count> <mode>`"));
    }
    let text = match fields[0] {
        MAGIC => false,
        TEXT_MAGIC => true,
        _ => return Err(bad("unknown magic")),
    };
    if fields[1] != VERSION {
        return Err(bad("unsupported version"));
    }
    let dim: usize = fields[2].parse().map_err(|_| bad("dimension is not an integer"))?;
    let count: usize = fields[3].parse().map_err(|_| bad("count is not an integer"))?;
    let mode: StoreMode = fields[4].parse().map_err(|_| bad("unknown mode"))?;
    if dim == 0 {
        return Err(bad("dimension must be at least 1"));
    }
    Ok(Header { text, dim, count, mode })
}

/// Loads a store in either the binary or the text format.
pub fn load_store(path: &Path) -> Result<EmbeddingStore, StoreError> {
    let file = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut reader = io::BufReader::new(file);
    let store = read_store(&mut reader).map_err(|e| match e {
        StoreError::Io { source, .. } => StoreError::io(path, source),
        other => other,
    })?;
    Ok(EmbeddingStore { provenance: Provenance::File(path.to_path_buf()), ..store })
}

pub fn read_store<R: BufRead>(reader: &mut R) -> Result<EmbeddingStore, StoreError> {
    let io_err = |e| StoreError::Io { path: PathBuf::new(), source: e };
    let mut line = String::new();
    reader.read_line(&mut line).map_err(io_err)?;
    let header = parse_header(line.trim_end_matches(['\n', '\r']))?;
    let records = if header.text {
        read_text_body(reader, &header)?
    } else {
        read_binary_body(reader, &header)?
    };
    if records.len() != header.count {
        return Err(StoreError::CountMismatch { declared: header.count, found: records.len() });
    }
    EmbeddingStore::new(header.dim, header.mode, records, Provenance::InMemory)
}

fn read_binary_body<R: BufRead>(reader: &mut R, header: &Header) -> Result<Vec<EmbeddingRecord>, StoreError> {
    let io_err = |e| StoreError::Io { path: PathBuf::new(), source: e };
    let mut manifest = Vec::with_capacity(header.count);
    let mut line = String::new();
    let mut lineno = 1;
    let (data_len, checksum) = loop {
        line.clear();
        lineno += 1;
        if reader.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(StoreError::Manifest { line: lineno, reason: "missing DATA line".into() });
        }
        let text = line.trim_end_matches(['\n', '\r']);
        if let Some(rest) = text.strip_prefix("DATA ") {
            let mut parts = rest.split(' ');
            let bad = || StoreError::Manifest { line: lineno, reason: format!("malformed DATA line {text:?}") };
            let len: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let crc = parts.next().and_then(|p| u32::from_str_radix(p, 16).ok()).ok_or_else(bad)?;
            break (len, crc);
        }
        let fields: Vec<&str> = text.split('\t').collect();
        let bad = |reason: String| StoreError::Manifest { line: lineno, reason };
        if fields.len() != 3 {
            return Err(bad(format!("expected id, label and row count, got {text:?}")));
        }
        let label: usize = fields[1].parse().map_err(|_| bad(format!("bad label {:?}", fields[1])))?;
        let rows: usize = fields[2].parse().map_err(|_| bad(format!("bad row count {:?}", fields[2])))?;
        manifest.push((fields[0].to_string(), label, rows));
        if manifest.len() > header.count {
            return Err(StoreError::CountMismatch { declared: header.count, found: manifest.len() });
        }
    };
    if manifest.len() != header.count {
        return Err(StoreError::CountMismatch { declared: header.count, found: manifest.len() });
    }
    let mut data = Vec::with_capacity(data_len);
    reader.read_to_end(&mut data).map_err(io_err)?;
    if data.len() != data_len {
        return Err(StoreError::Header(format!("DATA declares {data_len} bytes, file holds {}", data.len())));
    }
    let actual = crc32fast::hash(&data);
    if actual != checksum {
        return Err(StoreError::Checksum { expected: checksum, actual });
    }
    let floats_needed: usize = manifest.iter().map(|m| m.2 * header.dim).sum();
    if floats_needed * 4 != data_len {
        // attribute the disagreement to the first record whose rows would not fit
        let id = manifest.first().map(|m| m.0.clone()).unwrap_or_default();
        let total_rows: usize = manifest.iter().map(|m| m.2).sum::<usize>().max(1);
        return Err(StoreError::DimensionMismatch { id, expected: header.dim, found: data_len / 4 / total_rows });
    }
    let mut offset = 0;
    let records = manifest
        .into_iter()
        .map(|(id, label, rows)| {
            let n = rows * header.dim * 4;
            let values = data[offset..offset + n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            offset += n;
            EmbeddingRecord { id, label, rows, values }
        })
        .collect();
    Ok(records)
}

fn read_text_body<R: BufRead>(reader: &mut R, header: &Header) -> Result<Vec<EmbeddingRecord>, StoreError> {
    let mut records = Vec::with_capacity(header.count);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| StoreError::Io { path: PathBuf::new(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| StoreError::Manifest { line: lineno, reason };
        let mut fields = line.split_ascii_whitespace();
        let (Some(id), Some(label), Some(rows)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected id, label, row count and values".into()));
        };
        let label: usize = label.parse().map_err(|_| bad(format!("bad label {label:?}")))?;
        let rows: usize = rows.parse().map_err(|_| bad(format!("bad row count {rows:?}")))?;
        let values: Vec<f32> = fields
            .map(|v| v.parse::<f32>().map_err(|_| bad(format!("bad value {v:?}"))))
            .collect::<Result<_, _>>()?;
        if values.len() != rows * header.dim {
            return Err(StoreError::DimensionMismatch {
                id: id.to_string(),
                expected: header.dim,
                found: values.len() / rows.max(1),
            });
        }
        records.push(EmbeddingRecord { id: id.to_string(), label, rows, values });
    }
    Ok(records)
}

/// One Gaussian cluster of a synthetic store.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub count: usize,
    pub mean: Vec<f64>,
    pub spread: f64,
}

fn draw_rows(
    rng: &mut ChaCha8Rng,
    spec: &ClassSpec,
    rows: usize,
) -> Vec<f32> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut values = Vec::with_capacity(rows * spec.mean.len());
    for _ in 0..rows {
        for &m in &spec.mean {
            let z: f64 = normal.sample(rng);
            values.push((m + spec.spread * z) as f32);
        }
    }
    values
}

fn check_specs(dim: usize, classes: &[ClassSpec]) -> Result<(), StoreError> {
    if dim == 0 {
        return Err(StoreError::Header("dimension must be at least 1".into()));
    }
    for (class, spec) in classes.iter().enumerate() {
        let bad = |reason: String| StoreError::InvalidSpec { class, reason };
        if spec.count == 0 {
            return Err(bad("count must be positive".into()));
        }
        if spec.mean.len() != dim {
            return Err(bad(format!("mean has {} components, expected {dim}", spec.mean.len())));
        }
        if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
            return Err(bad(format!("spread {} must be finite and nonnegative", spec.spread)));
        }
    }
    Ok(())
}

/// Deterministic per-class Gaussian clusters; class `i` of `classes` gets label `i`.
pub fn synthetic_store(seed: u64, dim: usize, classes: &[ClassSpec]) -> Result<EmbeddingStore, StoreError> {
    check_specs(dim, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (label, spec) in classes.iter().enumerate() {
        for i in 0..spec.count {
            records.push(EmbeddingRecord::pooled(format!("syn-{label}-{i:06}"), label, draw_rows(&mut rng, spec, 1)));
        }
    }
    EmbeddingStore::new(dim, StoreMode::Pooled, records, Provenance::Synthetic { seed })
}

/// Like [`synthetic_store`] but each record is a `rows x dim` token matrix
/// drawn around the class mean.
pub fn synthetic_token_store(
    seed: u64,
    dim: usize,
    rows: usize,
    classes: &[ClassSpec],
) -> Result<EmbeddingStore, StoreError> {
    check_specs(dim, classes)?;
    if rows == 0 {
        return Err(StoreError::InvalidSpec { class: 0, reason: "token rows must be positive".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (label, spec) in classes.iter().enumerate() {
        for i in 0..spec.count {
            let values = draw_rows(&mut rng, spec, rows);
            records.push(EmbeddingRecord::tokens(format!("syn-{label}-{i:06}"), label, rows, values));
        }
    }
    EmbeddingStore::new(dim, StoreMode::Tokens, records, Provenance::Synthetic { seed })
}

/// `classes` clusters of `per_class` points with unit spread whose means sit
/// `separation` apart along distinct axes (two classes: opposite ends of
/// the diagonal).
pub fn separated_clusters(dim: usize, classes: usize, per_class: usize, separation: f64) -> Vec<ClassSpec> {
    (0..classes)
        .map(|c| {
            let mean = if classes == 2 {
                let sign = if c == 0 { -0.5 } else { 0.5 };
                let unit = 1.0 / (dim as f64).sqrt();
                vec![sign * separation * unit; dim]
            } else {
                // vertices of a simplex along the first axes
                let mut m = vec![0.0; dim];
                m[c % dim] = separation / std::f64::consts::SQRT_2;
                m
            };
            ClassSpec { count: per_class, mean, spread: 1.0 }
        })
        .collect()
}
