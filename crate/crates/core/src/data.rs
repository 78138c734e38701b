//! Dataset loading, validation, batching and bootstrap resampling.
//!
//! A [`DataMatrix`] holds `M` rows of `N` values in `[0, 1]`, read as the
//! activation probabilities of binary visible units. Rows may carry integer
//! class labels.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Dense row-major matrix with entries in `[0, 1]` and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    values: Array2<T>,
    labels: Option<Vec<u32>>,
}

impl<T: Scalar> DataMatrix<T> {
    /// Validates shape, range and label length.
    pub fn new(values: Array2<T>, labels: Option<Vec<u32>>) -> Result<Self> {
        let (m, n) = values.dim();
        if m == 0 || n == 0 {
            return Err(Error::dim(format!("data matrix must be non-empty, got {m}x{n}")));
        }
        if let Some(((r, c), x)) = values
            .indexed_iter()
            .find(|(_, x)| !(x.is_finite() && **x >= T::zero() && **x <= T::one()))
        {
            return Err(Error::Range(format!("entry ({r}, {c}) = {x} is outside [0, 1]")));
        }
        if let Some(y) = &labels {
            if y.len() != m {
                return Err(Error::dim(format!("{} labels for {m} rows", y.len())));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.values.row(i)
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn into_parts(self) -> (Array2<T>, Option<Vec<u32>>) {
        (self.values, self.labels)
    }

    pub fn with_labels(self, labels: Vec<u32>) -> Result<Self> {
        Self::new(self.values, Some(labels))
    }

    /// Labels checked to be in `{0, 1}`.
    pub fn binary_labels(&self) -> Result<&[u32]> {
        let y = self
            .labels
            .as_deref()
            .ok_or_else(|| Error::Config("data has no labels".into()))?;
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::Range(format!("label {bad} is not binary")));
        }
        Ok(y)
    }

    /// True when every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.values
            .iter()
            .all(|&x| x == T::zero() || x == T::one())
    }

    /// Gathers rows (with repetition) into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let values = self.values.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|y| indices.iter().map(|&i| y[i]).collect());
        Self { values, labels }
    }

    /// Column means, the empirical marginals of the visible units.
    pub fn column_means(&self) -> ndarray::Array1<T> {
        self.values
            .mean_axis(Axis(0))
            .expect("data matrix is non-empty")
    }
}

// ---------------------------------------------------------------------------
// IDX

/// Decoded body of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxContents {
    Images {
        count: usize,
        height: usize,
        width: usize,
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("IDX header is truncated".into()))
}

/// Parses an image (`0x00000803`) or label (`0x00000801`) IDX buffer.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxContents> {
    let magic = read_be_u32(bytes, 0)?;
    let dims: Vec<usize> = match magic {
        IDX_IMAGE_MAGIC => (0..3)
            .map(|i| read_be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
            .collect::<Result<_>>()?,
        IDX_LABEL_MAGIC => vec![read_be_u32(bytes, 4)? as usize],
        other => {
            return Err(Error::Format(format!(
                "unsupported IDX magic number {other:#010x}"
            )))
        }
    };
    let header = 4 + 4 * dims.len();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("IDX dimensions {dims:?} overflow")))?;
    let body = &bytes[header..];
    if body.len() < payload {
        return Err(Error::Format(format!(
            "IDX payload truncated: expected {payload} bytes, found {}",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!(
            "IDX payload has {} trailing bytes",
            body.len() - payload
        )));
    }
    Ok(match magic {
        IDX_IMAGE_MAGIC => IdxContents::Images {
            count: dims[0],
            height: dims[1],
            width: dims[2],
            pixels: body.to_vec(),
        },
        _ => IdxContents::Labels(body.to_vec()),
    })
}

/// Converts an image IDX buffer into a matrix, one flattened image per row,
/// with each byte scaled by `1/255`.
pub fn idx_images_to_matrix<T: Scalar>(contents: IdxContents) -> Result<DataMatrix<T>> {
    match contents {
        IdxContents::Images {
            count,
            height,
            width,
            pixels,
        } => {
            let scale = T::cast(255.0);
            let values = Array2::from_shape_vec(
                (count, height * width),
                pixels.into_iter().map(|b| T::cast(b as f64) / scale).collect(),
            )
            .map_err(|e| Error::Format(e.to_string()))?;
            DataMatrix::new(values, None)
        }
        IdxContents::Labels(_) => Err(Error::Format(
            "expected an image IDX file, found a label file".into(),
        )),
    }
}

/// Loads an IDX image file.
pub fn load_idx<T: Scalar>(path: impl AsRef<Path>) -> Result<DataMatrix<T>> {
    idx_images_to_matrix(parse_idx(&fs::read(path)?)?)
}

/// Loads an IDX label file.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    match parse_idx(&fs::read(path)?)? {
        IdxContents::Labels(l) => Ok(l.into_iter().map(u32::from).collect()),
        IdxContents::Images { .. } => Err(Error::Format(
            "expected a label IDX file, found an image file".into(),
        )),
    }
}

/// Encodes images as an IDX buffer (used by tests and tooling).
pub fn encode_idx_images(count: u32, height: u32, width: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IDX_IMAGE_MAGIC, count, height, width] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

// ---------------------------------------------------------------------------
// Dense CSV

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// The first record is a header and is skipped.
    pub has_header: bool,
    /// The last column holds a non-negative integer class label.
    pub has_label_col: bool,
    /// Min-max scale every feature column into `[0, 1]`.
    pub normalize: bool,
}

pub fn load_dense_csv<T: Scalar>(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<DataMatrix<T>> {
    parse_dense_csv(fs::File::open(path)?, opts)
}

pub fn parse_dense_csv<T: Scalar, R: Read>(reader: R, opts: &CsvOptions) -> Result<DataMatrix<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width = None;
    let mut raw: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Format(format!(
                    "record {} has {} fields, expected {w}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        let n_features = if opts.has_label_col {
            record.len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
                Error::Format("label column requested but records have a single field".into())
            })?
        } else {
            record.len()
        };
        for (col, field) in record.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                Error::Format(format!("record {}, field {}: {field:?} is not numeric", line + 1, col + 1))
            })?;
            if !x.is_finite() {
                return Err(Error::Format(format!(
                    "record {}, field {}: non-finite value",
                    line + 1,
                    col + 1
                )));
            }
            if col < n_features {
                raw.push(x);
            } else {
                if x < 0.0 || x.fract() != 0.0 || x > u32::MAX as f64 {
                    return Err(Error::Format(format!(
                        "record {}: label {field:?} is not a non-negative integer",
                        line + 1
                    )));
                }
                labels.push(x as u32);
            }
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Format("CSV contains no records".into()))?;
    let cols = if opts.has_label_col { width - 1 } else { width };

    if opts.normalize {
        min_max_normalize(&mut raw, cols);
    }
    let values = Array2::from_shape_vec((rows, cols), raw.into_iter().map(T::cast).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    DataMatrix::new(values, opts.has_label_col.then_some(labels))
}

/// Per-column min-max scaling; constant columns become 0.
fn min_max_normalize(raw: &mut [f64], cols: usize) {
    if raw.is_empty() {
        return;
    }
    for c in 0..cols {
        let column = raw.iter().skip(c).step_by(cols);
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        let span = hi - lo;
        for x in raw.iter_mut().skip(c).step_by(cols) {
            *x = if span > 0.0 { ((*x - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

/// Writes values (and a trailing label column when present) as CSV.
///
/// Floats use the shortest representation that parses back to the same
/// value, so a load/write/load cycle is lossless.
pub fn write_dense_csv<T: Scalar, W: Write>(
    data: ArrayView2<'_, T>,
    labels: Option<&[u32]>,
    header: Option<&[String]>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for (i, row) in data.rows().into_iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        if let Some(y) = labels {
            record.push(y[i].to_string());
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sparse bag-of-words

/// Result of parsing an SVMlight-style presence file.
#[derive(Debug, Clone)]
pub struct BowData<T> {
    pub matrix: DataMatrix<T>,
    /// Number of blank lines skipped.
    pub skipped_blank: usize,
}

pub fn load_sparse_bow<T: Scalar>(path: impl AsRef<Path>, vocab: Option<usize>) -> Result<BowData<T>> {
    parse_sparse_bow(&fs::read_to_string(path)?, vocab)
}

/// Parses lines of `label idx:val ...` with 1-based indices into a binary
/// presence matrix. Any positive count becomes 1.0.
///
/// The vocabulary size is `vocab` when given, else a leading `# vocab <N>`
/// line, else the largest index seen. Labels `-1`/`+1` map to 0/1.
pub fn parse_sparse_bow<T: Scalar>(text: &str, vocab: Option<usize>) -> Result<BowData<T>> {
    let mut declared = vocab;
    let mut docs: Vec<(u32, Vec<usize>)> = Vec::new();
    let mut skipped_blank = 0;
    let mut max_index = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            skipped_blank += 1;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if declared.is_none() && words.next() == Some("vocab") {
                declared = Some(words.next().and_then(|n| n.parse().ok()).ok_or_else(|| {
                    Error::Format(format!("line {}: malformed vocab header", lineno + 1))
                })?);
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = match tokens.next().unwrap_or_default() {
            "1" | "+1" => 1,
            "0" | "-1" => 0,
            other => {
                return Err(Error::Format(format!(
                    "line {}: label {other:?} is not one of 0, 1, -1, +1",
                    lineno + 1
                )))
            }
        };
        let mut present = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| {
                Error::Format(format!("line {}: token {tok:?} is not idx:val", lineno + 1))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad index {idx:?}", lineno + 1)))?;
            let val: f64 = val
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad value {val:?}", lineno + 1)))?;
            if idx < 1 {
                return Err(Error::Format(format!("line {}: indices are 1-based", lineno + 1)));
            }
            if !seen.insert(idx) {
                return Err(Error::Format(format!(
                    "line {}: duplicate index {idx}",
                    lineno + 1
                )));
            }
            if !val.is_finite() || val < 0.0 {
                return Err(Error::Format(format!("line {}: count {val} is invalid", lineno + 1)));
            }
            max_index = max_index.max(idx);
            if val > 0.0 {
                present.push(idx - 1);
            }
        }
        docs.push((label, present));
    }

    let cols = declared.unwrap_or(max_index);
    if max_index > cols {
        return Err(Error::Format(format!(
            "index {max_index} exceeds vocabulary size {cols}"
        )));
    }
    let mut values = Array2::zeros((docs.len(), cols));
    let mut labels = Vec::with_capacity(docs.len());
    for (r, (label, present)) in docs.into_iter().enumerate() {
        for c in present {
            values[[r, c]] = T::one();
        }
        labels.push(label);
    }
    Ok(BowData {
        matrix: DataMatrix::new(values, Some(labels))?,
        skipped_blank,
    })
}

// ---------------------------------------------------------------------------
// Batching and resampling

/// Shuffled mini-batch schedule for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub order: Vec<usize>,
    pub epoch_seed: u64,
}

impl BatchPlan {
    pub fn batches(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches().map(<[usize]>::len).collect()
    }
}

/// Shuffles `0..rows` with the stream for `(seed, epoch)` and splits it into
/// batches of `batch_size`; the final batch holds the remainder.
pub fn make_batches(rows: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng::stream(seed, &[domain::BATCH_ORDER, epoch]));
    Ok(BatchPlan {
        batch_size: batch_size.min(rows.max(1)),
        order,
        epoch_seed: rng::derive_seed(seed, &[domain::BATCH_ORDER, epoch]),
    })
}

/// One bootstrap replicate: `rows` draws with replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSample {
    pub replicate_index: usize,
    pub row_indices: Vec<usize>,
    pub seed: u64,
}

pub fn bootstrap(rows: usize, replicate_index: usize, seed: u64) -> Result<BootstrapSample> {
    if rows == 0 {
        return Err(Error::dim("cannot bootstrap an empty dataset"));
    }
    let mut rng = rng::stream(seed, &[domain::BOOTSTRAP, replicate_index as u64]);
    Ok(BootstrapSample {
        replicate_index,
        row_indices: (0..rows).map(|_| rng.gen_range(0..rows)).collect(),
        seed,
    })
}
