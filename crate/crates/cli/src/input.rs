use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nrbm::data::{load_dense_csv, load_idx, load_idx_labels, load_sparse_bow, write_dense_csv, CsvOptions};
use nrbm::Data;
use serde::Serialize;

use crate::manifest::{CliError, CliResult, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Idx,
    Csv,
    Bow,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Idx => "idx",
            Format::Csv => "csv",
            Format::Bow => "bow",
        }
    }
}

/// Flags that describe how to read a data file.
#[derive(Debug, Clone, Args, Serialize)]
pub struct FormatArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// IDX label file matching an IDX image file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CSV: skip the first record.
    #[arg(long)]
    pub header: bool,
    /// CSV: the last column is an integer class label.
    #[arg(long)]
    pub label_col: bool,
    /// CSV: min-max scale each column into [0, 1].
    #[arg(long)]
    pub normalize: bool,
    /// BoW: vocabulary size (default: header or largest index).
    #[arg(long)]
    pub vocab: Option<usize>,
}

impl FormatArgs {
    fn check(&self) -> CliResult<()> {
        let clash = |flag: &str| {
            Err(CliError::usage(format!(
                "--{flag} does not apply to --format {}",
                self.format.name()
            )))
        };
        match self.format {
            Format::Idx => {
                if self.header {
                    return clash("header");
                }
                if self.label_col {
                    return clash("label-col");
                }
                if self.normalize {
                    return clash("normalize");
                }
                if self.vocab.is_some() {
                    return clash("vocab");
                }
            }
            Format::Csv => {
                if self.labels.is_some() {
                    return clash("labels");
                }
                if self.vocab.is_some() {
                    return clash("vocab");
                }
            }
            Format::Bow => {
                if self.labels.is_some() {
                    return clash("labels");
                }
                if self.header || self.label_col || self.normalize {
                    return clash("header/--label-col/--normalize");
                }
            }
        }
        Ok(())
    }

    /// Loads `path` and records its checksum (and the label file's).
    pub fn load(&self, path: &Path, manifest: &mut Manifest) -> CliResult<Data> {
        self.check()?;
        manifest.input(path)?;
        let data = match self.format {
            Format::Idx => {
                let images: Data = load_idx(path)?;
                match &self.labels {
                    Some(path) => {
                        manifest.input(path)?;
                        images.with_labels(load_idx_labels(path)?)?
                    }
                    None => images,
                }
            }
            Format::Csv => load_dense_csv(
                path,
                &CsvOptions {
                    has_header: self.header,
                    has_label_col: self.label_col,
                    normalize: self.normalize,
                },
            )?,
            Format::Bow => load_sparse_bow(path, self.vocab)?.matrix,
        };
        Ok(data)
    }
}

/// An input file together with its format flags.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input data file.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub fmt: FormatArgs,
}

impl DataArgs {
    pub fn load(&self, manifest: &mut Manifest) -> CliResult<Data> {
        self.fmt.load(&self.data, manifest)
    }
}

/// Writes a matrix with a `prefix1..prefixN` header and a trailing `label`
/// column when labels are present.
pub fn write_matrix_csv(
    path: &Path,
    values: ndarray::ArrayView2<'_, f64>,
    labels: Option<&[u32]>,
    prefix: &str,
) -> CliResult<()> {
    let mut header: Vec<String> = (1..=values.ncols()).map(|i| format!("{prefix}{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dense_csv(values, labels, Some(&header), file)?;
    Ok(())
}

/// Reads a CSV written by [`write_matrix_csv`] with a label column.
pub fn read_labeled_csv(path: &Path) -> CliResult<Data> {
    let data: Data = load_dense_csv(
        path,
        &CsvOptions {
            has_header: true,
            has_label_col: true,
            normalize: false,
        },
    )?;
    Ok(data)
}
