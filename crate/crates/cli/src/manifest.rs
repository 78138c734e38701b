use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Process exit codes.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const FORMAT: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: exit::USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<nrbm::Error> for CliError {
    fn from(e: nrbm::Error) -> Self {
        use nrbm::Error as E;
        let code = match &e {
            E::Config(_) | E::OracleSize { .. } => exit::USAGE,
            E::Numeric(_) => exit::NUMERIC,
            E::Format(_)
            | E::Range(_)
            | E::Dim(_)
            | E::Degenerate(_)
            | E::Version { .. }
            | E::Corrupt(_)
            | E::Io(_) => exit::FORMAT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        nrbm::Error::Io(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError {
        code: exit::FORMAT,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// Everything needed to rerun a command, printed as JSON on success.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub result: Value,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: None,
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            result: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(digest(path)?);
        Ok(())
    }

    pub fn config(mut self, config: impl Serialize) -> Self {
        self.config = to_value(config);
        self
    }

    pub fn result(&mut self, result: impl Serialize) {
        self.result = to_value(result);
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}
