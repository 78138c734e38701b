//! Versioned JSON model files.
//!
//! ```json
//! {
//!   "header": {
//!     "format_version": 1,
//!     "model_kind": "nrbm",
//!     "n_visible": 784,
//!     "n_hidden": 100,
//!     "master_seed": 7,
//!     "train_config": { ... },
//!     "checksum": "<sha-256 hex>"
//!   },
//!   "parameters": {
//!     "visible_bias": "<base64>",
//!     "hidden_bias": "<base64>",
//!     "weights": "<base64, row-major N x K>",
//!     "lasso_weights": "<base64>",
//!     "lasso_bias": "<base64>",
//!     "beta": 0.001
//!   }
//! }
//! ```
//!
//! Arrays are little-endian IEEE-754 `f64`. The checksum covers the kind, the
//! dimensions and every array's bytes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lasso::LassoModel;
use crate::rbm::RbmParams;
use crate::scalar::Scalar;
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rbm,
    Nrbm,
    Lasso,
    Pipeline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rbm => "rbm",
            ModelKind::Nrbm => "nrbm",
            ModelKind::Lasso => "lasso",
            ModelKind::Pipeline => "pipeline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbm" => Ok(ModelKind::Rbm),
            "nrbm" => Ok(ModelKind::Nrbm),
            "lasso" => Ok(ModelKind::Lasso),
            "pipeline" => Ok(ModelKind::Pipeline),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A model together with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile<T> {
    pub kind: ModelKind,
    pub rbm: Option<RbmParams<T>>,
    pub lasso: Option<LassoModel<T>>,
    pub train_config: Option<TrainConfig>,
    pub master_seed: u64,
}

impl<T: Scalar> ModelFile<T> {
    /// An RBM; the kind is `nrbm` when the config has a positive barrier.
    pub fn from_rbm(params: RbmParams<T>, config: TrainConfig) -> Self {
        let kind = if config.alpha > 0.0 { ModelKind::Nrbm } else { ModelKind::Rbm };
        Self {
            kind,
            rbm: Some(params),
            lasso: None,
            master_seed: config.seed,
            train_config: Some(config),
        }
    }

    pub fn from_lasso(lasso: LassoModel<T>, master_seed: u64) -> Self {
        Self {
            kind: ModelKind::Lasso,
            rbm: None,
            lasso: Some(lasso),
            train_config: None,
            master_seed,
        }
    }

    pub fn pipeline(rbm: RbmParams<T>, lasso: LassoModel<T>, config: TrainConfig) -> Self {
        Self {
            kind: ModelKind::Pipeline,
            rbm: Some(rbm),
            lasso: Some(lasso),
            master_seed: config.seed,
            train_config: Some(config),
        }
    }

    /// Checks that the present parts match the kind and each other.
    pub fn validate(&self) -> Result<()> {
        let needs_rbm = matches!(self.kind, ModelKind::Rbm | ModelKind::Nrbm | ModelKind::Pipeline);
        let needs_lasso = matches!(self.kind, ModelKind::Lasso | ModelKind::Pipeline);
        if needs_rbm != self.rbm.is_some() || needs_lasso != self.lasso.is_some() {
            return Err(Error::Format(format!(
                "a {} model has the wrong set of parameter blocks",
                self.kind
            )));
        }
        if let (Some(rbm), Some(lasso)) = (&self.rbm, &self.lasso) {
            if lasso.weights.len() != rbm.n_hidden() {
                return Err(Error::dim("pipeline lasso must have one weight per hidden unit"));
            }
        }
        Ok(())
    }

    fn dims(&self) -> (usize, usize) {
        match (&self.rbm, &self.lasso) {
            (Some(r), _) => (r.n_visible(), r.n_hidden()),
            (None, Some(l)) => (l.weights.len(), 0),
            (None, None) => (0, 0),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_kind: String,
    n_visible: usize,
    n_hidden: usize,
    master_seed: u64,
    train_config: Option<TrainConfig>,
    checksum: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    visible_bias: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden_bias: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lasso_weights: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lasso_bias: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lasso_converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lasso_iterations: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    header: Header,
    parameters: Parameters,
}

fn to_le_bytes<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| v.widen().to_le_bytes())
        .collect()
}

fn from_le_bytes<T: Scalar>(bytes: &[u8], name: &str) -> Result<Vec<T>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Corrupt(format!("{name}: byte length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::narrow(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

/// Named raw blocks in checksum order.
fn blocks<T: Scalar>(model: &ModelFile<T>) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = Vec::new();
    if let Some(r) = &model.rbm {
        out.push(("visible_bias", to_le_bytes(r.visible_bias().iter())));
        out.push(("hidden_bias", to_le_bytes(r.hidden_bias().iter())));
        out.push(("weights", to_le_bytes(r.weights().iter())));
    }
    if let Some(l) = &model.lasso {
        out.push(("lasso_weights", to_le_bytes(l.weights.iter())));
        out.push(("lasso_bias", to_le_bytes(std::iter::once(&l.bias))));
    }
    out
}

fn checksum(kind: &str, n: usize, k: usize, blocks: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((k as u64).to_le_bytes());
    for (name, bytes) in blocks {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a model to its JSON document.
pub fn model_to_json<T: Scalar>(model: &ModelFile<T>) -> Result<String> {
    model.validate()?;
    let (n, k) = model.dims();
    let kind = model.kind.to_string();
    let raw = blocks(model);
    let refs: Vec<(&str, &[u8])> = raw.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    let sum = checksum(&kind, n, k, &refs);

    let mut params = Parameters::default();
    for (name, bytes) in &raw {
        let enc = Some(BASE64.encode(bytes));
        match *name {
            "visible_bias" => params.visible_bias = enc,
            "hidden_bias" => params.hidden_bias = enc,
            "weights" => params.weights = enc,
            "lasso_weights" => params.lasso_weights = enc,
            "lasso_bias" => params.lasso_bias = enc,
            _ => unreachable!(),
        }
    }
    if let Some(l) = &model.lasso {
        params.beta = Some(l.beta);
        params.lasso_converged = Some(l.converged);
        params.lasso_iterations = Some(l.iterations);
    }
    let doc = Document {
        header: Header {
            format_version: FORMAT_VERSION,
            model_kind: kind,
            n_visible: n,
            n_hidden: k,
            master_seed: model.master_seed,
            train_config: model.train_config.clone(),
            checksum: sum,
        },
        parameters: params,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

pub fn model_from_json<T: Scalar>(text: &str) -> Result<ModelFile<T>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("invalid JSON: {e}")))?;
    let header = value
        .get("header")
        .ok_or_else(|| Error::Corrupt("missing header".into()))?;
    let version = header
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::Version {
            found: version.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    let kind: ModelKind = header
        .get("model_kind")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| Error::Corrupt("missing model_kind".into()))?
        .parse()?;
    let doc: Document =
        serde_json::from_value(value).map_err(|e| Error::Corrupt(format!("malformed document: {e}")))?;
    let (n, k) = (doc.header.n_visible, doc.header.n_hidden);
    let p = &doc.parameters;

    let decode = |name: &'static str, field: &Option<String>| -> Result<Option<(&'static str, Vec<u8>)>> {
        field
            .as_ref()
            .map(|s| {
                BASE64
                    .decode(s)
                    .map(|b| (name, b))
                    .map_err(|e| Error::Corrupt(format!("{name}: {e}")))
            })
            .transpose()
    };
    let raw: Vec<(&str, Vec<u8>)> = [
        decode("visible_bias", &p.visible_bias)?,
        decode("hidden_bias", &p.hidden_bias)?,
        decode("weights", &p.weights)?,
        decode("lasso_weights", &p.lasso_weights)?,
        decode("lasso_bias", &p.lasso_bias)?,
    ]
    .into_iter()
    .flatten()
    .collect();
    let refs: Vec<(&str, &[u8])> = raw.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    if checksum(&doc.header.model_kind, n, k, &refs) != doc.header.checksum {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let block = |name: &str| raw.iter().find(|(n, _)| *n == name).map(|(_, b)| b.as_slice());

    let rbm = match (block("visible_bias"), block("hidden_bias"), block("weights")) {
        (Some(a), Some(b), Some(w)) => {
            let a = from_le_bytes::<T>(a, "visible_bias")?;
            let b = from_le_bytes::<T>(b, "hidden_bias")?;
            let w = from_le_bytes::<T>(w, "weights")?;
            if a.len() != n || b.len() != k {
                return Err(Error::Corrupt("bias lengths disagree with header".into()));
            }
            let w = Array2::from_shape_vec((n, k), w)
                .map_err(|_| Error::Corrupt("weight block disagrees with header".into()))?;
            Some(RbmParams::new(Array1::from(a), Array1::from(b), w).map_err(|e| Error::Corrupt(e.to_string()))?)
        }
        (None, None, None) => None,
        _ => return Err(Error::Corrupt("incomplete RBM parameter blocks".into())),
    };
    let lasso = match (block("lasso_weights"), block("lasso_bias")) {
        (Some(w), Some(c)) => {
            let c = from_le_bytes::<T>(c, "lasso_bias")?;
            if c.len() != 1 {
                return Err(Error::Corrupt("lasso_bias must hold one value".into()));
            }
            Some(LassoModel {
                weights: Array1::from(from_le_bytes::<T>(w, "lasso_weights")?),
                bias: c[0],
                beta: p.beta.ok_or_else(|| Error::Corrupt("missing beta".into()))?,
                converged: p.lasso_converged.unwrap_or(false),
                iterations: p.lasso_iterations.unwrap_or(0),
            })
        }
        (None, None) => None,
        _ => return Err(Error::Corrupt("incomplete lasso parameter blocks".into())),
    };
    let model = ModelFile {
        kind,
        rbm,
        lasso,
        train_config: doc.header.train_config,
        master_seed: doc.header.master_seed,
    };
    model.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    if model.dims() != (n, k) {
        return Err(Error::Corrupt("dimensions disagree with header".into()));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &ModelFile<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelFile<T>> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Corrupt("model file is not UTF-8".into()))?;
    model_from_json(&text)
}
