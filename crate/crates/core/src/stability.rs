//! Feature-selection stability of sparse classifiers.
//!
//! The two-stage pipeline maps rows to hidden posteriors of an RBM, fits a
//! lasso on those, and carries the lasso weights back to the input features
//! through the RBM weights (`w̄ = W ŵ`). Stability is measured by refitting on
//! bootstrap replicates, selecting the top-`T` features each time, and
//! comparing the selected subsets pairwise.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{bootstrap, DataMatrix};
use crate::error::{Error, Result};
use crate::lasso::{fit_lasso, LassoModel, LassoSettings};
use crate::metrics::{classification_metrics, ClassificationMetrics};
use crate::rbm::RbmParams;
use crate::rng::{self, domain};
use crate::scalar::{sigmoid, Scalar};
use crate::train::{self, hidden_posteriors, TrainConfig};

/// Input-space weights `w̄_n = Σ_k ŵ_k w_nk`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatedWeights<T>(pub Array1<T>);

pub fn conjugate_weights<T: Scalar>(rbm: &RbmParams<T>, lasso: &LassoModel<T>) -> Result<ConjugatedWeights<T>> {
    conjugate(rbm.weights(), lasso.weights.view()).map(ConjugatedWeights)
}

/// `W ŵ` for raw arrays.
pub fn conjugate<T: Scalar>(weights: ArrayView2<'_, T>, hidden_weights: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if weights.ncols() != hidden_weights.len() {
        return Err(Error::dim(format!(
            "{} lasso weights for {} hidden units",
            hidden_weights.len(),
            weights.ncols()
        )));
    }
    Ok(weights.dot(&hidden_weights))
}

/// A selected feature set, indices in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub indices: Vec<usize>,
    pub source_replicate: usize,
}

impl FeatureSubset {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

impl AsRef<[usize]> for FeatureSubset {
    fn as_ref(&self) -> &[usize] {
        &self.indices
    }
}

/// The `t` features with largest `|weight|`, ties going to the lower index.
pub fn select_top<T: Scalar>(weights: ArrayView1<'_, T>, t: usize, source_replicate: usize) -> Result<FeatureSubset> {
    if t > weights.len() {
        return Err(Error::dim(format!(
            "cannot select {t} of {} features",
            weights.len()
        )));
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .partial_cmp(&weights[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut indices = order[..t].to_vec();
    indices.sort_unstable();
    Ok(FeatureSubset {
        indices,
        source_replicate,
    })
}

fn sorted_distinct(s: &[usize]) -> Result<Vec<usize>> {
    let mut v = s.to_vec();
    v.sort_unstable();
    if v.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::Config("feature subset contains duplicate indices".into()));
    }
    Ok(v)
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut r) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                r += 1;
                i += 1;
                j += 1;
            }
        }
    }
    r
}

/// `(R K - T²) / (T (K - T))` for two subsets of size `T` drawn from `K`
/// features sharing `R` elements.
pub fn pairwise_consistency(a: &[usize], b: &[usize], total: usize) -> Result<f64> {
    let t = a.len();
    if b.len() != t {
        return Err(Error::dim(format!("subset sizes differ: {t} vs {}", b.len())));
    }
    if t == 0 || t >= total {
        return Err(Error::Degenerate(format!(
            "consistency is undefined for subset size {t} of {total} features"
        )));
    }
    let (a, b) = (sorted_distinct(a)?, sorted_distinct(b)?);
    if a.iter().chain(&b).any(|&i| i >= total) {
        return Err(Error::Range(format!("feature index out of range for {total} features")));
    }
    let r = intersection_size(&a, &b) as f64;
    let (t, k) = (t as f64, total as f64);
    Ok((r * k - t * t) / (t * (k - t)))
}

/// `|A ∩ B| / |A ∪ B|`.
pub fn pairwise_jaccard(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("Jaccard index of an empty subset".into()));
    }
    let (a, b) = (sorted_distinct(a)?, sorted_distinct(b)?);
    let inter = intersection_size(&a, &b);
    Ok(inter as f64 / (a.len() + b.len() - inter) as f64)
}

fn mean_over_pairs<S: AsRef<[usize]>>(
    subsets: &[S],
    f: impl Fn(&[usize], &[usize]) -> Result<f64>,
) -> Result<f64> {
    let m = subsets.len();
    if m < 2 {
        return Err(Error::Degenerate("stability needs at least two subsets".into()));
    }
    let mut sum = 0.0;
    for i in 0..m - 1 {
        for j in i + 1..m {
            sum += f(subsets[i].as_ref(), subsets[j].as_ref())?;
        }
    }
    Ok(2.0 * sum / (m * (m - 1)) as f64)
}

/// Mean pairwise consistency over all `M(M-1)/2` unordered pairs.
pub fn consistency_index<S: AsRef<[usize]>>(subsets: &[S], total: usize) -> Result<f64> {
    mean_over_pairs(subsets, |a, b| pairwise_consistency(a, b, total))
}

/// Mean pairwise Jaccard index over all unordered pairs.
pub fn jaccard_index<S: AsRef<[usize]>>(subsets: &[S]) -> Result<f64> {
    mean_over_pairs(subsets, pairwise_jaccard)
}

// ---------------------------------------------------------------------------
// Bootstrap protocol

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lasso")]
    Lasso,
    #[serde(rename = "rbm+lasso")]
    RbmLasso,
    #[serde(rename = "nrbm+lasso")]
    NrbmLasso,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lasso => "lasso",
            Method::RbmLasso => "rbm+lasso",
            Method::NrbmLasso => "nrbm+lasso",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(Method::Lasso),
            "rbm+lasso" => Ok(Method::RbmLasso),
            "nrbm+lasso" => Ok(Method::NrbmLasso),
            other => Err(Error::Format(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub method: Method,
    pub t_list: Vec<usize>,
    pub bootstraps: usize,
    pub seed: u64,
    pub beta: f64,
    pub lasso: LassoSettings,
    /// Stage-1 settings; `seed` is replaced per replicate and `alpha` is
    /// ignored for `rbm+lasso`.
    pub rbm: TrainConfig,
    pub threshold: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            method: Method::NrbmLasso,
            t_list: vec![10, 50, 100, 150, 200],
            bootstraps: 10,
            seed: 0,
            beta: 0.001,
            lasso: LassoSettings::default(),
            rbm: TrainConfig {
                hidden_count: 200,
                ..TrainConfig::default()
            },
            threshold: 0.5,
        }
    }
}

/// Predictor learned on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatePredictor<T> {
    pub rbm: Option<RbmParams<T>>,
    pub lasso: LassoModel<T>,
}

impl<T: Scalar> ReplicatePredictor<T> {
    /// Logit of `p(y = 1 | x)`.
    pub fn linear_predictor(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        match &self.rbm {
            Some(rbm) => {
                let h = rbm.hidden_conditional_batch(x)?;
                self.lasso.linear_predictor(h.view())
            }
            None => self.lasso.linear_predictor(x),
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        Ok(self.linear_predictor(x)?.mapv(sigmoid))
    }

    /// Weights on the input features: raw lasso weights or `W ŵ`.
    pub fn feature_weights(&self) -> Result<Array1<T>> {
        match &self.rbm {
            Some(rbm) => Ok(conjugate_weights(rbm, &self.lasso)?.0),
            None => Ok(self.lasso.weights.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult<T> {
    pub replicate_index: usize,
    pub predictor: ReplicatePredictor<T>,
    pub feature_weights: Array1<T>,
}

/// Final model: replicate predictors averaged on the logit scale. For plain
/// lasso this is the model with averaged weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedPredictor<T> {
    pub members: Vec<ReplicatePredictor<T>>,
}

impl<T: Scalar> AveragedPredictor<T> {
    pub fn predict_proba(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let mut acc = Array1::<T>::zeros(x.nrows());
        for m in &self.members {
            acc += &m.linear_predictor(x)?;
        }
        let inv = T::one() / T::cast(self.members.len() as f64);
        Ok(acc.mapv(|z| sigmoid(z * inv)))
    }

    /// Mean weights and bias, available when no member has a stage-1 model.
    pub fn averaged_lasso(&self) -> Option<LassoModel<T>> {
        if self.members.is_empty() || self.members.iter().any(|m| m.rbm.is_some()) {
            return None;
        }
        let inv = T::one() / T::cast(self.members.len() as f64);
        let d = self.members[0].lasso.weights.len();
        let mut weights = Array1::<T>::zeros(d);
        let mut bias = T::zero();
        for m in &self.members {
            weights += &m.lasso.weights;
            bias += m.lasso.bias;
        }
        Some(LassoModel {
            weights: weights * inv,
            bias: bias * inv,
            beta: self.members[0].lasso.beta,
            converged: self.members.iter().all(|m| m.lasso.converged),
            iterations: self.members.iter().map(|m| m.lasso.iterations).max().unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub t: usize,
    pub consistency: f64,
    pub jaccard: f64,
    pub total_features: usize,
    pub bootstraps: usize,
    pub subsets: Vec<FeatureSubset>,
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome<T> {
    pub reports: Vec<StabilityReport>,
    pub replicates: Vec<ReplicateResult<T>>,
    pub final_model: AveragedPredictor<T>,
    pub test_metrics: Option<ClassificationMetrics>,
}

impl<T> StabilityOutcome<T> {
    /// `t,consistency,jaccard` rows.
    pub fn reports_csv(&self) -> String {
        let mut out = String::from("t,consistency,jaccard\n");
        for r in &self.reports {
            out.push_str(&format!("{},{},{}\n", r.t, r.consistency, r.jaccard));
        }
        out
    }
}

/// Fits stage 1 (if the method has one) and the lasso on `data` as given,
/// with `stage1_seed` in place of `config.rbm.seed`.
pub fn fit_predictor<T: Scalar>(
    data: &DataMatrix<T>,
    config: &StabilityConfig,
    stage1_seed: u64,
) -> Result<ReplicatePredictor<T>> {
    let y = data.binary_labels()?;
    let stage1 = TrainConfig {
        seed: stage1_seed,
        ..config.rbm.clone()
    };
    let rbm = match config.method {
        Method::Lasso => None,
        Method::NrbmLasso => Some(train::train(data, &stage1)?.0),
        Method::RbmLasso => Some(train::train_plain_rbm(data, &stage1)?.0),
    };
    let lasso = match &rbm {
        Some(rbm) => {
            let h = hidden_posteriors(rbm, data)?;
            fit_lasso(h.view(), y, config.beta, &config.lasso)?
        }
        None => fit_lasso(data.values(), y, config.beta, &config.lasso)?,
    };
    Ok(ReplicatePredictor { rbm, lasso })
}

/// Trains the replicate `index`: resample rows, fit stage 1 (if any) and the
/// lasso, and compute input-space feature weights.
pub fn run_replicate<T: Scalar>(
    train_data: &DataMatrix<T>,
    config: &StabilityConfig,
    index: usize,
) -> Result<ReplicateResult<T>> {
    let sample = bootstrap(train_data.rows(), index, config.seed)?;
    let data = train_data.select_rows(&sample.row_indices);
    let seed = rng::derive_seed(config.seed, &[domain::REPLICATE, index as u64]);
    let predictor = fit_predictor(&data, config, seed)?;
    let feature_weights = predictor.feature_weights()?;
    Ok(ReplicateResult {
        replicate_index: index,
        predictor,
        feature_weights,
    })
}

/// Selects top-`T` subsets for every `T` and computes both indices.
pub fn aggregate<T: Scalar>(
    replicates: &[ReplicateResult<T>],
    total_features: usize,
    t_list: &[usize],
) -> Result<Vec<StabilityReport>> {
    t_list
        .iter()
        .map(|&t| {
            let subsets = replicates
                .iter()
                .map(|r| select_top(r.feature_weights.view(), t, r.replicate_index))
                .collect::<Result<Vec<_>>>()?;
            Ok(StabilityReport {
                t,
                consistency: consistency_index(&subsets, total_features)?,
                jaccard: jaccard_index(&subsets)?,
                total_features,
                bootstraps: replicates.len(),
                subsets,
            })
        })
        .collect()
}

/// Full bootstrap protocol. Replicates run in parallel; any failed replicate
/// fails the whole run. When `test` is given, the averaged model is scored
/// on it.
pub fn run_stability_protocol<T: Scalar>(
    train_data: &DataMatrix<T>,
    test: Option<&DataMatrix<T>>,
    config: &StabilityConfig,
) -> Result<StabilityOutcome<T>> {
    if config.bootstraps < 2 {
        return Err(Error::Config("the protocol needs at least two bootstraps".into()));
    }
    if config.method != Method::Lasso {
        config.rbm.validate()?;
    }
    train_data.binary_labels()?;
    let total = train_data.cols();
    if let Some(&t) = config.t_list.iter().find(|&&t| t == 0 || t >= total) {
        return Err(Error::Config(format!(
            "subset size {t} must lie in 1..{total}"
        )));
    }

    let replicates: Vec<ReplicateResult<T>> = (0..config.bootstraps)
        .into_par_iter()
        .map(|i| run_replicate(train_data, config, i))
        .collect::<Result<_>>()?;
    let reports = aggregate(&replicates, total, &config.t_list)?;
    let final_model = AveragedPredictor {
        members: replicates.iter().map(|r| r.predictor.clone()).collect(),
    };
    let test_metrics = match test {
        Some(test) => {
            let y = test.binary_labels()?;
            let scores: Vec<f64> = final_model
                .predict_proba(test.values())?
                .iter()
                .map(|s| s.widen())
                .collect();
            Some(classification_metrics(&scores, y, config.threshold)?)
        }
        None => None,
    };
    Ok(StabilityOutcome {
        reports,
        replicates,
        final_model,
        test_metrics,
    })
}
