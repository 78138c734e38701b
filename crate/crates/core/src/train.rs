//! Training with a quadratic barrier on negative weights.
//!
//! The objective is the data log-likelihood minus `(α/2) Σ f(w_nk)` with
//! `f(x) = x²` for `x < 0` and `0` otherwise. Its stochastic ascent step is
//!
//! ```text
//! w_nk <- w_nk + η (<v_n h_k>_data - <v_n h_k>_model - α min(w_nk, 0))
//! ```
//!
//! with the expectations estimated by contrastive divergence. `α = 0`
//! recovers ordinary RBM training.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_batches, DataMatrix};
use crate::error::{Error, Result};
use crate::rbm::{cd_statistics, ChainMode, Gradient, RbmParams};
use crate::rng::{self, domain, RowStreams};
use crate::scalar::{logit, Scalar};

/// Clamp applied to column means before taking the logit at initialization.
pub const INIT_MEAN_CLAMP: f64 = 1e-4;

/// Weights below `-NEGATIVE_WEIGHT_TOLERANCE` count as negative in traces.
pub const NEGATIVE_WEIGHT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Learning rate shared by all parameter groups.
    pub eta: f64,
    /// Barrier strength; 0 disables the barrier.
    pub alpha: f64,
    pub cd_k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_count: usize,
    pub hidden_bias_init: f64,
    /// Initial weights are uniform in `[0, weight_init_max)`.
    pub weight_init_max: f64,
    pub chain_mode: ChainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            alpha: 0.1,
            cd_k: 1,
            batch_size: 100,
            epochs: 100,
            seed: 0,
            hidden_count: 100,
            hidden_bias_init: -2.0,
            weight_init_max: 0.01,
            chain_mode: ChainMode::MeanFieldVisible,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be non-negative");
        }
        if self.cd_k == 0 {
            return fail("cd_k must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.hidden_count == 0 {
            return fail("hidden count must be at least 1");
        }
        if !(self.weight_init_max > 0.0 && self.weight_init_max.is_finite()) {
            return fail("weight_init_max must be positive");
        }
        if !self.hidden_bias_init.is_finite() {
            return fail("hidden_bias_init must be finite");
        }
        Ok(())
    }
}

/// `f(x) = x²` for `x < 0`, else 0.
#[inline]
pub fn barrier<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        x * x
    } else {
        T::zero()
    }
}

/// `(α/2) Σ f(w_nk)`.
pub fn barrier_penalty<T: Scalar>(weights: ArrayView2<'_, T>, alpha: f64) -> T {
    let sum: T = weights.iter().map(|&w| barrier(w)).sum();
    T::cast(alpha / 2.0) * sum
}

/// Entrywise `min(w, 0)`.
pub fn negative_part<T: Scalar>(weights: ArrayView2<'_, T>) -> Array2<T> {
    weights.mapv(|w| w.min(T::zero()))
}

/// Weight update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    /// Contrastive divergence with the barrier term.
    Nonnegative { alpha: f64 },
    /// Contrastive divergence alone.
    Plain,
}

impl UpdateRule {
    pub fn for_config(config: &TrainConfig) -> Self {
        UpdateRule::Nonnegative { alpha: config.alpha }
    }
}

/// Ascent direction for one batch, barrier included.
pub fn batch_direction<T: Scalar>(
    params: &RbmParams<T>,
    batch: ArrayView2<'_, T>,
    config: &TrainConfig,
    rule: UpdateRule,
    streams: &RowStreams,
) -> Result<Gradient<T>> {
    let (data, model) = cd_statistics(params, batch, config.cd_k, streams, config.chain_mode)?;
    let mut grad = Gradient::from_stats(&data, &model);
    if let UpdateRule::Nonnegative { alpha } = rule {
        let alpha = T::cast(alpha);
        let neg = negative_part(params.weights());
        grad.weights.zip_mut_with(&neg, |g, &n| *g -= alpha * n);
    }
    Ok(grad)
}

/// Applies one update in place; on a non-finite result the parameters are
/// left untouched and [`Error::Numeric`] is returned.
pub fn update_step<T: Scalar>(
    params: &mut RbmParams<T>,
    batch: ArrayView2<'_, T>,
    config: &TrainConfig,
    rule: UpdateRule,
    streams: &RowStreams,
) -> Result<()> {
    let grad = batch_direction(params, batch, config, rule, streams)?;
    params.apply(&grad, T::cast(config.eta)).map_err(|_| {
        Error::Numeric("update produced non-finite parameters; lower the learning rate".into())
    })
}

/// Initial parameters: visible biases match the data marginals, weights are
/// small and positive, hidden biases start at `hidden_bias_init`.
pub fn init_params<T: Scalar>(data: &DataMatrix<T>, config: &TrainConfig) -> Result<RbmParams<T>> {
    config.validate()?;
    let (lo, hi) = (T::cast(INIT_MEAN_CLAMP), T::cast(1.0 - INIT_MEAN_CLAMP));
    let a = data.column_means().mapv(|m| logit(m.max(lo).min(hi)));
    let b = Array1::from_elem(config.hidden_count, T::cast(config.hidden_bias_init));
    let mut rng = rng::stream(config.seed, &[domain::INIT_WEIGHTS]);
    let w = Array2::from_shape_simple_fn((data.cols(), config.hidden_count), || {
        T::cast(rng.gen::<f64>() * config.weight_init_max)
    });
    RbmParams::new(a, b, w)
}

/// Hidden posteriors `p(h_k = 1 | v)` for every row: the learned representation.
pub fn hidden_posteriors<T: Scalar>(params: &RbmParams<T>, data: &DataMatrix<T>) -> Result<Array2<T>> {
    params.hidden_conditional_batch(data.values())
}

// ---------------------------------------------------------------------------
// Dead units

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadUnitConfig {
    pub thresholds: Vec<f64>,
}

impl Default for DeadUnitConfig {
    fn default() -> Self {
        Self {
            thresholds: (1..=6).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

impl DeadUnitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("threshold set is empty".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("threshold {t} must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadUnitReport {
    pub thresholds: Vec<f64>,
    /// Per hidden unit: `Σ_n |w_nk| / N`.
    pub normalized_l1: Vec<f64>,
    pub used_per_threshold: Vec<usize>,
    pub dead_masks: Vec<Vec<bool>>,
    pub averaged_used: f64,
}

/// A unit is dead under `τ` when its normalized weight-column ℓ1 norm is at
/// most `τ`. Used counts are averaged over the threshold set.
pub fn dead_units<T: Scalar>(params: &RbmParams<T>, config: &DeadUnitConfig) -> Result<DeadUnitReport> {
    config.validate()?;
    let n = params.n_visible() as f64;
    let normalized_l1: Vec<f64> = params
        .weights()
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|w| w.abs().widen()).sum::<f64>() / n)
        .collect();
    let dead_masks: Vec<Vec<bool>> = config
        .thresholds
        .iter()
        .map(|&tau| normalized_l1.iter().map(|&l| l <= tau).collect())
        .collect();
    let used_per_threshold: Vec<usize> = dead_masks
        .iter()
        .map(|mask| mask.iter().filter(|&&dead| !dead).count())
        .collect();
    let averaged_used =
        used_per_threshold.iter().sum::<usize>() as f64 / used_per_threshold.len() as f64;
    Ok(DeadUnitReport {
        thresholds: config.thresholds.clone(),
        normalized_l1,
        used_per_threshold,
        dead_masks,
        averaged_used,
    })
}

// ---------------------------------------------------------------------------
// Histograms and traces

/// Counts weights per bin `[e_i, e_{i+1})`; the last bin is closed and values
/// outside the edges fall into the end bins.
pub fn weight_histogram<T: Scalar>(weights: ArrayView2<'_, T>, edges: &[f64]) -> Result<Vec<u64>> {
    if edges.len() < 2 {
        return Err(Error::Config("a histogram needs at least two edges".into()));
    }
    if edges.windows(2).any(|p| p[0].partial_cmp(&p[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::Config("histogram edges must be strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for w in weights.iter().map(|w| w.widen()) {
        // partition_point gives the number of edges <= w.
        let idx = edges.partition_point(|&e| e <= w).saturating_sub(1).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Index of the bin that contains 0, if any.
pub fn zero_bin(edges: &[f64]) -> Option<usize> {
    edges.windows(2).position(|p| p[0] <= 0.0 && 0.0 < p[1])
}

/// Default trace bins: width 0.002 on `[-0.02, 0.02]`, plus two wide end bins.
pub fn default_bin_edges() -> Vec<f64> {
    let mut edges = vec![-1.0];
    edges.extend((-10..=10).map(|i| i as f64 * 0.002));
    edges.push(1.0);
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub bin_edges: Vec<f64>,
    pub dead_units: DeadUnitConfig,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            bin_edges: default_bin_edges(),
            dead_units: DeadUnitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the initialization.
    pub epoch: usize,
    /// Mean squared error of the one-step mean-field reconstruction.
    pub reconstruction_error: f64,
    pub barrier_penalty: f64,
    /// Fraction of weights below `-NEGATIVE_WEIGHT_TOLERANCE`.
    pub negative_fraction: f64,
    pub histogram: Vec<u64>,
    pub used_units: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub bin_edges: Vec<f64>,
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    /// CSV with one row per epoch and one `bin_i` column per histogram bin.
    pub fn to_csv(&self) -> String {
        let bins = self.bin_edges.len().saturating_sub(1);
        let mut out = String::from("epoch,reconstruction_error,barrier_penalty,negative_fraction,used_units");
        for i in 0..bins {
            out.push_str(&format!(",bin_{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.epoch, r.reconstruction_error, r.barrier_penalty, r.negative_fraction, r.used_units
            ));
            for c in &r.histogram {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn reconstruction_error<T: Scalar>(params: &RbmParams<T>, data: ArrayView2<'_, T>) -> Result<f64> {
    let recon = params.reconstruct(data)?;
    let sse: f64 = recon
        .iter()
        .zip(data.iter())
        .map(|(r, x)| (r.widen() - x.widen()).powi(2))
        .sum();
    Ok(sse / recon.len() as f64)
}

fn epoch_record<T: Scalar>(
    epoch: usize,
    params: &RbmParams<T>,
    data: &DataMatrix<T>,
    alpha: f64,
    opts: &TraceOptions,
) -> Result<EpochRecord> {
    let w = params.weights();
    let negative = w
        .iter()
        .filter(|x| x.widen() < -NEGATIVE_WEIGHT_TOLERANCE)
        .count();
    Ok(EpochRecord {
        epoch,
        reconstruction_error: reconstruction_error(params, data.values())?,
        barrier_penalty: barrier_penalty(w, alpha).widen(),
        negative_fraction: negative as f64 / w.len() as f64,
        histogram: weight_histogram(w, &opts.bin_edges)?,
        used_units: dead_units(params, &opts.dead_units)?.averaged_used,
    })
}

/// Runs `epochs` passes of mini-batch updates starting from `params`.
///
/// Batch order comes from `(seed, epoch)` and chain noise from
/// `(seed, epoch, batch, row)`, so identical inputs give bit-identical output.
pub fn train_from<T: Scalar>(
    mut params: RbmParams<T>,
    data: &DataMatrix<T>,
    config: &TrainConfig,
    rule: UpdateRule,
    opts: &TraceOptions,
) -> Result<(RbmParams<T>, TrainTrace)> {
    config.validate()?;
    if data.cols() != params.n_visible() {
        return Err(Error::dim(format!(
            "data has {} columns, model has {} visible units",
            data.cols(),
            params.n_visible()
        )));
    }
    let trace_alpha = match rule {
        UpdateRule::Nonnegative { alpha } => alpha,
        UpdateRule::Plain => 0.0,
    };
    let mut records = vec![epoch_record(0, &params, data, trace_alpha, opts)?];
    for epoch in 1..=config.epochs {
        let plan = make_batches(data.rows(), config.batch_size, config.seed, epoch as u64)?;
        for (bi, rows) in plan.batches().enumerate() {
            let batch = data.values().select(Axis(0), rows);
            let streams = RowStreams::new(config.seed, &[domain::CD_CHAIN, epoch as u64, bi as u64]);
            update_step(&mut params, batch.view(), config, rule, &streams).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {bi}: {m}")),
                other => other,
            })?;
        }
        records.push(epoch_record(epoch, &params, data, trace_alpha, opts)?);
    }
    Ok((
        params,
        TrainTrace {
            bin_edges: opts.bin_edges.clone(),
            records,
        },
    ))
}

/// Trains a nonnegative RBM with barrier strength `config.alpha`.
pub fn train<T: Scalar>(data: &DataMatrix<T>, config: &TrainConfig) -> Result<(RbmParams<T>, TrainTrace)> {
    train_with_options(data, config, &TraceOptions::default())
}

pub fn train_with_options<T: Scalar>(
    data: &DataMatrix<T>,
    config: &TrainConfig,
    opts: &TraceOptions,
) -> Result<(RbmParams<T>, TrainTrace)> {
    let init = init_params(data, config)?;
    train_from(init, data, config, UpdateRule::for_config(config), opts)
}

/// Trains an ordinary RBM; `config.alpha` is ignored.
pub fn train_plain_rbm<T: Scalar>(
    data: &DataMatrix<T>,
    config: &TrainConfig,
) -> Result<(RbmParams<T>, TrainTrace)> {
    let init = init_params(data, config)?;
    train_from(init, data, config, UpdateRule::Plain, &TraceOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn barrier_values() {
        assert_eq!(barrier(-2.0f64), 4.0);
        assert_eq!(barrier(3.0f64), 0.0);
        assert_eq!(barrier_penalty(array![[0.5, 0.0]].view(), 1.0), 0.0f64);
        assert_eq!(barrier_penalty(array![[-1.0, -2.0]].view(), 1.0), 2.5f64);
    }

    #[test]
    fn negative_part_values() {
        let n = negative_part(array![[-0.5, 0.3, 0.0]].view());
        assert_eq!(n, array![[-0.5, 0.0, 0.0]]);
    }

    #[test]
    fn barrier_only_update_pulls_toward_zero() {
        // Zero data/model difference: a single visible unit that is always
        // off and a model whose chain never turns it on.
        let mut params = RbmParams::<f64>::new(array![-800.0], array![-800.0], array![[-0.1]]).unwrap();
        let batch = array![[0.0]];
        let config = TrainConfig { eta: 0.1, alpha: 1.0, ..Default::default() };
        let streams = RowStreams::new(0, &[0]);
        update_step(
            &mut params,
            batch.view(),
            &config,
            UpdateRule::Nonnegative { alpha: 1.0 },
            &streams,
        )
        .unwrap();
        assert!((params.weights()[[0, 0]] - (-0.09)).abs() < 1e-15);
    }

    #[test]
    fn init_protocol() {
        let data = DataMatrix::new(array![[1.0, 0.5, 0.0], [1.0, 0.5, 0.0]], None).unwrap();
        let config = TrainConfig { hidden_count: 7, ..Default::default() };
        let p = init_params(&data, &config).unwrap();
        assert_eq!(p.visible_bias()[1], 0.0);
        let expect = ((1.0 - 1e-4) / 1e-4f64).ln();
        assert!((p.visible_bias()[0] - expect).abs() < 1e-9);
        assert!((p.visible_bias()[0] - 9.2102).abs() < 1e-4);
        assert!((p.visible_bias()[2] + expect).abs() < 1e-9);
        assert!(p.weights().iter().all(|&w| (0.0..=0.01).contains(&w)));
        assert!(p.hidden_bias().iter().all(|&b| b == -2.0));
    }

    #[test]
    fn dead_unit_examples() {
        let mut w = Array2::<f64>::zeros((10, 3));
        w.column_mut(1).fill(0.005);
        w.column_mut(2).fill(0.5);
        let p = RbmParams::new(Array1::zeros(10), Array1::zeros(3), w).unwrap();
        let r = dead_units(&p, &DeadUnitConfig::default()).unwrap();
        assert!(r.dead_masks.iter().all(|m| m[0] && m[1] && !m[2]));
        assert_eq!(r.used_per_threshold, vec![1; 6]);
        assert_eq!(r.averaged_used, 1.0);
        assert!(dead_units(&p, &DeadUnitConfig { thresholds: vec![] }).is_err());
        assert!(dead_units(&p, &DeadUnitConfig { thresholds: vec![-0.1] }).is_err());
    }

    #[test]
    fn identical_columns_share_fate() {
        let w = Array2::from_elem((4, 5), 0.03);
        let p = RbmParams::new(Array1::zeros(4), Array1::zeros(5), w).unwrap();
        let r = dead_units(&p, &DeadUnitConfig::default()).unwrap();
        assert!(r.used_per_threshold.iter().all(|&u| u == 0 || u == 5));
    }

    #[test]
    fn histogram_bins() {
        let w = Array2::<f64>::zeros((3, 4));
        let counts = weight_histogram(w.view(), &[-1.0, -0.5, 0.5, 1.0]).unwrap();
        assert_eq!(counts, vec![0, 12, 0]);
        let w = array![[-5.0, 5.0, 1.0, -1.0]];
        let counts = weight_histogram(w.view(), &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(counts, vec![2, 2]);
        assert!(weight_histogram(w.view(), &[0.0, 0.0]).is_err());
        assert_eq!(zero_bin(&[-1.0, 0.0, 1.0]), Some(1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { eta: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { weight_init_max: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn posteriors_of_zero_weight_model() {
        let p = RbmParams::new(Array1::zeros(2), array![0.0, -1.0], Array2::zeros((2, 2))).unwrap();
        let data = DataMatrix::new(array![[1.0, 0.0], [0.3, 0.7]], None).unwrap();
        let h = hidden_posteriors(&p, &data).unwrap();
        assert!(h.column(0).iter().all(|&x| x == 0.5));
        assert!(h.column(1).iter().all(|&x| x == crate::scalar::sigmoid(-1.0)));
    }
}
