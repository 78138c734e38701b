//! Restricted Boltzmann machine over binary visible and hidden units.
//!
//! The energy of a joint configuration is `E(v, h) = -(aᵀv + bᵀh + vᵀWh)`
//! with visible biases `a` (length `N`), hidden biases `b` (length `K`) and
//! weights `W` (`N × K`). Both conditionals factorize over units:
//!
//! ```text
//! p(h_k = 1 | v) = sig(b_k + Σ_n v_n w_nk)
//! p(v_n = 1 | h) = sig(a_n + Σ_k w_nk h_k)
//! ```
//!
//! Visible inputs may be fractional in `[0, 1]`; they are then treated as
//! empirical activation probabilities.

pub mod exact;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RowStreams, StreamRng};
use crate::scalar::{sigmoid, Scalar};

/// Parameters `{a, b, W}` of an RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams<T> {
    visible_bias: Array1<T>,
    hidden_bias: Array1<T>,
    weights: Array2<T>,
}

impl<T: Scalar> RbmParams<T> {
    pub fn new(visible_bias: Array1<T>, hidden_bias: Array1<T>, weights: Array2<T>) -> Result<Self> {
        let (n, k) = weights.dim();
        if n == 0 || k == 0 {
            return Err(Error::dim("an RBM needs at least one visible and one hidden unit"));
        }
        if visible_bias.len() != n || hidden_bias.len() != k {
            return Err(Error::dim(format!(
                "biases ({}, {}) do not match weights {n}x{k}",
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let params = Self {
            visible_bias,
            hidden_bias,
            weights,
        };
        params.check_finite()?;
        Ok(params)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        Self::new(
            Array1::zeros(n_visible),
            Array1::zeros(n_hidden),
            Array2::zeros((n_visible, n_hidden)),
        )
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn visible_bias(&self) -> ArrayView1<'_, T> {
        self.visible_bias.view()
    }

    pub fn hidden_bias(&self) -> ArrayView1<'_, T> {
        self.hidden_bias.view()
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.weights.view()
    }

    pub fn into_parts(self) -> (Array1<T>, Array1<T>, Array2<T>) {
        (self.visible_bias, self.hidden_bias, self.weights)
    }

    /// Swaps the roles of the two layers.
    pub fn transposed(&self) -> Self {
        Self {
            visible_bias: self.hidden_bias.clone(),
            hidden_bias: self.visible_bias.clone(),
            weights: self.weights.t().to_owned(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self
            .visible_bias
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.weights.iter())
            .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite RBM parameter".into()))
        }
    }

    /// Adds `scale * delta` to every parameter, failing without modifying
    /// `self` if any result is non-finite.
    pub fn apply(&mut self, delta: &Gradient<T>, scale: T) -> Result<()> {
        let a = &self.visible_bias + &(&delta.visible_bias * scale);
        let b = &self.hidden_bias + &(&delta.hidden_bias * scale);
        let w = &self.weights + &(&delta.weights * scale);
        let next = Self {
            visible_bias: a,
            hidden_bias: b,
            weights: w,
        };
        next.check_finite()?;
        *self = next;
        Ok(())
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.n_visible() {
            return Err(Error::dim(format!(
                "visible vector has length {len}, model has {} visible units",
                self.n_visible()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, len: usize) -> Result<()> {
        if len != self.n_hidden() {
            return Err(Error::dim(format!(
                "hidden vector has length {len}, model has {} hidden units",
                self.n_hidden()
            )));
        }
        Ok(())
    }

    /// `E(v, h) = -(aᵀv + bᵀh + vᵀWh)`.
    pub fn energy(&self, v: ArrayView1<'_, T>, h: ArrayView1<'_, T>) -> Result<T> {
        self.check_visible(v.len())?;
        self.check_hidden(h.len())?;
        let coupling = v.dot(&self.weights.dot(&h));
        Ok(-(self.visible_bias.dot(&v) + self.hidden_bias.dot(&h) + coupling))
    }

    /// `p(h_k = 1 | v)` for every hidden unit.
    pub fn hidden_conditional(&self, v: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_visible(v.len())?;
        let mut act = v.dot(&self.weights) + &self.hidden_bias;
        act.mapv_inplace(sigmoid);
        Ok(act)
    }

    /// `p(v_n = 1 | h)` for every visible unit.
    pub fn visible_conditional(&self, h: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.check_hidden(h.len())?;
        let mut act = self.weights.dot(&h) + &self.visible_bias;
        act.mapv_inplace(sigmoid);
        Ok(act)
    }

    /// Row-wise [`hidden_conditional`](Self::hidden_conditional): `M × N` in, `M × K` out.
    pub fn hidden_conditional_batch(&self, v: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_visible(v.ncols())?;
        let mut act = v.dot(&self.weights) + &self.hidden_bias;
        act.mapv_inplace(sigmoid);
        Ok(act)
    }

    /// Row-wise [`visible_conditional`](Self::visible_conditional): `M × K` in, `M × N` out.
    pub fn visible_conditional_batch(&self, h: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_hidden(h.ncols())?;
        let mut act = h.dot(&self.weights.t()) + &self.visible_bias;
        act.mapv_inplace(sigmoid);
        Ok(act)
    }

    /// One-step mean-field reconstruction `p(v | p(h | v))`.
    pub fn reconstruct(&self, v: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let h = self.hidden_conditional_batch(v)?;
        self.visible_conditional_batch(h.view())
    }
}

/// Per-parameter update direction, laid out like [`RbmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub visible_bias: Array1<T>,
    pub hidden_bias: Array1<T>,
    pub weights: Array2<T>,
}

impl<T: Scalar> Gradient<T> {
    /// Positive-minus-negative phase statistics.
    pub fn from_stats(data: &SufficientStats<T>, model: &SufficientStats<T>) -> Self {
        Self {
            visible_bias: &data.v_mean - &model.v_mean,
            hidden_bias: &data.h_mean - &model.h_mean,
            weights: &data.vh - &model.vh,
        }
    }
}

/// Independent Bernoulli draws with the given success probabilities.
pub fn sample_bernoulli<T: Scalar, R: Rng + ?Sized>(probs: ArrayView1<'_, T>, rng: &mut R) -> Array1<T> {
    probs.mapv(|p| bernoulli(p, rng))
}

#[inline]
fn bernoulli<T: Scalar, R: Rng + ?Sized>(p: T, rng: &mut R) -> T {
    if rng.gen::<f64>() < p.widen() {
        T::one()
    } else {
        T::zero()
    }
}

/// Samples every row of `probs` with its own stream.
fn sample_rows<T: Scalar>(probs: &Array2<T>, rngs: &mut [StreamRng]) -> Array2<T> {
    let (m, width) = probs.dim();
    debug_assert_eq!(m, rngs.len());
    let probs = probs.as_standard_layout();
    let input = probs.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); m * width];
    out.par_chunks_mut(width.max(1))
        .zip(input.par_chunks(width.max(1)))
        .zip(rngs.par_iter_mut())
        .with_min_len(64)
        .for_each(|((dst, src), rng)| {
            for (d, &p) in dst.iter_mut().zip(src) {
                *d = bernoulli(p, rng);
            }
        });
    Array2::from_shape_vec((m, width), out).expect("shape preserved")
}

/// State of a block Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState<T> {
    pub v: Array1<T>,
    pub h: Array1<T>,
    pub step: usize,
}

impl<T: Scalar> GibbsState<T> {
    /// Starts a chain at `v` with `h` at its conditional mean.
    pub fn new(params: &RbmParams<T>, v: Array1<T>) -> Result<Self> {
        let h = params.hidden_conditional(v.view())?;
        Ok(Self { v, h, step: 0 })
    }

    /// One full alternation: `h ~ p(h | v)` then `v ~ p(v | h)`, both sampled.
    pub fn sweep<R: Rng + ?Sized>(&mut self, params: &RbmParams<T>, rng: &mut R) -> Result<()> {
        let ph = params.hidden_conditional(self.v.view())?;
        self.h = sample_bernoulli(ph.view(), rng);
        let pv = params.visible_conditional(self.h.view())?;
        self.v = sample_bernoulli(pv.view(), rng);
        self.step += 1;
        Ok(())
    }
}

/// Averages of `v hᵀ`, `v` and `h` over `count` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T> {
    pub vh: Array2<T>,
    pub v_mean: Array1<T>,
    pub h_mean: Array1<T>,
    pub count: usize,
}

impl<T: Scalar> SufficientStats<T> {
    /// Statistics of paired rows `v` (`M × N`) and `h` (`M × K`).
    pub fn from_rows(v: ArrayView2<'_, T>, h: ArrayView2<'_, T>) -> Result<Self> {
        let m = v.nrows();
        if m == 0 || h.nrows() != m {
            return Err(Error::dim(format!(
                "statistics need matching non-empty row counts, got {m} and {}",
                h.nrows()
            )));
        }
        let inv = T::one() / T::cast(m as f64);
        Ok(Self {
            vh: v.t().dot(&h) * inv,
            v_mean: v.sum_axis(Axis(0)) * inv,
            h_mean: h.sum_axis(Axis(0)) * inv,
            count: m,
        })
    }
}

/// How the negative-phase chain treats visible units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    /// Sample binary hidden states, propagate visible probabilities.
    #[default]
    MeanFieldVisible,
    /// Sample both layers, as in plain block Gibbs sampling.
    Sampled,
}

/// Positive (data) and negative (model) statistics for one batch.
///
/// The data side pairs each input row with `p(h | v)`. The negative side runs
/// one chain per row, started at the data, for `k_steps` alternations; row
/// `i` draws from `streams.row(i)`, so the result does not depend on how rows
/// are scheduled across threads. The final statistics use visible states and
/// hidden probabilities `p(h | v)`.
pub fn cd_statistics<T: Scalar>(
    params: &RbmParams<T>,
    batch: ArrayView2<'_, T>,
    k_steps: usize,
    streams: &RowStreams,
    mode: ChainMode,
) -> Result<(SufficientStats<T>, SufficientStats<T>)> {
    if k_steps == 0 {
        return Err(Error::Config("CD needs at least one Gibbs step".into()));
    }
    let h0 = params.hidden_conditional_batch(batch)?;
    let data = SufficientStats::from_rows(batch, h0.view())?;

    let mut rngs: Vec<StreamRng> = (0..batch.nrows()).map(|i| streams.row(i)).collect();
    let mut h_prob = h0;
    let mut v = batch.to_owned();
    for _ in 0..k_steps {
        let h_sample = sample_rows(&h_prob, &mut rngs);
        let v_prob = params.visible_conditional_batch(h_sample.view())?;
        v = match mode {
            ChainMode::MeanFieldVisible => v_prob,
            ChainMode::Sampled => sample_rows(&v_prob, &mut rngs),
        };
        h_prob = params.hidden_conditional_batch(v.view())?;
    }
    let model = SufficientStats::from_rows(v.view(), h_prob.view())?;
    Ok((data, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    fn scalar_model() -> RbmParams<f64> {
        RbmParams::new(array![1.0], array![-2.0], array![[3.0]]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let z = RbmParams::<f64>::zeros(3, 2).unwrap();
        assert_eq!(z.energy(array![1., 0., 1.].view(), array![1., 1.].view()).unwrap(), 0.0);
        let m = scalar_model();
        assert_eq!(m.energy(array![1.].view(), array![1.].view()).unwrap(), -2.0);
        assert_eq!(m.energy(array![0.].view(), array![0.].view()).unwrap(), 0.0);
        assert!(matches!(
            m.energy(array![1., 1.].view(), array![1.].view()),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn hidden_conditional_examples() {
        let z = RbmParams::<f64>::zeros(2, 3).unwrap();
        assert!(z
            .hidden_conditional(array![1., 0.].view())
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));

        let sat = RbmParams::new(array![0.0], array![-750.0], array![[0.0]]).unwrap();
        let p = sat.hidden_conditional(array![1.].view()).unwrap()[0];
        assert_eq!(p, 0.0);

        let m = RbmParams::new(array![0.0, 0.0], array![0.0], array![[2.0], [-1.0]]).unwrap();
        let p = m.hidden_conditional(array![1., 1.].view()).unwrap()[0];
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn visible_conditional_examples() {
        let z = RbmParams::<f64>::zeros(2, 3).unwrap();
        assert!(z
            .visible_conditional(array![1., 0., 1.].view())
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));
        let m = RbmParams::new(array![1.0], array![0.0], array![[-1.0]]).unwrap();
        assert_eq!(m.visible_conditional(array![1.].view()).unwrap()[0], 0.5);
    }

    #[test]
    fn visible_conditional_is_transposed_hidden_conditional() {
        let m = RbmParams::new(
            array![0.3f64, -0.2, 0.1],
            array![0.5, -1.0],
            array![[0.2, -0.4], [1.1, 0.0], [-0.7, 0.9]],
        )
        .unwrap();
        let h = array![1.0, 0.0];
        assert_eq!(
            m.visible_conditional(h.view()).unwrap(),
            m.transposed().hidden_conditional(h.view()).unwrap()
        );
    }

    #[test]
    fn batch_conditionals_match_rows() {
        let m = RbmParams::new(
            array![0.3f64, -0.2, 0.1],
            array![0.5, -1.0],
            array![[0.2, -0.4], [1.1, 0.0], [-0.7, 0.9]],
        )
        .unwrap();
        let x = array![[1., 0., 0.5], [0.2, 0.9, 1.0]];
        let hb = m.hidden_conditional_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = m.hidden_conditional(row).unwrap();
            for k in 0..2 {
                assert!((hb[[i, k]] - single[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bernoulli_extremes_and_rate() {
        let mut r = rng::stream(1, &[0]);
        assert!(sample_bernoulli(Array1::<f64>::zeros(50).view(), &mut r).iter().all(|&x| x == 0.0));
        assert!(sample_bernoulli(Array1::<f64>::ones(50).view(), &mut r).iter().all(|&x| x == 1.0));
        let probs = Array1::from_elem(100_000, 0.3f64);
        let mean = sample_bernoulli(probs.view(), &mut r).mean().unwrap();
        assert!((mean - 0.3).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn cd1_on_zero_model_gives_half_data_statistics() {
        let m = RbmParams::<f64>::zeros(4, 3).unwrap();
        let batch = Array2::<f64>::ones((5, 4));
        let streams = RowStreams::new(3, &[9]);
        let (data, model) = cd_statistics(&m, batch.view(), 1, &streams, ChainMode::default()).unwrap();
        assert!(data.vh.iter().all(|&x| x == 0.5));
        assert!(model.vh.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(data.count, 5);
    }

    #[test]
    fn cd_is_deterministic_given_streams() {
        let m = RbmParams::new(
            array![0.3, -0.2],
            array![0.5, -1.0],
            array![[0.2, -0.4], [1.1, 0.0]],
        )
        .unwrap();
        let batch = array![[1., 0.], [0.5, 0.5], [0., 1.]];
        let s = RowStreams::new(5, &[1, 2]);
        let a = cd_statistics(&m, batch.view(), 3, &s, ChainMode::Sampled).unwrap();
        let b = cd_statistics(&m, batch.view(), 3, &s, ChainMode::Sampled).unwrap();
        assert_eq!(a, b);
        assert!(cd_statistics(&m, batch.view(), 0, &s, ChainMode::Sampled).is_err());
    }

    #[test]
    fn apply_rejects_non_finite_without_mutation() {
        let mut m = RbmParams::<f64>::zeros(1, 1).unwrap();
        let before = m.clone();
        let g = Gradient {
            visible_bias: array![f64::NAN],
            hidden_bias: array![0.0],
            weights: array![[0.0]],
        };
        assert!(matches!(m.apply(&g, 1.0), Err(Error::Numeric(_))));
        assert_eq!(m, before);
    }

    #[test]
    fn works_in_single_precision() {
        let m = RbmParams::<f32>::new(array![0.0, 0.0], array![0.0], array![[2.0], [-1.0]]).unwrap();
        let p = m.hidden_conditional(array![1.0f32, 1.0].view()).unwrap()[0];
        assert!((p - 0.731_058_6).abs() < 1e-6);
    }
}
