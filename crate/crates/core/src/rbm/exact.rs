//! Exact quantities by brute-force enumeration of all `2^(N+K)` joint states.
//!
//! These are test oracles for small models. Nothing here uses the factorized
//! conditionals: every sum runs over explicit `(v, h)` configurations.

use ndarray::{Array1, Array2};

use super::{Gradient, RbmParams, SufficientStats};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `N + K` accepted by the enumeration routines.
pub const ORACLE_LIMIT: usize = 20;

fn check_size<T: Scalar>(params: &RbmParams<T>) -> Result<()> {
    let (n, k) = (params.n_visible(), params.n_hidden());
    if n + k > ORACLE_LIMIT {
        return Err(Error::OracleSize {
            visible: n,
            hidden: k,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(())
}

fn bits<T: Scalar>(mask: usize, len: usize) -> Array1<T> {
    Array1::from_shape_fn(len, |i| if mask >> i & 1 == 1 { T::one() } else { T::zero() })
}

/// Streaming `log Σ exp`.
#[derive(Debug, Clone, Copy)]
struct LogSumExp<T> {
    max: T,
    sum: T,
}

impl<T: Scalar> LogSumExp<T> {
    fn new() -> Self {
        Self {
            max: T::neg_infinity(),
            sum: T::zero(),
        }
    }

    fn push(&mut self, x: T) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + T::one();
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> T {
        self.max + self.sum.ln()
    }
}

/// `-E(v, h)` from the defining sum.
fn neg_energy<T: Scalar>(params: &RbmParams<T>, v: &Array1<T>, h: &Array1<T>) -> T {
    let (a, b, w) = (params.visible_bias(), params.hidden_bias(), params.weights());
    let mut s = T::zero();
    for n in 0..v.len() {
        s += a[n] * v[n];
        for k in 0..h.len() {
            s += v[n] * w[[n, k]] * h[k];
        }
    }
    for k in 0..h.len() {
        s += b[k] * h[k];
    }
    s
}

fn all_states<T: Scalar>(len: usize) -> Vec<Array1<T>> {
    (0..1usize << len).map(|m| bits(m, len)).collect()
}

/// `log Z`, summed over every joint configuration in log space.
pub fn log_partition<T: Scalar>(params: &RbmParams<T>) -> Result<T> {
    check_size(params)?;
    let vs = all_states::<T>(params.n_visible());
    let hs = all_states::<T>(params.n_hidden());
    let mut acc = LogSumExp::new();
    for v in &vs {
        for h in &hs {
            acc.push(neg_energy(params, v, h));
        }
    }
    Ok(acc.value())
}

/// The partition function `Z = Σ_{v,h} e^{-E(v,h)}`.
pub fn exact_partition<T: Scalar>(params: &RbmParams<T>) -> Result<T> {
    Ok(log_partition(params)?.exp())
}

fn check_binary_rows<T: Scalar>(params: &RbmParams<T>, data: &DataMatrix<T>) -> Result<()> {
    if data.cols() != params.n_visible() {
        return Err(Error::dim(format!(
            "data has {} columns, model has {} visible units",
            data.cols(),
            params.n_visible()
        )));
    }
    if !data.is_binary() {
        return Err(Error::Range("exact likelihood needs binary rows".into()));
    }
    Ok(())
}

/// Mean over rows of `log p(v) = log Σ_h e^{-E(v,h)} - log Z`.
pub fn exact_loglik<T: Scalar>(params: &RbmParams<T>, data: &DataMatrix<T>) -> Result<T> {
    check_size(params)?;
    check_binary_rows(params, data)?;
    let log_z = log_partition(params)?;
    let hs = all_states::<T>(params.n_hidden());
    let mut total = T::zero();
    for row in data.values().rows() {
        let v = row.to_owned();
        let mut acc = LogSumExp::new();
        for h in &hs {
            acc.push(neg_energy(params, &v, h));
        }
        total += acc.value() - log_z;
    }
    Ok(total / T::cast(data.rows() as f64))
}

/// `E_p[v hᵀ]`, `E_p[v]` and `E_p[h]` under the joint Boltzmann distribution.
pub fn exact_model_expectation<T: Scalar>(params: &RbmParams<T>) -> Result<SufficientStats<T>> {
    check_size(params)?;
    let (n, k) = (params.n_visible(), params.n_hidden());
    let log_z = log_partition(params)?;
    let vs = all_states::<T>(n);
    let hs = all_states::<T>(k);
    let mut vh = Array2::zeros((n, k));
    let mut v_mean = Array1::zeros(n);
    let mut h_mean = Array1::zeros(k);
    for v in &vs {
        for h in &hs {
            let p = (neg_energy(params, v, h) - log_z).exp();
            for i in 0..n {
                v_mean[i] += p * v[i];
                for j in 0..k {
                    vh[[i, j]] += p * v[i] * h[j];
                }
            }
            for j in 0..k {
                h_mean[j] += p * h[j];
            }
        }
    }
    Ok(SufficientStats {
        vh,
        v_mean,
        h_mean,
        count: vs.len() * hs.len(),
    })
}

/// Data-side statistics with `p(h | v)` obtained by enumerating `h`.
pub fn exact_data_expectation<T: Scalar>(
    params: &RbmParams<T>,
    data: &DataMatrix<T>,
) -> Result<SufficientStats<T>> {
    check_size(params)?;
    if data.cols() != params.n_visible() {
        return Err(Error::dim("data width does not match the model"));
    }
    let (n, k) = (params.n_visible(), params.n_hidden());
    let hs = all_states::<T>(k);
    let mut vh = Array2::zeros((n, k));
    let mut v_mean = Array1::zeros(n);
    let mut h_mean = Array1::zeros(k);
    for row in data.values().rows() {
        let v = row.to_owned();
        let scores: Vec<T> = hs.iter().map(|h| neg_energy(params, &v, h)).collect();
        let mut acc = LogSumExp::new();
        scores.iter().for_each(|&s| acc.push(s));
        let log_norm = acc.value();
        let mut h_post = Array1::<T>::zeros(k);
        for (h, &s) in hs.iter().zip(&scores) {
            h_post.scaled_add((s - log_norm).exp(), h);
        }
        for i in 0..n {
            v_mean[i] += v[i];
            for j in 0..k {
                vh[[i, j]] += v[i] * h_post[j];
            }
        }
        h_mean += &h_post;
    }
    let inv = T::one() / T::cast(data.rows() as f64);
    Ok(SufficientStats {
        vh: vh * inv,
        v_mean: v_mean * inv,
        h_mean: h_mean * inv,
        count: data.rows(),
    })
}

/// Gradient of [`exact_loglik`]: data minus model expectations.
pub fn exact_loglik_gradient<T: Scalar>(
    params: &RbmParams<T>,
    data: &DataMatrix<T>,
) -> Result<Gradient<T>> {
    check_binary_rows(params, data)?;
    let d = exact_data_expectation(params, data)?;
    let m = exact_model_expectation(params)?;
    Ok(Gradient::from_stats(&d, &m))
}
