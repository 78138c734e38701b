//! k-nearest-neighbour classification of learned representations.

use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::Format(format!("unknown metric {other:?}"))),
        }
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> f64 {
    let dot = a.dot(&b).widen();
    let na = a.dot(&a).widen().sqrt();
    let nb = b.dot(&b).widen().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Distance-like score: smaller is closer.
fn dissimilarity<T: Scalar>(metric: Metric, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> f64 {
    match metric {
        Metric::Cosine => -cosine_similarity(a, b),
        Metric::Euclidean => a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x.widen() - y.widen()).powi(2))
            .sum(),
    }
}

/// Majority vote among the `k` nearest training rows. Vote ties go to the
/// class whose member ranks closest; distance ties go to the lower index.
pub fn knn_predict<T: Scalar>(
    train: ArrayView2<'_, T>,
    train_labels: &[u32],
    test: ArrayView2<'_, T>,
    k: usize,
    metric: Metric,
) -> Result<Vec<u32>> {
    if k == 0 || k > train.nrows() {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={}",
            train.nrows()
        )));
    }
    if train_labels.len() != train.nrows() {
        return Err(Error::dim("one label per training row is required"));
    }
    if train.ncols() != test.ncols() {
        return Err(Error::dim(format!(
            "train has {} features, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    Ok((0..test.nrows())
        .into_par_iter()
        .map(|i| {
            let q = test.row(i);
            let mut scored: Vec<(f64, usize)> = train
                .rows()
                .into_iter()
                .enumerate()
                .map(|(j, r)| (dissimilarity(metric, q, r), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
            scored.sort_by(cmp);
            // (label, votes, best rank)
            let mut tally: Vec<(u32, usize, usize)> = Vec::new();
            for (rank, &(_, j)) in scored.iter().enumerate() {
                let label = train_labels[j];
                match tally.iter_mut().find(|t| t.0 == label) {
                    Some(t) => t.1 += 1,
                    None => tally.push((label, 1, rank)),
                }
            }
            tally
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
                .map(|t| t.0)
                .expect("k >= 1")
        })
        .collect())
}

pub fn error_rate(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::dim("prediction and truth lengths differ or are empty"));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}
