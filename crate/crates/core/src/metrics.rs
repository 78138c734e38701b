//! Binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

/// AUC as the normalized Mann-Whitney statistic with a normal-approximation
/// confidence interval (Hanley–McNeil variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucEstimate {
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    /// Mann-Whitney `U` of the positive class (ties count ½).
    pub u_statistic: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f_measure: f64,
    /// `None` when only one class is present.
    pub auc: Option<AucEstimate>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_inputs(scores: &[f64], labels: &[u32]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Degenerate("no scores to evaluate".into()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Range(format!("score {s} is not a number")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Range(format!("label {l} is not binary")));
    }
    Ok(())
}

/// AUC from midranks: `U = R₊ - n₊(n₊+1)/2`, `AUC = U / (n₊ n₋)`.
pub fn mann_whitney_auc(scores: &[f64], labels: &[u32]) -> Result<AucEstimate> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate("AUC needs both classes".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps midranks integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the midrank (i + j + 2) / 2.
        let twice_midrank = (i + j + 2) as u128;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum_x2 += twice_midrank * tied_pos;
        i = j + 1;
    }
    let np = positives as u128;
    let u_x2 = rank_sum_x2 - np * (np + 1);
    let u = u_x2 as f64 / 2.0;
    let pairs = positives as f64 * negatives as f64;
    let auc = u / pairs;

    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc)
        + (positives as f64 - 1.0) * (q1 - auc * auc)
        + (negatives as f64 - 1.0) * (q2 - auc * auc))
        / pairs;
    let se = var.max(0.0).sqrt();
    Ok(AucEstimate {
        auc,
        ci_low: (auc - Z_95 * se).max(0.0),
        ci_high: (auc + Z_95 * se).min(1.0),
        std_error: se,
        u_statistic: u,
        positives,
        negatives,
    })
}

/// Point metrics at `threshold` (score ≥ threshold predicts 1) plus AUC.
///
/// Ratios with an empty denominator are reported as 0. With a single class
/// the point metrics are still returned and `auc` is `None`.
pub fn classification_metrics(scores: &[f64], labels: &[u32], threshold: f64) -> Result<ClassificationMetrics> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let sensitivity = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f_measure = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    let auc = match mann_whitney_auc(scores, labels) {
        Ok(a) => Some(a),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ClassificationMetrics {
        threshold,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        precision,
        f_measure,
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let m = classification_metrics(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 0.5).unwrap();
        assert_eq!(
            (m.sensitivity, m.specificity, m.precision, m.f_measure),
            (1.0, 1.0, 1.0, 1.0)
        );
        let auc = m.auc.unwrap();
        assert_eq!(auc.auc, 1.0);
        assert!(auc.ci_low <= 1.0 && auc.ci_high == 1.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let a = mann_whitney_auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap();
        assert_eq!(a.auc, 0.5);
        assert!(a.ci_low <= 0.5 && 0.5 <= a.ci_high);
    }

    #[test]
    fn confusion_arithmetic() {
        // TP=2, FP=1, FN=1, TN=6.
        let scores = [0.9, 0.8, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2];
        let labels = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let m = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives, m.true_negatives), (2, 1, 1, 6));
        assert!((m.sensitivity - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.specificity - 6.0 / 7.0).abs() < 1e-15);
        assert!((m.f_measure - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_keeps_point_metrics() {
        let m = classification_metrics(&[0.9, 0.2], &[1, 1], 0.5).unwrap();
        assert!(m.auc.is_none());
        assert_eq!(m.sensitivity, 0.5);
        assert!(matches!(mann_whitney_auc(&[0.9, 0.2], &[1, 1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rejects_nan_and_bad_labels() {
        assert!(classification_metrics(&[f64::NAN], &[1], 0.5).is_err());
        assert!(classification_metrics(&[0.4], &[2], 0.5).is_err());
        assert!(classification_metrics(&[0.4, 0.1], &[1], 0.5).is_err());
    }
}
