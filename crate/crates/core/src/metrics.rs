//! Ranking metrics over (score, label) pairs. Higher scores mean "more
//! anomalous"; label 1 marks an outlier.
//!
//! Ties: ROC-AUC counts tied positive/negative pairs as one half, AUPRC
//! groups tied scores into one threshold, and AP and Recall@k order ties by
//! ascending node id.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
    n_pos: usize,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape("labeled scores", format!("{} labels", scores.len()), labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("scores contain NaN".into()));
        }
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        Ok(LabeledScores { scores, labels, n_pos })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos
    }

    fn require_positive(&self) -> Result<()> {
        if self.n_pos == 0 {
            return Err(Error::InvalidArgument("no positive labels".into()));
        }
        Ok(())
    }
}

/// Node ids by descending score, ties by ascending id.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mann–Whitney estimate of `P(score_pos > score_neg)`, ties counting 1/2.
pub fn roc_auc(ls: &LabeledScores) -> Result<f64> {
    if ls.n_pos == 0 || ls.n_neg() == 0 {
        return Err(Error::InvalidArgument("ROC-AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.sort_by(|&a, &b| ls.scores[a].partial_cmp(&ls.scores[b]).unwrap_or(Ordering::Equal));
    // Count pairs in half units so the numerator stays an exact integer.
    let mut half_pairs: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && ls.scores[order[j]] == ls.scores[order[i]] {
            j += 1;
        }
        let pos = order[i..j].iter().filter(|&&v| ls.labels[v] == 1).count() as u64;
        let neg = (j - i) as u64 - pos;
        half_pairs += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(half_pairs as f64 / 2.0 / (ls.n_pos as f64 * ls.n_neg() as f64))
}

/// `Σ_k (R_k − R_{k−1}) · P_k` over the ordering of [`descending_order`].
pub fn average_precision(ls: &LabeledScores) -> Result<f64> {
    ls.require_positive()?;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, v) in descending_order(&ls.scores).into_iter().enumerate() {
        if ls.labels[v] == 1 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / ls.n_pos as f64)
}

/// Share of all positives found in the top `k` (default: the number of
/// positives).
pub fn recall_at_k(ls: &LabeledScores, k: Option<usize>) -> Result<f64> {
    ls.require_positive()?;
    let k = k.unwrap_or(ls.n_pos);
    if k == 0 || k > ls.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside [1, {}]", ls.len())));
    }
    let hits = descending_order(&ls.scores)[..k]
        .iter()
        .filter(|&&v| ls.labels[v] == 1)
        .count();
    Ok(hits as f64 / ls.n_pos as f64)
}

/// `(recall, precision)` at each distinct score threshold, highest first.
pub fn pr_curve(ls: &LabeledScores) -> Result<Vec<(f64, f64)>> {
    ls.require_positive()?;
    let order = descending_order(&ls.scores);
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = ls.scores[order[i]];
        while i < order.len() && ls.scores[order[i]] == s {
            tp += ls.labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / ls.n_pos as f64, tp as f64 / seen as f64));
    }
    Ok(points)
}

/// Trapezoidal area under the precision–recall curve.
///
/// Thresholds with zero recall are replaced by one anchor at recall 0 whose
/// precision is the curve's maximum (the interpolated precision there).
pub fn auprc(ls: &LabeledScores) -> Result<f64> {
    let points = pr_curve(ls)?;
    Ok(trapezoid_with_anchor(&points))
}

pub(crate) fn trapezoid_with_anchor(points: &[(f64, f64)]) -> f64 {
    let anchor = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut prev = (0.0, anchor);
    let mut area = 0.0;
    for &(r, p) in points.iter().filter(|p| p.0 > 0.0) {
        area += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub auprc: f64,
}

pub fn summarize(ls: &LabeledScores) -> Result<MetricSummary> {
    Ok(MetricSummary {
        roc_auc: roc_auc(ls)?,
        average_precision: average_precision(ls)?,
        recall_at_k: recall_at_k(ls, None)?,
        k: ls.n_pos,
        auprc: auprc(ls)?,
    })
}

impl MetricSummary {
    pub const CSV_HEADER: &'static str = "dataset,method,seed,roc_auc,average_precision,recall_at_k,k,auprc";

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "roc_auc={}", self.roc_auc);
        let _ = writeln!(s, "average_precision={}", self.average_precision);
        let _ = writeln!(s, "recall_at_k={}", self.recall_at_k);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "auprc={}", self.auprc);
        s
    }

    pub fn csv_row(&self, dataset: &str, method: &str, seed: u64) -> String {
        format!(
            "{dataset},{method},{seed},{},{},{},{},{}",
            self.roc_auc, self.average_precision, self.recall_at_k, self.k, self.auprc
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(scores: &[f64], labels: &[u8]) -> LabeledScores {
        LabeledScores::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&ls(&[0.9, 0.8, 0.1], &[1, 0, 0])).unwrap(), 1.0);
        assert_eq!(roc_auc(&ls(&[0.5; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(roc_auc(&ls(&[0.9, 0.8, 0.7, 0.1], &[1, 0, 1, 0])).unwrap(), 0.75);
        assert!(roc_auc(&ls(&[0.1, 0.2], &[1, 1])).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&ls(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(average_precision(&ls(&[0.9, 0.1], &[0, 1])).unwrap(), 0.5);
        assert!(average_precision(&ls(&[0.9, 0.1], &[0, 0])).is_err());
    }

    #[test]
    fn recall_examples() {
        let x = ls(&[0.9, 0.8, 0.7], &[0, 1, 1]);
        assert_eq!(recall_at_k(&x, Some(2)).unwrap(), 0.5);
        assert_eq!(recall_at_k(&x, Some(3)).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ls(&[0.9, 0.8, 0.7], &[1, 1, 0]), None).unwrap(), 1.0);
        assert!(recall_at_k(&x, Some(0)).is_err());
        assert!(recall_at_k(&x, Some(4)).is_err());
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&ls(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0])).unwrap(), 1.0);
        // one positive ranked last of three: anchor (0, 1/3) to (1, 1/3)
        assert!((auprc(&ls(&[0.9, 0.8, 0.1], &[0, 0, 1])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn summary_formats() {
        let s = summarize(&ls(&[0.9, 0.8, 0.1], &[1, 0, 0])).unwrap();
        assert!(s.to_key_values().starts_with("roc_auc=1\n"));
        assert!(s.csv_row("syn", "diffgad", 3).starts_with("syn,diffgad,3,1,"));
        assert_eq!(MetricSummary::CSV_HEADER.split(',').count(), s.csv_row("a", "b", 0).split(',').count());
    }

    #[test]
    fn invalid_inputs() {
        assert!(LabeledScores::new(vec![0.1], vec![2]).is_err());
        assert!(LabeledScores::new(vec![0.1, 0.2], vec![1]).is_err());
        assert!(LabeledScores::new(vec![f64::NAN], vec![1]).is_err());
    }
}
