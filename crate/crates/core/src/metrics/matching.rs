//! Global instance matching over a prediction × ground-truth distance matrix.
//!
//! Predictions are visited by descending average score. A prediction whose
//! nearest ground truth lies within `tau_dis` covers every still-uncovered
//! ground truth within `tau_dis`, scoring one true positive per covered
//! instance. Otherwise it is a counted false positive when its nearest
//! distance is at most `tau_dis + tau_valid`, and an uncounted (invalid)
//! false positive beyond that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default validity margin added to `tau_dis`.
pub const DEFAULT_TAU_VALID: f64 = 2.0;
/// Default distance thresholds, meters.
pub const DEFAULT_TAU_DIS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Row-major `n_pred × n_gt` matrix of non-negative distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} cost matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::argument(format!(
                "cost entry {v} must be finite and non-negative"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged cost matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn n_pred(&self) -> usize {
        self.rows
    }

    pub fn n_gt(&self) -> usize {
        self.cols
    }

    pub fn get(&self, pred: usize, gt: usize) -> f64 {
        self.values[pred * self.cols + gt]
    }

    pub fn row(&self, pred: usize) -> &[f64] {
        &self.values[pred * self.cols..(pred + 1) * self.cols]
    }

    pub fn row_min(&self, pred: usize) -> f64 {
        self.row(pred).iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Ground truths covered by each prediction.
    pub tp: Vec<u32>,
    /// 1 for a counted false positive, 0 otherwise.
    pub fp: Vec<u8>,
    pub gt_covered: Vec<bool>,
    /// Ground truths each prediction covered, in column order.
    pub matched: Vec<Vec<usize>>,
    /// Visiting order (stable descending score).
    pub order: Vec<usize>,
}

/// Stable argsort by descending score; equal scores keep input order.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

pub fn global_instance_match(cm: &CostMatrix, scores: &[f64], tau_dis: f64, tau_valid: f64) -> Result<MatchResult> {
    if scores.len() != cm.n_pred() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} predictions",
            scores.len(),
            cm.n_pred()
        )));
    }
    let n = cm.n_pred();
    let mut tp = vec![0u32; n];
    let mut fp = vec![0u8; n];
    let mut matched = vec![Vec::new(); n];
    let mut covered = vec![false; cm.n_gt()];
    let order = descending_order(scores);
    for &i in &order {
        let min = cm.row_min(i);
        if min <= tau_dis {
            for (j, &d) in cm.row(i).iter().enumerate() {
                if d <= tau_dis && !covered[j] {
                    covered[j] = true;
                    tp[i] += 1;
                    matched[i].push(j);
                }
            }
        } else if min > tau_dis + tau_valid {
            fp[i] = 0;
        } else {
            fp[i] = 1;
        }
    }
    Ok(MatchResult {
        tp,
        fp,
        gt_covered: covered,
        matched,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_by_two_trace() {
        let r = global_instance_match(&cm(&[&[0.2, 3.5], &[0.4, 0.3]]), &[0.9, 0.8], 0.5, 2.0).unwrap();
        assert_eq!(r.tp, vec![1, 1]);
        assert_eq!(r.fp, vec![0, 0]);
        assert_eq!(r.gt_covered, vec![true, true]);
    }

    #[test]
    fn one_prediction_two_gt() {
        let r = global_instance_match(&cm(&[&[0.3, 0.4]]), &[1.0], 0.5, 2.0).unwrap();
        assert_eq!(r.tp, vec![2]);
        assert_eq!(r.matched, vec![vec![0, 1]]);
    }

    #[test]
    fn valid_and_invalid_fp() {
        let r = global_instance_match(&cm(&[&[3.0]]), &[1.0], 0.5, 2.0).unwrap();
        assert_eq!((r.tp[0], r.fp[0]), (0, 0));
        let r = global_instance_match(&cm(&[&[1.8]]), &[1.0], 0.5, 2.0).unwrap();
        assert_eq!((r.tp[0], r.fp[0]), (0, 1));
    }

    #[test]
    fn shape_errors() {
        assert!(global_instance_match(&cm(&[&[0.1]]), &[1.0, 0.5], 0.5, 2.0).is_err());
        assert!(CostMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
    }

    #[test]
    fn no_ground_truth_is_invalid_fp() {
        let m = CostMatrix::new(2, 0, vec![]).unwrap();
        let r = global_instance_match(&m, &[0.5, 0.7], 0.5, 2.0).unwrap();
        assert_eq!(r.fp, vec![0, 0]);
    }
}
