//! Average precision from a ranked list of detection outcomes.

/// Outcome of one ranked prediction: covered ground truths and counted false positives.
/// A prediction with both zero adds no point to the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedOutcome {
    pub tp: u32,
    pub fp: u32,
}

/// All-point interpolated AP in `[0, 1]` (area under the monotone
/// precision envelope). `None` when there is no ground truth.
pub fn average_precision(ranked: &[RankedOutcome], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut recalls = vec![0.0];
    let mut precisions = vec![0.0];
    let (mut tp, mut fp) = (0u64, 0u64);
    for o in ranked {
        if o.tp == 0 && o.fp == 0 {
            continue;
        }
        tp += o.tp as u64;
        fp += o.fp as u64;
        recalls.push(tp as f64 / num_gt as f64);
        precisions.push(tp as f64 / (tp + fp) as f64);
    }
    recalls.push(1.0);
    precisions.push(0.0);
    for i in (1..precisions.len()).rev() {
        precisions[i - 1] = precisions[i - 1].max(precisions[i]);
    }
    let mut ap = 0.0;
    for i in 1..recalls.len() {
        let dr = recalls[i] - recalls[i - 1];
        if dr > 0.0 {
            ap += dr * precisions[i];
        }
    }
    Some(ap.clamp(0.0, 1.0))
}
