use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision, RankedOutcome};
use super::matching::descending_order;
use super::{mean, CategoryReport, ChamferMode, EvalConfig, EvalMode, EvalReport, ThresholdAp};
use crate::error::Result;
use crate::geometry::{chamfer, chamfer_directed, Category, MapElement, Polyline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: u64,
    pub map: Option<f64>,
}

pub(crate) fn element_distance(pred: &Polyline, gt: &Polyline, cfg: &EvalConfig) -> Result<f64> {
    match cfg.chamfer_mode {
        ChamferMode::Symmetric => chamfer(pred, gt, cfg.chamfer_samples),
        ChamferMode::PredToGt => chamfer_directed(pred, gt, cfg.chamfer_samples),
    }
}

fn category_report(
    preds: &[&MapElement],
    gts: &[&MapElement],
    category: Category,
    cfg: &EvalConfig,
) -> Result<CategoryReport> {
    if gts.is_empty() {
        return Ok(CategoryReport::skipped(category, preds.len()));
    }
    let scores: Vec<f64> = preds.iter().map(|e| e.score()).collect();
    let order = descending_order(&scores);
    let gt_lines: Vec<Polyline> = gts.iter().map(|g| g.geometry().as_polyline()).collect();
    let mut dist = Vec::with_capacity(order.len());
    for &i in &order {
        let line = preds[i].geometry().as_polyline();
        let row = gt_lines
            .iter()
            .map(|g| element_distance(&line, g, cfg))
            .collect::<Result<Vec<_>>>()?;
        dist.push(row);
    }
    let thresholds = cfg
        .frame_thresholds
        .iter()
        .map(|&thr| {
            let mut covered = vec![false; gts.len()];
            let ranked: Vec<RankedOutcome> = dist
                .iter()
                .map(|row| {
                    let mut best: Option<(usize, f64)> = None;
                    for (j, &d) in row.iter().enumerate() {
                        if !covered[j] && d <= thr && best.is_none_or(|(_, b)| d < b) {
                            best = Some((j, d));
                        }
                    }
                    match best {
                        Some((j, _)) => {
                            covered[j] = true;
                            RankedOutcome { tp: 1, fp: 0 }
                        }
                        None => RankedOutcome { tp: 0, fp: 1 },
                    }
                })
                .collect();
            let ap = average_precision(&ranked, gts.len()).unwrap_or(0.0) * 100.0;
            ThresholdAp { threshold: thr, ap }
        })
        .collect();
    Ok(CategoryReport::scored(category, thresholds, gts.len(), preds.len()))
}

/// Chamfer mAP of one frame's predictions against its ground truth, both in
/// the same ego frame. Categories without ground truth are skipped.
pub fn frame_map(preds: &[MapElement], gts: &[MapElement], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let categories = Category::ALL
        .iter()
        .map(|&c| {
            let p: Vec<&MapElement> = preds.iter().filter(|e| e.category() == c).collect();
            let g: Vec<&MapElement> = gts.iter().filter(|e| e.category() == c).collect();
            category_report(&p, &g, c, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let map = mean(categories.iter().filter_map(|c| c.mean_ap));
    Ok(EvalReport {
        mode: EvalMode::Frame,
        categories,
        map,
        ap_polygon: None,
        ap_polyline: None,
        frames: None,
        config: cfg.clone(),
    })
}

/// Per-frame mAP over a sequence of `(frame_index, preds, gts)`; the
/// sequence score is the mean over frames that have any ground truth, and
/// per-category entries average the frames where that category was scored.
pub fn sequence_map(frames: &[(u64, Vec<MapElement>, Vec<MapElement>)], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let reports = frames
        .par_iter()
        .map(|(_, p, g)| frame_map(p, g, cfg))
        .collect::<Result<Vec<_>>>()?;
    let categories = Category::ALL
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let scored: Vec<&CategoryReport> = reports
                .iter()
                .map(|r| &r.categories[k])
                .filter(|r| !r.skipped)
                .collect();
            let num_gt = reports.iter().map(|r| r.categories[k].num_gt).sum();
            let num_pred = reports.iter().map(|r| r.categories[k].num_pred).sum();
            if scored.is_empty() {
                let mut r = CategoryReport::skipped(c, num_pred);
                r.num_gt = num_gt;
                return r;
            }
            let thresholds = cfg
                .frame_thresholds
                .iter()
                .enumerate()
                .map(|(t, &thr)| ThresholdAp {
                    threshold: thr,
                    ap: mean(scored.iter().map(|r| r.thresholds[t].ap)).unwrap_or(0.0),
                })
                .collect();
            CategoryReport::scored(c, thresholds, num_gt, num_pred)
        })
        .collect();
    let scores: Vec<FrameScore> = frames
        .iter()
        .zip(&reports)
        .map(|((idx, _, _), r)| FrameScore {
            frame_index: *idx,
            map: r.map,
        })
        .collect();
    let map = mean(scores.iter().filter_map(|s| s.map));
    Ok(EvalReport {
        mode: EvalMode::Frame,
        categories,
        map,
        ap_polygon: None,
        ap_polyline: None,
        frames: Some(scores),
        config: cfg.clone(),
    })
}
