//! Per-frame Chamfer mAP and the global geometric G-mAP evaluation.

mod ap;
mod fit;
mod frame;
mod global;
mod matching;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Category;

pub use ap::{average_precision, RankedOutcome};
pub use fit::{
    chain_points, farthest_point_sampling, fit_cells, fit_polyline, longest_run, refine_chain, FitConfig, FpsSample,
};
pub use frame::{frame_map, sequence_map, FrameScore};
pub use global::{
    ap_polygon_global, ap_polyline_global, g_map, global_grid, iou, merge_predictions, polyline_cost_matrix,
    raster_global_gt, GlobalInstance, GlobalMap, MatchTrace, PredictionTrace, Provenance,
};
pub use matching::{
    descending_order, global_instance_match, CostMatrix, MatchResult, DEFAULT_TAU_DIS, DEFAULT_TAU_VALID,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    /// Mean of both directed mean distances.
    #[default]
    Symmetric,
    /// Mean distance from prediction samples to the ground truth only.
    PredToGt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Chamfer thresholds (meters) for per-frame mAP.
    pub frame_thresholds: Vec<f64>,
    /// Distance thresholds (meters) for global polyline matching.
    pub tau_dis: Vec<f64>,
    pub tau_valid: f64,
    /// IoU thresholds for global polygon AP.
    pub iou_thresholds: Vec<f64>,
    pub chamfer_samples: usize,
    pub chamfer_mode: ChamferMode,
    /// Cell size of the global evaluation grid, meters.
    pub global_cell_size: f64,
    /// Margin around the trajectory's bounding box; `None` uses the BEV half-diagonal.
    pub global_margin: Option<f64>,
    pub fit: FitConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frame_thresholds: vec![0.5, 1.0, 1.5],
            tau_dis: DEFAULT_TAU_DIS.to_vec(),
            tau_valid: DEFAULT_TAU_VALID,
            iou_thresholds: vec![0.25, 0.5, 0.75],
            chamfer_samples: 100,
            chamfer_mode: ChamferMode::Symmetric,
            global_cell_size: 0.3,
            global_margin: None,
            fit: FitConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::argument(format!("{name} must not be empty")));
            }
            if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::argument(format!("{name} must be finite and non-negative")));
            }
            Ok(())
        };
        nonneg("frame_thresholds", &self.frame_thresholds)?;
        nonneg("tau_dis", &self.tau_dis)?;
        nonneg("iou_thresholds", &self.iou_thresholds)?;
        if self.iou_thresholds.iter().any(|t| *t > 1.0) {
            return Err(Error::argument("iou thresholds must lie in [0, 1]"));
        }
        if !(self.tau_valid.is_finite() && self.tau_valid >= 0.0) {
            return Err(Error::argument("tau_valid must be finite and non-negative"));
        }
        if self.chamfer_samples < 2 {
            return Err(Error::argument("chamfer_samples must be at least 2"));
        }
        if !(self.global_cell_size.is_finite() && self.global_cell_size > 0.0) {
            return Err(Error::argument("global_cell_size must be positive"));
        }
        if let Some(m) = self.global_margin {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::argument("global_margin must be non-negative"));
            }
        }
        if self.fit.min_points < 2 || !(self.fit.max_radius > 0.0) || !(self.fit.max_gap_cells >= 0.0) {
            return Err(Error::argument("invalid fit settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Frame,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    /// AP on a 0–100 scale.
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: Category,
    /// True when the category has no ground truth and is left out of the mean.
    pub skipped: bool,
    pub thresholds: Vec<ThresholdAp>,
    pub mean_ap: Option<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

impl CategoryReport {
    fn skipped(category: Category, num_pred: usize) -> Self {
        Self {
            category,
            skipped: true,
            thresholds: Vec::new(),
            mean_ap: None,
            num_gt: 0,
            num_pred,
        }
    }

    fn scored(category: Category, thresholds: Vec<ThresholdAp>, num_gt: usize, num_pred: usize) -> Self {
        let mean = thresholds.iter().map(|t| t.ap).sum::<f64>() / thresholds.len() as f64;
        Self {
            category,
            skipped: false,
            thresholds,
            mean_ap: Some(mean),
            num_gt,
            num_pred,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub categories: Vec<CategoryReport>,
    /// mAP (frame mode) or G-mAP (global mode), 0–100; `None` when nothing was scored.
    pub map: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_polygon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_polyline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<FrameScore>>,
    pub config: EvalConfig,
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.mode {
            EvalMode::Frame => "mAP",
            EvalMode::Global => "G-mAP",
        };
        writeln!(
            f,
            "{:<12}{:>6}{:>6}{:>8}  per threshold",
            "category", "gt", "pred", "mean"
        )?;
        for c in &self.categories {
            write!(f, "{:<12}{:>6}{:>6}", c.category.name(), c.num_gt, c.num_pred)?;
            if c.skipped {
                writeln!(f, "{:>8}", "skip")?;
                continue;
            }
            write!(f, "{:>8}  ", fmt_opt(c.mean_ap))?;
            let cells: Vec<String> = c
                .thresholds
                .iter()
                .map(|t| format!("@{} {:.1}", t.threshold, t.ap))
                .collect();
            writeln!(f, "{}", cells.join("  "))?;
        }
        if self.ap_polygon.is_some() || self.ap_polyline.is_some() {
            writeln!(
                f,
                "AP_polygon {}  AP_polyline {}",
                fmt_opt(self.ap_polygon),
                fmt_opt(self.ap_polyline)
            )?;
        }
        write!(f, "{label} {}", fmt_opt(self.map))
    }
}
