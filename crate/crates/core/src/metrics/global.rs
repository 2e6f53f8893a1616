use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision, RankedOutcome};
use super::fit::fit_cells;
use super::frame::element_distance;
use super::matching::{descending_order, global_instance_match, CostMatrix};
use super::{mean, CategoryReport, EvalConfig, EvalMode, EvalReport, ThresholdAp};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, Aabb, Category, Geometry, MapElement, Point2, Pose2};
use crate::raster::{polygon_cells, trace_geometry, GridSpec};
use crate::tracker::TrackRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Gt,
    Track,
}

/// One instance assembled on the global grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalInstance {
    /// Global GT id or track id, depending on provenance.
    pub id: u64,
    pub provenance: Provenance,
    pub category: Category,
    /// 1 for ground truth; mean observation score for tracks.
    pub score: f64,
    /// Fitted polyline, or the outline of the filled area for polygons.
    pub element: Option<MapElement>,
    /// Sorted flat indices of occupied global cells (traced for polylines,
    /// filled for polygons).
    #[serde(skip)]
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMap {
    pub grid: GridSpec,
    pub instances: Vec<GlobalInstance>,
}

impl GlobalMap {
    pub fn of_category(&self, category: Category) -> impl Iterator<Item = &GlobalInstance> {
        self.instances.iter().filter(move |i| i.category == category)
    }
}

/// Global grid covering every ego position plus a margin (`None`: the
/// farthest BEV corner from the ego origin, so every crop fits).
pub fn global_grid(poses: &[Pose2], bev: &GridSpec, cfg: &EvalConfig) -> Result<GridSpec> {
    let mut bbox = Aabb::from_points(poses.iter().map(|p| p.translation()).collect::<Vec<_>>().iter())
        .ok_or_else(|| Error::Empty("no ego poses".into()))?;
    let margin = cfg.global_margin.unwrap_or_else(|| {
        let (x0, x1) = bev.x_range();
        let (y0, y1) = bev.y_range();
        x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()))
    });
    bbox = bbox.inflate(margin + cfg.global_cell_size);
    GridSpec::covering(&bbox, cfg.global_cell_size)
}

fn stamp(element: &MapElement, pose: &Pose2, grid: &GridSpec, cells: &mut Vec<usize>) {
    let global = element.transform(pose);
    let cols = grid.cols();
    match global.geometry() {
        Geometry::Polygon(poly) => polygon_cells(poly, grid, |r, c| cells.push(r * cols + c)),
        g @ Geometry::Polyline(_) => trace_geometry(g, grid, |r, c| cells.push(r * cols + c)),
    }
}

fn build_instance(
    id: u64,
    provenance: Provenance,
    category: Category,
    score: f64,
    mut cells: Vec<usize>,
    grid: &GridSpec,
    cfg: &EvalConfig,
) -> Option<GlobalInstance> {
    cells.sort_unstable();
    cells.dedup();
    if cells.is_empty() {
        return None;
    }
    let element = if category.is_polygon() {
        let centers: Vec<Point2> = cells
            .iter()
            .map(|&i| grid.cell_center(i / grid.cols(), i % grid.cols()))
            .collect();
        MapElement::polygon(convex_hull(&centers), score).ok()
    } else {
        // an unfittable polyline instance cannot be matched by distance
        let line = fit_cells(grid, &cells, &cfg.fit).ok()?;
        Some(MapElement::new(Geometry::Polyline(line), category, score).ok()?)
    };
    Some(GlobalInstance {
        id,
        provenance,
        category,
        score,
        element: element.map(|e| e.with_track_id(id)),
        cells,
    })
}

/// Assembles global ground truth from per-frame local crops. Every element
/// must carry its global instance id.
pub fn raster_global_gt(frames: &[(Vec<MapElement>, Pose2)], grid: &GridSpec, cfg: &EvalConfig) -> Result<GlobalMap> {
    if frames.is_empty() {
        return Err(Error::Empty("ground-truth sequence has no frames".into()));
    }
    let mut groups: BTreeMap<u64, (Category, Vec<usize>)> = BTreeMap::new();
    for (k, (elements, pose)) in frames.iter().enumerate() {
        for el in elements {
            let id = el
                .track_id()
                .ok_or_else(|| Error::argument(format!("ground-truth element in frame {k} has no global id")))?;
            let entry = groups.entry(id).or_insert((el.category(), Vec::new()));
            if entry.0 != el.category() {
                return Err(Error::argument(format!(
                    "ground-truth id {id} seen as both {} and {}",
                    entry.0,
                    el.category()
                )));
            }
            stamp(el, pose, grid, &mut entry.1);
        }
    }
    let instances = groups
        .into_par_iter()
        .filter_map(|(id, (cat, cells))| build_instance(id, Provenance::Gt, cat, 1.0, cells, grid, cfg))
        .collect();
    Ok(GlobalMap { grid: *grid, instances })
}

/// Merges each exported track's observations into one global instance;
/// its score is the mean observation score.
pub fn merge_predictions(tracks: &[TrackRecord], grid: &GridSpec, cfg: &EvalConfig) -> Result<GlobalMap> {
    let instances = tracks
        .par_iter()
        .filter_map(|t| {
            let mut cells = Vec::new();
            for o in &t.observations {
                stamp(&o.element, &o.ego_pose, grid, &mut cells);
            }
            build_instance(
                t.track_id,
                Provenance::Track,
                t.category,
                t.mean_score(),
                cells,
                grid,
                cfg,
            )
        })
        .collect();
    Ok(GlobalMap { grid: *grid, instances })
}

/// IoU of two sorted cell sets; 0 when both are empty.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Audit record of one prediction at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub pred_id: u64,
    pub score: f64,
    pub matched_gt: Vec<u64>,
    /// Distance (or IoU) to each matched ground truth.
    pub values: Vec<f64>,
    /// Nearest distance (or best IoU) to any ground truth.
    pub best: Option<f64>,
    pub tp: u32,
    pub fp: u8,
}

/// Match trace for one (category, threshold) pair, in processing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTrace {
    pub category: Category,
    /// `"chamfer"` or `"iou"`.
    pub metric: String,
    pub threshold: f64,
    pub ap: f64,
    pub predictions: Vec<PredictionTrace>,
}

fn polylines_of(map: &GlobalMap, category: Category) -> Vec<&GlobalInstance> {
    map.of_category(category).filter(|i| i.element.is_some()).collect()
}

/// Row-parallel distance matrix between fitted prediction and GT polylines.
pub fn polyline_cost_matrix(
    preds: &[&GlobalInstance],
    gts: &[&GlobalInstance],
    cfg: &EvalConfig,
) -> Result<CostMatrix> {
    let lines = |v: &[&GlobalInstance]| -> Vec<_> {
        v.iter()
            .map(|i| i.element.as_ref().expect("fitted instance").geometry().as_polyline())
            .collect()
    };
    let (p, g) = (lines(preds), lines(gts));
    let rows = p
        .par_iter()
        .map(|a| {
            g.iter()
                .map(|b| element_distance(a, b, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    CostMatrix::new(p.len(), g.len(), rows.concat())
}

/// Chamfer-based global AP for one polyline category, averaged over `tau_dis`.
pub fn ap_polyline_global(
    pred: &GlobalMap,
    gt: &GlobalMap,
    category: Category,
    cfg: &EvalConfig,
) -> Result<(CategoryReport, Vec<MatchTrace>)> {
    let gts = polylines_of(gt, category);
    let preds = polylines_of(pred, category);
    if gts.is_empty() {
        return Ok((CategoryReport::skipped(category, preds.len()), Vec::new()));
    }
    let cm = polyline_cost_matrix(&preds, &gts, cfg)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let mut thresholds = Vec::new();
    let mut traces = Vec::new();
    for &tau in &cfg.tau_dis {
        let m = global_instance_match(&cm, &scores, tau, cfg.tau_valid)?;
        let ranked: Vec<RankedOutcome> = m
            .order
            .iter()
            .map(|&i| RankedOutcome {
                tp: m.tp[i],
                fp: m.fp[i] as u32,
            })
            .collect();
        let ap = average_precision(&ranked, gts.len()).unwrap_or(0.0) * 100.0;
        thresholds.push(ThresholdAp { threshold: tau, ap });
        let predictions = m
            .order
            .iter()
            .map(|&i| PredictionTrace {
                pred_id: preds[i].id,
                score: scores[i],
                matched_gt: m.matched[i].iter().map(|&j| gts[j].id).collect(),
                values: m.matched[i].iter().map(|&j| cm.get(i, j)).collect(),
                best: (cm.n_gt() > 0).then(|| cm.row_min(i)),
                tp: m.tp[i],
                fp: m.fp[i],
            })
            .collect();
        traces.push(MatchTrace {
            category,
            metric: "chamfer".into(),
            threshold: tau,
            ap,
            predictions,
        });
    }
    Ok((
        CategoryReport::scored(category, thresholds, gts.len(), preds.len()),
        traces,
    ))
}

/// Raster-IoU AP for pedestrian areas, averaged over the IoU thresholds.
pub fn ap_polygon_global(
    pred: &GlobalMap,
    gt: &GlobalMap,
    cfg: &EvalConfig,
) -> Result<(CategoryReport, Vec<MatchTrace>)> {
    let category = Category::Pedestrian;
    let gts: Vec<&GlobalInstance> = gt.of_category(category).collect();
    let preds: Vec<&GlobalInstance> = pred.of_category(category).collect();
    if gts.is_empty() {
        return Ok((CategoryReport::skipped(category, preds.len()), Vec::new()));
    }
    let ious: Vec<Vec<f64>> = preds
        .par_iter()
        .map(|p| gts.iter().map(|g| iou(&p.cells, &g.cells)).collect())
        .collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let order = descending_order(&scores);
    let mut thresholds = Vec::new();
    let mut traces = Vec::new();
    for &thr in &cfg.iou_thresholds {
        let mut covered = vec![false; gts.len()];
        let mut ranked = Vec::with_capacity(order.len());
        let mut predictions = Vec::with_capacity(order.len());
        for &i in &order {
            let mut best: Option<(usize, f64)> = None;
            for (j, &v) in ious[i].iter().enumerate() {
                if !covered[j] && v >= thr && v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            let outcome = match best {
                Some((j, _)) => {
                    covered[j] = true;
                    RankedOutcome { tp: 1, fp: 0 }
                }
                None => RankedOutcome { tp: 0, fp: 1 },
            };
            ranked.push(outcome);
            predictions.push(PredictionTrace {
                pred_id: preds[i].id,
                score: scores[i],
                matched_gt: best.iter().map(|&(j, _)| gts[j].id).collect(),
                values: best.iter().map(|&(_, v)| v).collect(),
                best: ious[i].iter().copied().reduce(f64::max),
                tp: outcome.tp,
                fp: outcome.fp as u8,
            });
        }
        let ap = average_precision(&ranked, gts.len()).unwrap_or(0.0) * 100.0;
        thresholds.push(ThresholdAp { threshold: thr, ap });
        traces.push(MatchTrace {
            category,
            metric: "iou".into(),
            threshold: thr,
            ap,
            predictions,
        });
    }
    Ok((
        CategoryReport::scored(category, thresholds, gts.len(), preds.len()),
        traces,
    ))
}

/// G-mAP: mean of the pedestrian polygon AP and the divider/boundary polyline
/// APs over the categories that have ground truth.
pub fn g_map(pred: &GlobalMap, gt: &GlobalMap, cfg: &EvalConfig) -> Result<(EvalReport, Vec<MatchTrace>)> {
    cfg.validate()?;
    if pred.grid != gt.grid {
        return Err(Error::SpecMismatch(
            "prediction and ground-truth global grids differ".into(),
        ));
    }
    let (ped, (div, bnd)) = rayon::join(
        || ap_polygon_global(pred, gt, cfg),
        || {
            rayon::join(
                || ap_polyline_global(pred, gt, Category::Divider, cfg),
                || ap_polyline_global(pred, gt, Category::Boundary, cfg),
            )
        },
    );
    let (ped, div, bnd) = (ped?, div?, bnd?);
    let categories = vec![ped.0, div.0, bnd.0];
    if categories.iter().all(|c| c.skipped) {
        return Err(Error::Empty("no ground truth in any category".into()));
    }
    let map = mean(categories.iter().filter_map(|c| c.mean_ap));
    let ap_polygon = categories[0].mean_ap;
    let ap_polyline = mean(categories[1..].iter().filter_map(|c| c.mean_ap));
    let traces = [ped.1, div.1, bnd.1].concat();
    Ok((
        EvalReport {
            mode: EvalMode::Global,
            categories,
            map,
            ap_polygon,
            ap_polyline,
            frames: None,
            config: cfg.clone(),
        },
        traces,
    ))
}
