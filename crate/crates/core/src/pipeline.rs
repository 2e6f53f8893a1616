//! End-to-end workflows: simulate a scene, track its predictions, evaluate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MapElement;
use crate::metrics::{
    g_map, global_grid, merge_predictions, raster_global_gt, sequence_map, EvalConfig, EvalReport, MatchTrace,
};
use crate::raster::HistoryMap;
use crate::scene::{FrameRecord, Scene, TracksFile, TRACKS_VERSION};
use crate::simkit::{crop_frame, generate, PerturbationModel, Perturber, ScenarioSpec};
use crate::tracker::{ExternalIds, FrameObservation, TrackRecord, Tracker, TrackerConfig, TrackerOutput};

/// Every tunable of a run in one file; each section defaults independently.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub perturbation: PerturbationModel,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
}

/// Generates a scenario and writes its ground-truth crops and perturbed
/// predictions as a scene.
pub fn simulate(spec: &ScenarioSpec, model: &PerturbationModel, seed: u64) -> Result<Scene> {
    let scenario = generate(spec, seed)?;
    let mut perturber = Perturber::new(*model, seed)?;
    let bev = scenario.bev_box();
    let mut scene = Scene::new(spec.grid);
    scene.header.seed = Some(seed);
    for i in 0..scenario.poses.len() {
        let (gt, ego_pose) = crop_frame(&scenario, i)?;
        let pred = perturber.perturb(i as u64, &gt, &bev);
        scene.frames.push(FrameRecord {
            frame_index: i as u64,
            ego_pose,
            gt,
            pred: Some(pred),
        });
    }
    Ok(scene)
}

#[derive(Debug, Clone)]
pub struct TrackRun {
    pub config: TrackerConfig,
    pub tracks: Vec<TrackRecord>,
    pub steps: Vec<TrackerOutput>,
    /// Last history map of every track (only when requested).
    pub histories: BTreeMap<u64, HistoryMap>,
}

impl TrackRun {
    pub fn tracks_file(&self) -> TracksFile {
        TracksFile {
            version: TRACKS_VERSION,
            config: self.config,
            tracks: self.tracks.clone(),
        }
    }
}

/// Runs the tracker over the scene's predictions. Prediction ids are treated
/// as propagated-query ids; the grid comes from the scene header.
pub fn track_scene(scene: &Scene, config: &TrackerConfig, keep_histories: bool) -> Result<TrackRun> {
    let config = TrackerConfig {
        grid: scene.header.grid,
        ..*config
    };
    let mut tracker = Tracker::new(config)?;
    let mut ids = ExternalIds::new();
    let mut steps = Vec::with_capacity(scene.frames.len());
    let mut histories = BTreeMap::new();
    for f in &scene.frames {
        let pred = f
            .pred
            .as_ref()
            .ok_or_else(|| Error::argument(format!("frame {} has no predictions", f.frame_index)))?;
        let (elements, externals) = ids.resolve(&tracker, pred);
        let out = tracker.step(&FrameObservation {
            frame_index: f.frame_index,
            ego_pose: f.ego_pose,
            elements,
        })?;
        ids.record(&tracker, &externals, &out);
        if keep_histories {
            for t in tracker.live_tracks() {
                histories.insert(t.track_id, t.history.clone());
            }
        }
        steps.push(out);
    }
    Ok(TrackRun {
        config,
        tracks: tracker.export_tracks(),
        steps,
        histories,
    })
}

/// Per-frame predictions: gated track observations when tracks are given,
/// the scene's raw predictions otherwise.
fn frame_predictions(scene: &Scene, tracks: Option<&[TrackRecord]>) -> Result<Vec<Vec<MapElement>>> {
    match tracks {
        Some(tracks) => {
            let mut by_frame: BTreeMap<u64, Vec<MapElement>> = BTreeMap::new();
            for t in tracks {
                for o in &t.observations {
                    by_frame
                        .entry(o.frame_index)
                        .or_default()
                        .push(o.element.clone().with_track_id(t.track_id));
                }
            }
            Ok(scene
                .frames
                .iter()
                .map(|f| by_frame.remove(&f.frame_index).unwrap_or_default())
                .collect())
        }
        None => scene
            .frames
            .iter()
            .map(|f| {
                f.pred
                    .clone()
                    .ok_or_else(|| Error::argument(format!("frame {} has no predictions", f.frame_index)))
            })
            .collect(),
    }
}

/// Per-frame Chamfer mAP plus the sequence mean.
pub fn frame_eval(scene: &Scene, tracks: Option<&[TrackRecord]>, cfg: &EvalConfig) -> Result<EvalReport> {
    let preds = frame_predictions(scene, tracks)?;
    let frames: Vec<_> = scene
        .frames
        .iter()
        .zip(preds)
        .map(|(f, p)| (f.frame_index, p, f.gt.clone()))
        .collect();
    sequence_map(&frames, cfg)
}

/// G-mAP of merged tracks against the globally assembled ground truth.
pub fn global_eval(scene: &Scene, tracks: &[TrackRecord], cfg: &EvalConfig) -> Result<(EvalReport, Vec<MatchTrace>)> {
    cfg.validate()?;
    if scene.frames.is_empty() {
        return Err(Error::Empty("scene has no frames".into()));
    }
    let grid = global_grid(&scene.poses(), &scene.header.grid, cfg)?;
    let frames: Vec<_> = scene.frames.iter().map(|f| (f.gt.clone(), f.ego_pose)).collect();
    let gt = raster_global_gt(&frames, &grid, cfg)?;
    let pred = merge_predictions(tracks, &grid, cfg)?;
    g_map(&pred, &gt, cfg)
}
