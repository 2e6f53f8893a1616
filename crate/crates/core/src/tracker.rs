//! Instance lifecycle: births, continuations and removals of tracked map
//! elements, each carrying its own rasterized history map.
//!
//! Association is supplied with the data: an element either references a
//! live track id (a propagated track) or carries no id (a fresh detection).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Category, MapElement, Pose2};
use crate::raster::{decay_update_with, rasterize, warp, GridSpec, HistoryMap, Raster, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Birth gate on detection score.
    pub tau_det: f64,
    /// Continuation gate on track score.
    pub tau_track: f64,
    /// History-map decay factor.
    pub lambda: f64,
    /// Valid-pixel threshold used when sampling history maps.
    pub tau_map: f64,
    /// Frames a track may go unobserved before removal.
    pub patience: u32,
    pub update_rule: UpdateRule,
    pub grid: GridSpec,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_det: 0.4,
            tau_track: 0.5,
            lambda: 0.95,
            tau_map: 0.5,
            patience: 0,
            update_rule: UpdateRule::Max,
            grid: GridSpec::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_det", self.tau_det),
            ("tau_track", self.tau_track),
            ("tau_map", self.tau_map),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::argument(format!("{name} = {v} must be a non-negative number")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::argument(format!("lambda = {} outside (0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// A live track.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub track_id: u64,
    pub category: Category,
    pub history: HistoryMap,
    pub last_score: f64,
    pub birth_frame: u64,
    pub frames_tracked: u32,
    missed: u32,
}

/// Elements seen in one frame, in that frame's ego coordinates.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub frame_index: u64,
    pub ego_pose: Pose2,
    pub elements: Vec<MapElement>,
}

/// Lifecycle partition of one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerOutput {
    pub frame_index: u64,
    pub born: Vec<u64>,
    pub continued: Vec<u64>,
    pub removed: Vec<u64>,
    pub live_count: usize,
    /// Track id each input element was assigned to, `None` when it was gated out.
    #[serde(skip)]
    pub assignments: Vec<Option<u64>>,
}

/// One gated observation of a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub frame_index: u64,
    pub ego_pose: Pose2,
    pub element: MapElement,
}

/// Full per-frame geometry of one track, live or removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: u64,
    pub category: Category,
    pub birth_frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_frame: Option<u64>,
    pub observations: Vec<TrackObservation>,
}

impl TrackRecord {
    /// Mean detection score over the track's observations.
    pub fn mean_score(&self) -> f64 {
        if self.observations.is_empty() {
            return 0.0;
        }
        self.observations.iter().map(|o| o.element.score()).sum::<f64>() / self.observations.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackSummary {
    pub track_id: u64,
    pub category: Category,
    pub last_score: f64,
    pub birth_frame: u64,
    pub frames_tracked: u32,
    pub last_update_frame: u64,
}

/// JSON-serializable view of the tracker state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackerSnapshot {
    pub frame_index: Option<u64>,
    pub config: TrackerConfig,
    pub live: Vec<TrackSummary>,
    pub removed: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    live: BTreeMap<u64, TrackState>,
    records: BTreeMap<u64, TrackRecord>,
    next_id: u64,
    last_frame: Option<u64>,
    last_pose: Option<Pose2>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            live: BTreeMap::new(),
            records: BTreeMap::new(),
            next_id: 0,
            last_frame: None,
            last_pose: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn is_live(&self, id: u64) -> bool {
        self.live.contains_key(&id)
    }

    pub fn live_tracks(&self) -> impl Iterator<Item = &TrackState> {
        self.live.values()
    }

    pub fn track(&self, id: u64) -> Option<&TrackState> {
        self.live.get(&id)
    }

    /// Advances one frame.
    ///
    /// Every live history map is first warped into the new ego frame. Then,
    /// in input order, unassociated elements scoring above `tau_det` are born
    /// and associated elements scoring above `tau_track` refresh their track.
    /// Live tracks left without such an element are removed (after
    /// `patience` missed frames). Elements whose rasterization is empty
    /// count as unobserved.
    pub fn step(&mut self, obs: &FrameObservation) -> Result<TrackerOutput> {
        if let Some(prev) = self.last_frame {
            if obs.frame_index <= prev {
                return Err(Error::NonMonotoneFrame {
                    previous: prev,
                    got: obs.frame_index,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for el in &obs.elements {
            if let Some(id) = el.track_id() {
                if !self.live.contains_key(&id) {
                    return Err(Error::UnknownTrack(id));
                }
                if !seen.insert(id) {
                    return Err(Error::DuplicateTrack(id));
                }
            }
        }

        let cfg = self.config;
        if let Some(prev_pose) = self.last_pose {
            for track in self.live.values_mut() {
                track.history.raster = warp(&track.history.raster, &prev_pose, &obs.ego_pose);
            }
        }

        let frame = obs.frame_index;
        let mut out = TrackerOutput {
            frame_index: frame,
            assignments: vec![None; obs.elements.len()],
            ..Default::default()
        };
        let mut refreshed = BTreeSet::new();

        for (idx, el) in obs.elements.iter().enumerate() {
            match el.track_id() {
                None => {
                    if el.score() <= cfg.tau_det {
                        continue;
                    }
                    let raster = rasterize(el, &cfg.grid, el.score())?;
                    if raster.is_zero() {
                        continue;
                    }
                    let id = self.next_id;
                    self.next_id += 1;
                    self.live.insert(
                        id,
                        TrackState {
                            track_id: id,
                            category: el.category(),
                            history: HistoryMap::new(raster, frame),
                            last_score: el.score(),
                            birth_frame: frame,
                            frames_tracked: 1,
                            missed: 0,
                        },
                    );
                    let mut stored = el.clone();
                    stored.set_track_id(Some(id));
                    self.records.insert(
                        id,
                        TrackRecord {
                            track_id: id,
                            category: el.category(),
                            birth_frame: frame,
                            removed_frame: None,
                            observations: vec![TrackObservation {
                                frame_index: frame,
                                ego_pose: obs.ego_pose,
                                element: stored,
                            }],
                        },
                    );
                    refreshed.insert(id);
                    out.born.push(id);
                    out.assignments[idx] = Some(id);
                }
                Some(id) => {
                    if el.score() <= cfg.tau_track {
                        continue;
                    }
                    let fresh = rasterize(el, &cfg.grid, el.score())?;
                    if fresh.is_zero() {
                        continue;
                    }
                    let track = self.live.get_mut(&id).expect("checked above");
                    track.history = decay_update_with(&track.history, &fresh, cfg.lambda, frame, cfg.update_rule)?;
                    track.last_score = el.score();
                    track.frames_tracked += 1;
                    track.missed = 0;
                    self.records
                        .get_mut(&id)
                        .expect("every live track has a record")
                        .observations
                        .push(TrackObservation {
                            frame_index: frame,
                            ego_pose: obs.ego_pose,
                            element: el.clone(),
                        });
                    refreshed.insert(id);
                    out.continued.push(id);
                    out.assignments[idx] = Some(id);
                }
            }
        }

        let stale: Vec<u64> = self.live.keys().copied().filter(|id| !refreshed.contains(id)).collect();
        for id in stale {
            let track = self.live.get_mut(&id).expect("stale ids come from the live set");
            if track.missed < cfg.patience {
                track.missed += 1;
                let empty = Raster::zeros(cfg.grid);
                track.history = decay_update_with(&track.history, &empty, cfg.lambda, frame, cfg.update_rule)?;
                continue;
            }
            self.live.remove(&id);
            if let Some(rec) = self.records.get_mut(&id) {
                rec.removed_frame = Some(frame);
            }
            out.removed.push(id);
        }

        out.live_count = self.live.len();
        self.last_frame = Some(frame);
        self.last_pose = Some(obs.ego_pose);
        Ok(out)
    }

    /// Every track ever born, removed ones included, ordered by id.
    pub fn export_tracks(&self) -> Vec<TrackRecord> {
        self.records.values().cloned().collect()
    }

    pub fn snapshot(&self) -> TrackerSnapshot {
        TrackerSnapshot {
            frame_index: self.last_frame,
            config: self.config,
            live: self
                .live
                .values()
                .map(|t| TrackSummary {
                    track_id: t.track_id,
                    category: t.category,
                    last_score: t.last_score,
                    birth_frame: t.birth_frame,
                    frames_tracked: t.frames_tracked,
                    last_update_frame: t.history.last_update_frame,
                })
                .collect(),
            removed: self
                .records
                .values()
                .filter(|r| r.removed_frame.is_some())
                .map(|r| r.track_id)
                .collect(),
        }
    }
}

/// Maps externally supplied instance ids (e.g. propagated query ids in a
/// prediction file) onto live tracker ids.
///
/// An external id whose track has been removed maps to nothing, so its next
/// appearance is a fresh detection.
#[derive(Debug, Default, Clone)]
pub struct ExternalIds {
    to_track: BTreeMap<u64, u64>,
}

impl ExternalIds {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rewrites element ids into tracker ids (or `None` for births). Returns
    /// the external id of each element so assignments can be recorded after the step.
    pub fn resolve(&self, tracker: &Tracker, elements: &[MapElement]) -> (Vec<MapElement>, Vec<Option<u64>>) {
        let mut used = BTreeSet::new();
        let mut resolved = Vec::with_capacity(elements.len());
        let mut externals = Vec::with_capacity(elements.len());
        for el in elements {
            let ext = el.track_id();
            let mut el = el.clone();
            let internal = ext
                .and_then(|e| self.to_track.get(&e).copied())
                .filter(|id| tracker.is_live(*id) && used.insert(*id));
            el.set_track_id(internal);
            resolved.push(el);
            externals.push(ext);
        }
        (resolved, externals)
    }

    pub fn record(&mut self, tracker: &Tracker, externals: &[Option<u64>], out: &TrackerOutput) {
        for (ext, assigned) in externals.iter().zip(&out.assignments) {
            if let (Some(e), Some(t)) = (ext, assigned) {
                self.to_track.insert(*e, *t);
            }
        }
        self.to_track.retain(|_, t| tracker.is_live(*t));
    }
}
