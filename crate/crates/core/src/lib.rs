//! History-map tracking of vectorized HD-map instances and global geometric
//! evaluation of the resulting maps.

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod raster;
pub mod render;
pub mod scene;
pub mod simkit;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{Category, Geometry, MapElement, Point2, Polygon, Polyline, Pose2};
pub use metrics::{EvalConfig, EvalMode, EvalReport, GlobalMap};
pub use pipeline::RunConfig;
pub use raster::{GridSpec, HistoryMap, Raster, ValidMask};
pub use scene::{FrameRecord, Scene, TracksFile};
pub use simkit::{PerturbationModel, ScenarioSpec, TrajectoryKind};
pub use tracker::{FrameObservation, TrackRecord, Tracker, TrackerConfig, TrackerOutput};
