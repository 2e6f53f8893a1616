//! Scene JSONL files, track exports and lifecycle logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Category, MapElement, Pose2};
use crate::raster::GridSpec;
use crate::tracker::{TrackRecord, TrackerConfig, TrackerOutput};

pub const SCENE_VERSION: u32 = 1;
pub const TRACKS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneHeader {
    pub version: u32,
    pub grid: GridSpec,
    pub categories: Vec<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SceneHeader {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            version: SCENE_VERSION,
            grid,
            categories: Category::ALL.to_vec(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub ego_pose: Pose2,
    /// Local ground truth; `track_id` holds the global instance id.
    pub gt: Vec<MapElement>,
    /// Local predictions; `track_id` holds the predicted instance id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<Vec<MapElement>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub header: SceneHeader,
    pub frames: Vec<FrameRecord>,
}

fn format_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(flatten)]
    inner: &'a T,
}

fn tagged<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    Ok(serde_json::to_string(&Tagged { kind, inner: value })?)
}

impl Scene {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            header: SceneHeader::new(grid),
            frames: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Scene> {
        let file = File::open(path)?;
        Self::parse(BufReader::new(file), &path.display().to_string())
    }

    /// Parses scene JSONL; `name` labels error messages.
    pub fn parse(reader: impl BufRead, name: &str) -> Result<Scene> {
        let mut header: Option<SceneHeader> = None;
        let mut frames: Vec<FrameRecord> = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let lineno = k + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut value: Value = serde_json::from_str(&line).map_err(|e| format_err(name, lineno, e.to_string()))?;
            let kind = value
                .as_object_mut()
                .and_then(|o| o.remove("type"))
                .and_then(|t| t.as_str().map(str::to_owned))
                .ok_or_else(|| format_err(name, lineno, "record without a string \"type\" field"))?;
            match (kind.as_str(), &header) {
                ("header", None) => {
                    let h: SceneHeader =
                        serde_json::from_value(value).map_err(|e| format_err(name, lineno, e.to_string()))?;
                    if h.version != SCENE_VERSION {
                        return Err(format_err(
                            name,
                            lineno,
                            format!("unsupported scene version {}", h.version),
                        ));
                    }
                    let mut cats = h.categories.clone();
                    cats.sort_by_key(|c| c.name());
                    cats.dedup();
                    if cats.len() != 3 || h.categories.len() != 3 {
                        return Err(format_err(name, lineno, "header must list the three categories"));
                    }
                    header = Some(h);
                }
                ("header", Some(_)) => return Err(format_err(name, lineno, "duplicate header")),
                ("frame", None) => return Err(format_err(name, lineno, "frame before header")),
                ("frame", Some(_)) => {
                    let f: FrameRecord =
                        serde_json::from_value(value).map_err(|e| format_err(name, lineno, e.to_string()))?;
                    if let Some(prev) = frames.last() {
                        if f.frame_index <= prev.frame_index {
                            return Err(format_err(
                                name,
                                lineno,
                                format!("frame_index {} does not follow {}", f.frame_index, prev.frame_index),
                            ));
                        }
                    }
                    frames.push(f);
                }
                (other, _) => return Err(format_err(name, lineno, format!("unknown record type {other:?}"))),
            }
        }
        let header = header.ok_or_else(|| format_err(name, 1, "missing header"))?;
        Ok(Scene { header, frames })
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", tagged("header", &self.header)?)?;
        for f in &self.frames {
            writeln!(w, "{}", tagged("frame", f)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.frames.iter().map(|f| f.ego_pose).collect()
    }
}

/// Exported tracks with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracksFile {
    pub version: u32,
    pub config: TrackerConfig,
    pub tracks: Vec<TrackRecord>,
}

impl TracksFile {
    pub fn read(path: &Path) -> Result<TracksFile> {
        let file = BufReader::new(File::open(path)?);
        let t: TracksFile = serde_json::from_reader(file)
            .map_err(|e| format_err(&path.display().to_string(), e.line(), e.to_string()))?;
        if t.version != TRACKS_VERSION {
            return Err(format_err(
                &path.display().to_string(),
                1,
                format!("unsupported tracks version {}", t.version),
            ));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct LogHeader {
    tau_det: f64,
    tau_track: f64,
    lambda: f64,
    tau_map: f64,
    patience: u32,
}

/// Lifecycle log: a config line echoing the gates, then one line per step.
pub fn write_lifecycle_log(mut w: impl Write, config: &TrackerConfig, steps: &[TrackerOutput]) -> Result<()> {
    let header = LogHeader {
        tau_det: config.tau_det,
        tau_track: config.tau_track,
        lambda: config.lambda,
        tau_map: config.tau_map,
        patience: config.patience,
    };
    writeln!(w, "{}", tagged("config", &header)?)?;
    for s in steps {
        writeln!(w, "{}", tagged("step", s)?)?;
    }
    Ok(())
}
