//! Sampling coordinates derived from history maps: BEV cell centers of the
//! valid mask and their pinhole projections into each camera, padded to a
//! fixed length with a boolean mask.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::{valid_mask, GridSpec, ValidMask};
use crate::tracker::TrackState;

/// Default padded sample length per instance.
pub const DEFAULT_MAX_SAMPLES: usize = 256;

/// Points closer than this to the camera plane (meters of depth) are not visible.
const MIN_DEPTH: f64 = 1e-6;

/// Pinhole camera with a rigid camera-from-ego transform.
///
/// Ego frame: x forward, y left, z up, ground plane at z = 0.
/// Camera frame: x right, y down, z along the optical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera", into = "RawCamera")]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
    image_size: (u32, u32),
}

#[derive(Serialize, Deserialize)]
struct RawCamera {
    intrinsics: [[f64; 3]; 3],
    /// camera-from-ego rotation, row-major
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    image_size: [u32; 2],
}

impl TryFrom<RawCamera> for CameraModel {
    type Error = Error;

    fn try_from(raw: RawCamera) -> Result<Self> {
        let k = Matrix3::from_fn(|r, c| raw.intrinsics[r][c]);
        let rot = Matrix3::from_fn(|r, c| raw.rotation[r][c]);
        let ortho = (rot.transpose() * rot - Matrix3::identity()).abs().max();
        if ortho > 1e-6 || (rot.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::argument("camera rotation is not a proper rotation matrix"));
        }
        CameraModel::new(
            k,
            Rotation3::from_matrix_unchecked(rot),
            Vector3::from(raw.translation),
            (raw.image_size[0], raw.image_size[1]),
        )
    }
}

impl From<CameraModel> for RawCamera {
    fn from(c: CameraModel) -> Self {
        let k = c.intrinsics;
        let r = c.rotation.matrix();
        RawCamera {
            intrinsics: std::array::from_fn(|i| std::array::from_fn(|j| k[(i, j)])),
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation: [c.translation.x, c.translation.y, c.translation.z],
            image_size: [c.image_size.0, c.image_size.1],
        }
    }
}

impl CameraModel {
    pub fn new(
        intrinsics: Matrix3<f64>,
        camera_from_ego: Rotation3<f64>,
        translation: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let (fx, fy, cx, cy) = (
            intrinsics[(0, 0)],
            intrinsics[(1, 1)],
            intrinsics[(0, 2)],
            intrinsics[(1, 2)],
        );
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::argument("focal lengths must be positive"));
        }
        let (w, h) = (image_size.0 as f64, image_size.1 as f64);
        if !(cx >= 0.0 && cx < w && cy >= 0.0 && cy < h) {
            return Err(Error::argument("principal point outside the image"));
        }
        if intrinsics[(1, 0)] != 0.0
            || intrinsics[(2, 0)] != 0.0
            || intrinsics[(2, 1)] != 0.0
            || intrinsics[(2, 2)] != 1.0
        {
            return Err(Error::argument("intrinsics must be upper triangular with K[2][2] = 1"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("non-finite camera translation"));
        }
        Ok(Self {
            intrinsics,
            rotation: camera_from_ego,
            translation,
            image_size,
        })
    }

    /// Camera mounted at `position` (ego frame) looking along heading `yaw`
    /// (about ego z, 0 = forward) and tilted down by `pitch`.
    #[allow(clippy::too_many_arguments)]
    pub fn looking_at_heading(
        position: [f64; 3],
        yaw: f64,
        pitch: f64,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_size: (u32, u32),
    ) -> Result<Self> {
        // columns: camera x, y, z axes expressed in ego coordinates for yaw = pitch = 0
        let base = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        let ego_from_cam = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch)
            * Rotation3::from_matrix_unchecked(base);
        let cam_from_ego = ego_from_cam.inverse();
        let t = -(cam_from_ego * Vector3::from(position));
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        CameraModel::new(k, cam_from_ego, t, image_size)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    fn to_camera(&self, p: Point2) -> Vector3<f64> {
        self.rotation * Vector3::new(p.x, p.y, 0.0) + self.translation
    }

    /// Projects a ground-plane point; `None` when it is behind the camera.
    pub fn project(&self, p: Point2) -> Option<(f64, f64)> {
        let pc = self.to_camera(p);
        if pc.z <= MIN_DEPTH {
            return None;
        }
        let uvw = self.intrinsics * pc;
        Some((uvw.x / uvw.z, uvw.y / uvw.z))
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.image_size.0 as f64 && v < self.image_size.1 as f64
    }

    /// Intersects the pixel's viewing ray with the ground plane z = 0.
    pub fn back_project(&self, u: f64, v: f64) -> Option<Point2> {
        let k_inv = self.intrinsics.try_inverse()?;
        let dir_cam = k_inv * Vector3::new(u, v, 1.0);
        let ego_from_cam = self.rotation.inverse();
        let origin = ego_from_cam * (-self.translation);
        let dir = ego_from_cam * dir_cam;
        if dir.z.abs() < 1e-12 {
            return None;
        }
        let t = -origin.z / dir.z;
        if t <= 0.0 {
            return None;
        }
        let hit = origin + dir * t;
        Point2::try_new(hit.x, hit.y).ok()
    }
}

/// A projected sample. `u`/`v` are zero when the point is behind the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvPoint {
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

/// Ego-frame cell centers of the valid cells, row-major.
pub fn bev_samples(mask: &ValidMask, spec: &GridSpec) -> Result<Vec<Point2>> {
    if mask.spec() != spec {
        return Err(Error::SpecMismatch("valid mask built on a different grid".into()));
    }
    Ok(mask.cells().iter().map(|&(r, c)| spec.cell_center(r, c)).collect())
}

pub fn project_to_pv(points: &[Point2], camera: &CameraModel) -> Vec<PvPoint> {
    points
        .iter()
        .map(|&p| match camera.project(p) {
            Some((u, v)) => PvPoint {
                u,
                v,
                visible: camera.in_image(u, v),
            },
            None => PvPoint {
                u: 0.0,
                v: 0.0,
                visible: false,
            },
        })
        .collect()
}

/// Per-track sampling coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub track_id: u64,
    /// Real (unpadded) BEV samples in ego meters.
    pub bev: Vec<Point2>,
    /// One list per camera, aligned with `bev`.
    pub pv: Vec<Vec<PvPoint>>,
    /// Length `max_samples`; the first `bev.len()` entries are true.
    pub mask: Vec<bool>,
}

/// Valid mask → BEV coordinates → PV projections.
///
/// When more than `max_samples` cells pass `tau_map`, the highest-confidence
/// cells are kept (ties broken row-major); kept cells stay in row-major order.
pub fn build_sample_set(
    track: &TrackState,
    cameras: &[CameraModel],
    tau_map: f64,
    max_samples: usize,
) -> Result<SampleSet> {
    if max_samples == 0 {
        return Err(Error::argument("max_samples must be at least 1"));
    }
    let raster = &track.history.raster;
    let spec = raster.spec();
    let mask = valid_mask(raster, tau_map);
    let mut cells = mask.cells().to_vec();
    if cells.len() > max_samples {
        let mut ranked: Vec<(usize, (usize, usize))> = cells.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| {
            let va = raster.get(a.1 .0, a.1 .1);
            let vb = raster.get(b.1 .0, b.1 .1);
            vb.total_cmp(&va).then(a.0.cmp(&b.0))
        });
        ranked.truncate(max_samples);
        ranked.sort_by_key(|(i, _)| *i);
        cells = ranked.into_iter().map(|(_, c)| c).collect();
    }
    let kept = ValidMask::new(cells, *spec)?;
    let bev = bev_samples(&kept, spec)?;
    let pv = cameras.iter().map(|cam| project_to_pv(&bev, cam)).collect();
    let mut pad = vec![false; max_samples];
    pad[..bev.len()].iter_mut().for_each(|m| *m = true);
    Ok(SampleSet {
        track_id: track.track_id,
        bev,
        pv,
        mask: pad,
    })
}
