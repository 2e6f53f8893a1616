//! Confidence grids: rasterization, temporal decay, ego-motion warping and
//! valid-mask extraction.
//!
//! Grid layout: `row` indexes `y`, `col` indexes `x`, both increasing with
//! the metric coordinate. Cell `(r, c)` covers
//! `[x_min + c·dx, x_min + (c+1)·dx) × [y_min + r·dy, y_min + (r+1)·dy)`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Geometry, MapElement, Point2, Polygon, Pose2};

/// Sample coordinates within this many cells of a cell center snap onto it,
/// so identity and whole-cell warps are exact.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec", into = "RawGridSpec")]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RawGridSpec {
    rows: usize,
    cols: usize,
    x_range: [f64; 2],
    y_range: [f64; 2],
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(
            raw.rows,
            raw.cols,
            (raw.x_range[0], raw.x_range[1]),
            (raw.y_range[0], raw.y_range[1]),
        )
    }
}

impl From<GridSpec> for RawGridSpec {
    fn from(s: GridSpec) -> Self {
        RawGridSpec {
            rows: s.rows,
            cols: s.cols,
            x_range: [s.x_range.0, s.x_range.1],
            y_range: [s.y_range.0, s.y_range.1],
        }
    }
}

impl Default for GridSpec {
    /// 100 rows × 200 columns over a 60 m (x, forward) × 30 m (y, lateral)
    /// ego-centric extent: 0.3 m cells.
    fn default() -> Self {
        GridSpec::new(100, 200, (-30.0, 30.0), (-15.0, 15.0)).expect("valid default grid")
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::argument("grid needs at least one row and column"));
        }
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.1 > r.0;
        if !ok(x_range) || !ok(y_range) {
            return Err(Error::argument(format!(
                "degenerate grid ranges x={x_range:?} y={y_range:?}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            x_range,
            y_range,
        })
    }

    /// Grid covering `bbox` with square cells of `cell_size`, anchored at `bbox.min`.
    pub fn covering(bbox: &Aabb, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::argument("cell size must be positive"));
        }
        let cols = ((bbox.max.x - bbox.min.x) / cell_size).ceil().max(1.0) as usize;
        let rows = ((bbox.max.y - bbox.min.y) / cell_size).ceil().max(1.0) as usize;
        GridSpec::new(
            rows,
            cols,
            (bbox.min.x, bbox.min.x + cols as f64 * cell_size),
            (bbox.min.y, bbox.min.y + rows as f64 * cell_size),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn x_range(&self) -> (f64, f64) {
        self.x_range
    }

    pub fn y_range(&self) -> (f64, f64) {
        self.y_range
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.y_range.1 - self.y_range.0) / self.rows as f64
    }

    pub fn extent(&self) -> Aabb {
        Aabb::new(
            Point2::new(self.x_range.0, self.y_range.0),
            Point2::new(self.x_range.1, self.y_range.1),
        )
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2 {
            x: self.x_range.0 + (col as f64 + 0.5) * self.cell_width(),
            y: self.y_range.0 + (row as f64 + 0.5) * self.cell_height(),
        }
    }

    /// Unbounded integer cell coordinates `(row, col)` of a point.
    pub fn cell_coords(&self, p: Point2) -> (i64, i64) {
        let col = ((p.x - self.x_range.0) / self.cell_width()).floor() as i64;
        let row = ((p.y - self.y_range.0) / self.cell_height()).floor() as i64;
        (row, col)
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let (r, c) = self.cell_coords(p);
        self.in_bounds(r, c).then_some((r as usize, c as usize))
    }

    #[inline]
    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

/// Dense `rows × cols` grid of confidences in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    spec: GridSpec,
    cells: Vec<f64>,
}

impl Raster {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            cells: vec![0.0; spec.len()],
        }
    }

    pub fn from_cells(spec: GridSpec, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != spec.len() {
            return Err(Error::SpecMismatch(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                spec.rows(),
                spec.cols()
            )));
        }
        if let Some(v) = cells.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::argument(format!("cell value {v} outside [0, 1]")));
        }
        Ok(Self { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[self.spec.index(row, col)]
    }

    /// Panics when `value` is outside `[0, 1]`.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!((0.0..=1.0).contains(&value), "cell value {value} outside [0, 1]");
        let i = self.spec.index(row, col);
        self.cells[i] = value;
    }

    pub fn max_value(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|&v| v == 0.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.cells.iter().filter(|&&v| v > 0.0).count()
    }

    /// Row-major `(row, col)` of every cell above zero.
    pub fn occupied(&self) -> Vec<(usize, usize)> {
        let cols = self.spec.cols();
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| (i / cols, i % cols))
            .collect()
    }

    /// Per-cell maximum with another raster of the same spec.
    pub fn max_assign(&mut self, other: &Raster) -> Result<()> {
        check_spec(&self.spec, &other.spec)?;
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a = a.max(*b);
        }
        Ok(())
    }

    /// Writes a binary PGM (P5, maxval 255, value = round(255·v)). Row 0 is written first.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.spec.cols(), self.spec.rows())?;
        let bytes: Vec<u8> = self
            .cells
            .iter()
            .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Writes `<stem>.pgm` plus `<stem>.json` holding the grid spec.
    pub fn save_pgm(&self, dir: &Path, stem: &str) -> Result<()> {
        let file = std::fs::File::create(dir.join(format!("{stem}.pgm")))?;
        self.write_pgm(std::io::BufWriter::new(file))?;
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&self.spec)?,
        )?;
        Ok(())
    }
}

fn check_spec(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::SpecMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// One instance's history map.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryMap {
    pub raster: Raster,
    pub last_update_frame: u64,
}

impl HistoryMap {
    pub fn new(raster: Raster, frame: u64) -> Self {
        Self {
            raster,
            last_update_frame: frame,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        self.raster.spec()
    }
}

/// How a decayed history map is combined with a fresh rasterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `max(λ·old, new)`
    #[default]
    Max,
    /// `min(1, λ·old + new)`
    AddClamp,
}

/// Integer Bresenham between two cells, calling `plot(row, col)` for every cell on the way.
pub fn bresenham(from: (i64, i64), to: (i64, i64), mut plot: impl FnMut(i64, i64)) {
    let (mut r, mut c) = from;
    let dr = (to.0 - r).abs();
    let dc = (to.1 - c).abs();
    let sr = if to.0 > r { 1 } else { -1 };
    let sc = if to.1 > c { 1 } else { -1 };
    let mut err = dc - dr;
    loop {
        plot(r, c);
        if r == to.0 && c == to.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
    }
}

/// Traces one segment at half-cell steps; cells outside the grid are skipped.
fn trace_segment(spec: &GridSpec, a: Point2, b: Point2, mut plot: impl FnMut(usize, usize)) {
    // canonical direction so the traced set does not depend on point order
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let step = 0.5 * spec.cell_width().min(spec.cell_height());
    let n = (a.distance(&b) / step).ceil().max(1.0) as usize;
    let mut prev: Option<(i64, i64)> = None;
    for k in 0..=n {
        let p = if k == n { b } else { a.lerp(&b, k as f64 / n as f64) };
        let cell = spec.cell_coords(p);
        match prev {
            Some(q) if q == cell => continue,
            Some(q) => bresenham(q, cell, |r, c| {
                if spec.in_bounds(r, c) {
                    plot(r as usize, c as usize)
                }
            }),
            None => {
                if spec.in_bounds(cell.0, cell.1) {
                    plot(cell.0 as usize, cell.1 as usize)
                }
            }
        }
        prev = Some(cell);
    }
}

fn trace_chain(spec: &GridSpec, points: &[Point2], closed: bool, mut plot: impl FnMut(usize, usize)) {
    for w in points.windows(2) {
        trace_segment(spec, w[0], w[1], &mut plot);
    }
    if closed && points.len() > 2 {
        trace_segment(spec, points[points.len() - 1], points[0], &mut plot);
    }
}

/// Rasterizes the element's line geometry (polygon boundary rings included)
/// with single-cell-width tracing; touched cells get `value`.
pub fn rasterize(element: &MapElement, spec: &GridSpec, value: f64) -> Result<Raster> {
    rasterize_geometry(element.geometry(), spec, value)
}

pub fn rasterize_geometry(geometry: &Geometry, spec: &GridSpec, value: f64) -> Result<Raster> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::argument(format!("raster value {value} outside [0, 1]")));
    }
    let mut out = Raster::zeros(*spec);
    let cols = spec.cols();
    let cells = &mut out.cells;
    trace_geometry(geometry, spec, |r, c| cells[r * cols + c] = value);
    Ok(out)
}

/// Calls `plot` for every cell touched by the geometry's line work.
pub fn trace_geometry(geometry: &Geometry, spec: &GridSpec, plot: impl FnMut(usize, usize)) {
    match geometry {
        Geometry::Polyline(line) => trace_chain(spec, line.points(), false, plot),
        Geometry::Polygon(poly) => trace_chain(spec, poly.ring(), true, plot),
    }
}

/// Calls `plot` for every in-bounds cell whose center lies inside the polygon.
pub fn polygon_cells(poly: &Polygon, spec: &GridSpec, mut plot: impl FnMut(usize, usize)) {
    let bb = poly.bbox();
    let (r0, c0) = spec.cell_coords(bb.min);
    let (r1, c1) = spec.cell_coords(bb.max);
    let r0 = r0.max(0);
    let c0 = c0.max(0);
    let r1 = r1.min(spec.rows() as i64 - 1);
    let c1 = c1.min(spec.cols() as i64 - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (r, c) = (r as usize, c as usize);
            if poly.contains(spec.cell_center(r, c)) {
                plot(r, c);
            }
        }
    }
}

/// Marks every cell whose center lies inside the polygon with `value`.
pub fn fill_polygon(poly: &Polygon, spec: &GridSpec, value: f64, out: &mut Raster) -> Result<()> {
    check_spec(spec, out.spec())?;
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::argument(format!("fill value {value} outside [0, 1]")));
    }
    let cols = spec.cols();
    let cells = &mut out.cells;
    polygon_cells(poly, spec, |r, c| cells[r * cols + c] = value);
    Ok(())
}

/// Decays `map` by `lambda` and merges `fresh` into it.
pub fn decay_update(map: &HistoryMap, fresh: &Raster, lambda: f64, frame: u64) -> Result<HistoryMap> {
    decay_update_with(map, fresh, lambda, frame, UpdateRule::Max)
}

pub fn decay_update_with(
    map: &HistoryMap,
    fresh: &Raster,
    lambda: f64,
    frame: u64,
    rule: UpdateRule,
) -> Result<HistoryMap> {
    check_spec(map.spec(), fresh.spec())?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::argument(format!("decay factor {lambda} outside (0, 1]")));
    }
    let cells = map
        .raster
        .cells
        .iter()
        .zip(&fresh.cells)
        .map(|(&old, &new)| match rule {
            UpdateRule::Max => (lambda * old).max(new),
            UpdateRule::AddClamp => (lambda * old + new).min(1.0),
        })
        .collect();
    Ok(HistoryMap::new(
        Raster {
            spec: *map.spec(),
            cells,
        },
        frame,
    ))
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPS {
        r
    } else {
        v
    }
}

/// Re-expresses a raster built in the ego frame at `pose_prev` in the ego
/// frame at `pose_next`. Inverse warp with bilinear sampling; samples falling
/// outside the source grid read as zero.
pub fn warp(raster: &Raster, pose_prev: &Pose2, pose_next: &Pose2) -> Raster {
    // next-ego point -> global -> prev-ego point
    let rel = pose_prev.inverse().compose(pose_next);
    if rel == Pose2::identity() {
        return raster.clone();
    }
    let spec = raster.spec;
    let (x0, y0) = (spec.x_range.0, spec.y_range.0);
    let (dx, dy) = (spec.cell_width(), spec.cell_height());
    let (s, c) = rel.theta().sin_cos();

    // source continuous index (u = col, v = row; centers at integers) is affine in (col, row)
    let to_src = |col: f64, row: f64| -> (f64, f64) {
        let px = x0 + (col + 0.5) * dx;
        let py = y0 + (row + 0.5) * dy;
        let qx = c * px - s * py + rel.x();
        let qy = s * px + c * py + rel.y();
        ((qx - x0) / dx - 0.5, (qy - y0) / dy - 0.5)
    };

    let rows = spec.rows() as i64;
    let cols = spec.cols() as i64;
    let sample = |r: i64, c: i64| -> f64 {
        if r >= 0 && c >= 0 && r < rows && c < cols {
            raster.cells[(r * cols + c) as usize]
        } else {
            0.0
        }
    };

    let mut out = vec![0.0; spec.len()];
    for row in 0..spec.rows() {
        for col in 0..spec.cols() {
            let (u, v) = to_src(col as f64, row as f64);
            let (u, v) = (snap(u), snap(v));
            let cu = u.floor();
            let rv = v.floor();
            if cu < -1.0 || rv < -1.0 || cu > cols as f64 || rv > rows as f64 {
                continue;
            }
            let (ci, ri) = (cu as i64, rv as i64);
            let fu = u - cu;
            let fv = v - rv;
            let mut val = (1.0 - fu) * (1.0 - fv) * sample(ri, ci);
            if fu > 0.0 {
                val += fu * (1.0 - fv) * sample(ri, ci + 1);
            }
            if fv > 0.0 {
                val += (1.0 - fu) * fv * sample(ri + 1, ci);
                if fu > 0.0 {
                    val += fu * fv * sample(ri + 1, ci + 1);
                }
            }
            out[row * spec.cols() + col] = val.clamp(0.0, 1.0);
        }
    }
    Raster { spec, cells: out }
}

/// Cells whose value strictly exceeds a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidMask {
    cells: Vec<(usize, usize)>,
    spec: GridSpec,
}

impl ValidMask {
    /// Sorts row-major and deduplicates; out-of-bounds indices are rejected.
    pub fn new(mut cells: Vec<(usize, usize)>, spec: GridSpec) -> Result<Self> {
        if let Some(&(r, c)) = cells.iter().find(|(r, c)| *r >= spec.rows() || *c >= spec.cols()) {
            return Err(Error::argument(format!("mask cell ({r}, {c}) out of bounds")));
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(Self { cells, spec })
    }

    /// Row-major cell indices.
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn valid_mask(raster: &Raster, tau_map: f64) -> ValidMask {
    let cols = raster.spec.cols();
    let cells = raster
        .cells
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tau_map)
        .map(|(i, _)| (i / cols, i % cols))
        .collect();
    ValidMask {
        cells,
        spec: raster.spec,
    }
}
