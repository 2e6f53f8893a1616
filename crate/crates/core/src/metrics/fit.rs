//! Recovering an ordered polyline from an unordered set of raster cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polyline};
use crate::raster::{GridSpec, Raster};

/// Adaptive fitting parameters used by the global pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Minimum number of sampled points.
    pub min_points: usize,
    /// Keep sampling until every occupied cell lies within this distance (meters)
    /// of a sampled point.
    pub max_radius: f64,
    /// Chains split at jumps longer than this many cells, or longer than four
    /// covering radii plus a cell diagonal if that is more.
    pub max_gap_cells: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_points: 20,
            max_radius: 0.75,
            max_gap_cells: 5.0,
        }
    }
}

/// Farthest point sampling result: chosen indices in selection order plus the
/// covering radius of the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct FpsSample {
    pub indices: Vec<usize>,
    pub radius: f64,
}

/// Farthest point sampling seeded at `points[0]`; ties go to the lowest index.
/// Stops after `max_points` picks, or earlier once the covering radius drops to
/// `radius` or below (after at least `min_points` picks).
pub fn farthest_point_sampling(points: &[Point2], min_points: usize, max_points: usize, radius: f64) -> FpsSample {
    if points.is_empty() || max_points == 0 {
        return FpsSample {
            indices: Vec::new(),
            radius: 0.0,
        };
    }
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut indices = vec![0usize];
    let mut current = 0usize;
    loop {
        let p = points[current];
        let mut best = (0usize, -1.0f64);
        for (i, q) in points.iter().enumerate() {
            let d = p.distance_squared(q);
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.1 {
                best = (i, dist[i]);
            }
        }
        let covering = best.1.sqrt();
        let enough = indices.len() >= min_points && covering <= radius;
        if indices.len() >= max_points || enough || best.1 <= 0.0 {
            return FpsSample {
                indices,
                radius: covering,
            };
        }
        current = best.0;
        indices.push(current);
    }
}

/// Greedy nearest-neighbour ordering starting at the point farthest from the
/// centroid (ties to the earliest point).
pub fn chain_points(points: &[Point2]) -> Vec<Point2> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let centroid = Point2 { x: cx, y: cy };
    let mut start = 0;
    for (i, p) in points.iter().enumerate() {
        if p.distance_squared(&centroid) > points[start].distance_squared(&centroid) {
            start = i;
        }
    }
    let mut used = vec![false; points.len()];
    let mut order = Vec::with_capacity(points.len());
    let mut cur = start;
    used[cur] = true;
    order.push(points[cur]);
    for _ in 1..points.len() {
        let mut next = usize::MAX;
        let mut best = f64::INFINITY;
        for (i, q) in points.iter().enumerate() {
            if !used[i] {
                let d = points[cur].distance_squared(q);
                if d < best {
                    best = d;
                    next = i;
                }
            }
        }
        used[next] = true;
        order.push(points[next]);
        cur = next;
    }
    order
}

/// Relocates single points to their cheapest insertion position while that
/// shortens the chain. Repairs the stragglers greedy chaining leaves behind
/// on thick rasters, which would otherwise show up as long jumps.
pub fn refine_chain(chain: &mut Vec<Point2>) {
    const MAX_PASSES: usize = 50;
    let n = chain.len();
    if n < 3 {
        return;
    }
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for i in 0..n {
            let p = chain[i];
            let gain = if i == 0 {
                p.distance(&chain[1])
            } else if i == n - 1 {
                p.distance(&chain[n - 2])
            } else {
                p.distance(&chain[i - 1]) + p.distance(&chain[i + 1]) - chain[i - 1].distance(&chain[i + 1])
            };
            let rest: Vec<Point2> = chain
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, q)| *q)
                .collect();
            // slot k inserts before rest[k]; slot rest.len() appends
            let mut best = (i, gain - 1e-9);
            let mut consider = |slot: usize, cost: f64| {
                if cost < best.1 {
                    best = (slot, cost);
                }
            };
            consider(0, p.distance(&rest[0]));
            consider(rest.len(), p.distance(&rest[rest.len() - 1]));
            for k in 1..rest.len() {
                consider(
                    k,
                    p.distance(&rest[k - 1]) + p.distance(&rest[k]) - rest[k - 1].distance(&rest[k]),
                );
            }
            if best.0 != i {
                let mut rest = rest;
                rest.insert(best.0, p);
                *chain = rest;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Splits a chain at jumps longer than `max_gap` and returns the piece with
/// the greatest arc length (the earliest on ties).
pub fn longest_run(chain: &[Point2], max_gap: f64) -> Vec<Point2> {
    let mut best: (f64, usize, usize) = (-1.0, 0, 0);
    let mut start = 0;
    let mut len = 0.0;
    for i in 0..chain.len() {
        let end_here = i + 1 == chain.len() || chain[i].distance(&chain[i + 1]) > max_gap;
        if end_here {
            if len > best.0 {
                best = (len, start, i + 1);
            }
            start = i + 1;
            len = 0.0;
        } else {
            len += chain[i].distance(&chain[i + 1]);
        }
    }
    chain[best.1..best.2].to_vec()
}

fn fit_points(
    points: &[Point2],
    spec: &GridSpec,
    min_points: usize,
    max_points: usize,
    cfg: &FitConfig,
) -> Result<Polyline> {
    if points.len() < 2 {
        return Err(Error::Empty(format!(
            "polyline fit needs at least 2 occupied cells, got {}",
            points.len()
        )));
    }
    let sample = farthest_point_sampling(points, min_points, max_points, cfg.max_radius);
    let picked: Vec<Point2> = sample.indices.iter().map(|&i| points[i]).collect();
    let mut chain = chain_points(&picked);
    refine_chain(&mut chain);
    let diag = spec.cell_width().hypot(spec.cell_height());
    let cell = spec.cell_width().max(spec.cell_height());
    let max_gap = (cfg.max_gap_cells * cell).max(4.0 * sample.radius + diag);
    let run = longest_run(&chain, max_gap);
    if run.len() < 2 {
        return Err(Error::geometry("polyline fit collapsed to a single point"));
    }
    Polyline::new(run)
}

/// Fits an ordered polyline of at most `n_points` points to the occupied
/// cells of `raster`.
pub fn fit_polyline(raster: &Raster, n_points: usize) -> Result<Polyline> {
    if n_points < 2 {
        return Err(Error::argument("n_points must be at least 2"));
    }
    let spec = raster.spec();
    let points: Vec<Point2> = raster
        .occupied()
        .into_iter()
        .map(|(r, c)| spec.cell_center(r, c))
        .collect();
    fit_points(&points, spec, n_points, n_points, &FitConfig::default())
}

/// Adaptive variant over a sorted list of flat cell indices.
pub fn fit_cells(spec: &GridSpec, cells: &[usize], cfg: &FitConfig) -> Result<Polyline> {
    let cols = spec.cols();
    let points: Vec<Point2> = cells.iter().map(|&i| spec.cell_center(i / cols, i % cols)).collect();
    let min = cfg.min_points.max(2);
    fit_points(&points, spec, min, points.len().max(min), cfg)
}
