//! Benchmark fixtures shared by the criterion targets.

use histmap_core::simkit::{crop_frame, generate};
use histmap_core::{MapElement, Point2, Pose2, ScenarioSpec};

/// A gently curving divider with `n` points spanning most of the default BEV.
pub fn curved_divider(n: usize) -> MapElement {
    let pts = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            Point2::new(-28.0 + 56.0 * t, 4.0 * (3.0 * t).sin())
        })
        .collect();
    MapElement::polyline(pts, histmap_core::Category::Divider, 0.9).unwrap()
}

/// Ground-truth crop of frame 10 of a default straight scenario.
pub fn sample_frame() -> (Vec<MapElement>, Pose2) {
    let sc = generate(&ScenarioSpec::default(), 0).unwrap();
    crop_frame(&sc, 10).unwrap()
}
