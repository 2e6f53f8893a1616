//! Debug renderings: per-category global rasters, an SVG overview and
//! per-track history maps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::geometry::{Category, Geometry};
use crate::metrics::{global_grid, merge_predictions, raster_global_gt, EvalConfig, GlobalInstance, GlobalMap};
use crate::raster::{HistoryMap, Raster};
use crate::scene::Scene;
use crate::simkit::splitmix64;
use crate::tracker::TrackRecord;

/// Stable stroke color for a track id.
pub fn track_color(id: u64) -> String {
    let h = splitmix64(id);
    format!("hsl({},70%,42%)", h % 360)
}

fn layer(map: &GlobalMap, category: Category) -> Raster {
    let mut r = Raster::zeros(map.grid);
    let cols = map.grid.cols();
    for inst in map.of_category(category) {
        for &i in &inst.cells {
            let v = r.get(i / cols, i % cols).max(inst.score);
            r.set(i / cols, i % cols, v);
        }
    }
    r
}

fn svg_path(out: &mut String, inst: &GlobalInstance, map: &GlobalMap, stroke: &str, class: &str) {
    let Some(el) = &inst.element else { return };
    let (x0, _) = map.grid.x_range();
    let (y0, _) = map.grid.y_range();
    let (sx, sy) = (1.0 / map.grid.cell_width(), 1.0 / map.grid.cell_height());
    let mut d = String::new();
    for (k, p) in el.geometry().points().iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2},{:.2} ",
            if k == 0 { "M" } else { "L" },
            (p.x - x0) * sx,
            (p.y - y0) * sy
        );
    }
    if matches!(el.geometry(), Geometry::Polygon(_)) {
        d.push('Z');
    }
    let _ = writeln!(
        out,
        r#"  <path class="{class} {}" data-id="{}" d="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
        inst.category.name(),
        inst.id,
        d.trim_end()
    );
}

/// Files written by [`render`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderSummary {
    pub files: Vec<String>,
    pub canvas: (usize, usize),
}

/// Writes `gt_<category>.pgm`, `pred_<category>.pgm` (with tracks),
/// `map.svg` and `history/track_<id>.pgm` into `dir`. An empty scene renders a
/// blank canvas the size of its BEV grid.
pub fn render(
    scene: &Scene,
    tracks: Option<&[TrackRecord]>,
    histories: &BTreeMap<u64, HistoryMap>,
    dir: &Path,
    cfg: &EvalConfig,
) -> Result<RenderSummary> {
    fs::create_dir_all(dir)?;
    let grid = if scene.frames.is_empty() {
        scene.header.grid
    } else {
        global_grid(&scene.poses(), &scene.header.grid, cfg)?
    };
    let gt = if scene.frames.is_empty() {
        GlobalMap {
            grid,
            instances: vec![],
        }
    } else {
        let frames: Vec<_> = scene.frames.iter().map(|f| (f.gt.clone(), f.ego_pose)).collect();
        raster_global_gt(&frames, &grid, cfg)?
    };
    let pred = tracks.map(|t| merge_predictions(t, &grid, cfg)).transpose()?;
    let mut summary = RenderSummary {
        files: Vec::new(),
        canvas: (grid.cols(), grid.rows()),
    };
    for c in Category::ALL {
        let stem = format!("gt_{}", c.name());
        layer(&gt, c).save_pgm(dir, &stem)?;
        summary.files.push(format!("{stem}.pgm"));
        if let Some(p) = &pred {
            let stem = format!("pred_{}", c.name());
            layer(p, c).save_pgm(dir, &stem)?;
            summary.files.push(format!("{stem}.pgm"));
        }
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = grid.cols(),
        h = grid.rows()
    );
    let _ = writeln!(svg, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    for inst in &gt.instances {
        svg_path(&mut svg, inst, &gt, "#9a9a9a", "gt");
    }
    if let Some(p) = &pred {
        for inst in &p.instances {
            svg_path(&mut svg, inst, p, &track_color(inst.id), "track");
        }
    }
    svg.push_str("</svg>\n");
    fs::write(dir.join("map.svg"), svg)?;
    summary.files.push("map.svg".into());

    if !histories.is_empty() {
        let hdir = dir.join("history");
        fs::create_dir_all(&hdir)?;
        for (id, h) in histories {
            let stem = format!("track_{id}");
            h.raster.save_pgm(&hdir, &stem)?;
            summary.files.push(format!("history/{stem}.pgm"));
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MapElement, Point2, Pose2};
    use crate::raster::GridSpec;
    use crate::scene::FrameRecord;

    #[test]
    fn colors_are_deterministic() {
        assert_eq!(track_color(17), track_color(17));
        assert_ne!(track_color(1), track_color(2));
    }

    #[test]
    fn empty_scene_is_a_blank_canvas() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::new(GridSpec::default());
        let s = render(&scene, None, &BTreeMap::new(), dir.path(), &EvalConfig::default()).unwrap();
        assert_eq!(s.canvas, (200, 100));
        let pgm = fs::read(dir.path().join("gt_divider.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n200 100\n255\n"));
        assert!(pgm[b"P5\n200 100\n255\n".len()..].iter().all(|&b| b == 0));
        let svg = fs::read_to_string(dir.path().join("map.svg")).unwrap();
        assert_eq!(svg.matches("<path").count(), 0);
    }

    #[test]
    fn one_divider_one_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = Scene::new(GridSpec::default());
        let d = MapElement::polyline(
            vec![Point2::new(-10.0, 1.0), Point2::new(10.0, 1.0)],
            Category::Divider,
            1.0,
        )
        .unwrap()
        .with_track_id(1);
        scene.frames.push(FrameRecord {
            frame_index: 0,
            ego_pose: Pose2::identity(),
            gt: vec![d],
            pred: None,
        });
        render(&scene, None, &BTreeMap::new(), dir.path(), &EvalConfig::default()).unwrap();
        let svg = fs::read_to_string(dir.path().join("map.svg")).unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
    }
}
