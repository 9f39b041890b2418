//! Static top-down and elevation renders of a cloud with surfaces and plans.

use crate::geometry::{Aabb, Point3};
use std::fmt::Write as _;

/// Drawing plane: which two world axes map to the image axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// x right, y up.
    TopDown,
    /// x right, z up.
    Elevation,
}

impl View {
    fn axes(self) -> (usize, usize) {
        match self {
            View::TopDown => (0, 1),
            View::Elevation => (0, 2),
        }
    }
}

pub struct SvgScene<'a> {
    pub points: &'a [Point3<f64>],
    pub boundaries: &'a [Vec<Point3<f64>>],
    pub paths: &'a [Vec<Point3<f64>>],
    pub stops: &'a [Point3<f64>],
}

const SIZE: f64 = 800.0;
const PAD: f64 = 20.0;
const MAX_POINTS: usize = 20_000;

pub fn render(scene: &SvgScene, view: View) -> String {
    let (ax, ay) = view.axes();
    let all = scene
        .points
        .iter()
        .chain(scene.boundaries.iter().flatten())
        .chain(scene.paths.iter().flatten())
        .chain(scene.stops);
    let bounds = Aabb::from_points(all).unwrap_or(Aabb {
        min: Point3::origin(),
        max: Point3::new(1.0, 1.0, 1.0),
    });
    let (w, h) = ((bounds.max[ax] - bounds.min[ax]).max(1e-6), (bounds.max[ay] - bounds.min[ay]).max(1e-6));
    let scale = (SIZE - 2.0 * PAD) / w.max(h);
    let (width, height) = (w * scale + 2.0 * PAD, h * scale + 2.0 * PAD);
    let map = |p: &Point3<f64>| {
        (
            PAD + (p[ax] - bounds.min[ax]) * scale,
            height - PAD - (p[ay] - bounds.min[ay]) * scale,
        )
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let stride = scene.points.len().div_ceil(MAX_POINTS).max(1);
    let _ = writeln!(out, r##"<g fill="#888888">"##);
    for p in scene.points.iter().step_by(stride) {
        let (x, y) = map(p);
        let _ = writeln!(out, r#"<rect x="{x:.2}" y="{y:.2}" width="1" height="1"/>"#);
    }
    out.push_str("</g>\n");
    let polyline = |out: &mut String, pts: &[Point3<f64>], closed: bool, style: &str| {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let tag = if closed { "polygon" } else { "polyline" };
        let _ = writeln!(out, r#"<{tag} points="{}" {style}/>"#, coords.join(" "));
    };
    for b in scene.boundaries {
        polyline(&mut out, b, true, r##"fill="none" stroke="#1f77b4" stroke-width="2""##);
    }
    for p in scene.paths {
        polyline(&mut out, p, false, r##"fill="none" stroke="#2ca02c" stroke-width="1""##);
    }
    let _ = writeln!(out, r##"<g fill="#d62728">"##);
    for s in scene.stops {
        let (x, y) = map(s);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
    }
    out.push_str("</g>\n</svg>\n");
    out
}
