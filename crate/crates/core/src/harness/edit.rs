//! Manual boundary editing: export a surface polygon for an operator, and
//! validate the edited polygon on the way back in.

use super::io::{read_json, write_json, IoError, SurfacesFile, FORMAT_VERSION};
use crate::geometry::Point3;
use crate::segmentation::{cross2, polygon_area, project_to_plane, signed_area_2d, PlanarSurface, AREA_EPSILON};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("vertex {vertex} lies {distance:.3} m off the plane (limit {limit} m)")]
    NonPlanarEdit { vertex: usize, distance: f64, limit: f64 },
    #[error("edges {first} and {second} of the edited polygon intersect")]
    SelfIntersectingPolygon { first: usize, second: usize },
    #[error("edited polygon needs at least 3 distinct vertices with non-zero area")]
    Degenerate,
    #[error("no surface {0}")]
    NoSuchSurface(usize),
    #[error("{0}")]
    Io(String),
}

impl From<IoError> for EditError {
    fn from(e: IoError) -> Self {
        EditError::Io(e.to_string())
    }
}

/// Polygon file handed to the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFile {
    pub version: u32,
    pub surface: usize,
    pub normal: [f64; 3],
    pub d: f64,
    pub boundary: Vec<[f64; 3]>,
}

pub fn export_boundary(surfaces: &SurfacesFile, index: usize, path: &Path) -> Result<(), EditError> {
    let rec = surfaces.planes.get(index).ok_or(EditError::NoSuchSurface(index))?;
    let file = BoundaryFile {
        version: FORMAT_VERSION,
        surface: index,
        normal: rec.normal,
        d: rec.d,
        boundary: rec.boundary.clone(),
    };
    write_json(path, &file)?;
    Ok(())
}

/// Reads an edited polygon and replaces the boundary of surface `index`.
pub fn import_boundary_file(
    surfaces: &mut SurfacesFile,
    index: usize,
    path: &Path,
    distance_threshold: f64,
) -> Result<PlanarSurface, EditError> {
    let edited: BoundaryFile = read_json(path)?;
    let rec = surfaces.planes.get_mut(index).ok_or(EditError::NoSuchSurface(index))?;
    let surface = rec.to_surface()?;
    let polygon: Vec<Point3<f64>> = edited.boundary.iter().map(|p| Point3::from(*p)).collect();
    let updated = import_boundary(&surface, &polygon, distance_threshold)?;
    rec.boundary = updated.boundary.iter().map(|p| [p.x, p.y, p.z]).collect();
    rec.area = updated.area;
    Ok(updated)
}

fn segments_intersect(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> bool {
    let d1 = cross2(c, d, a);
    let d2 = cross2(c, d, b);
    let d3 = cross2(a, b, c);
    let d4 = cross2(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: &Vector2<f64>, q: &Vector2<f64>, r: &Vector2<f64>, side: f64| {
        side == 0.0 && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// First pair of non-adjacent edges that touch, if any.
pub fn find_self_intersection(poly: &[Vector2<f64>]) -> Option<(usize, usize)> {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(&poly[i], &poly[(i + 1) % n], &poly[j], &poly[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Replaces the surface boundary with an operator-edited polygon.
///
/// Every vertex must lie within `distance_threshold` of the plane and the
/// polygon must be simple. Concave polygons are accepted. Vertices are kept as
/// given, reordered counter-clockwise in the plane basis when needed, and the
/// area is recomputed from the polygon.
pub fn import_boundary(
    surface: &PlanarSurface,
    polygon: &[Point3<f64>],
    distance_threshold: f64,
) -> Result<PlanarSurface, EditError> {
    for (vertex, p) in polygon.iter().enumerate() {
        let distance = surface.model.distance(p);
        if !(distance <= distance_threshold) {
            return Err(EditError::NonPlanarEdit {
                vertex,
                distance,
                limit: distance_threshold,
            });
        }
    }
    if polygon.len() < 3 {
        return Err(EditError::Degenerate);
    }
    let (coords, _) = project_to_plane(polygon, &surface.model);
    if coords.iter().enumerate().any(|(i, p)| *p == coords[(i + 1) % coords.len()]) {
        return Err(EditError::Degenerate);
    }
    if let Some((first, second)) = find_self_intersection(&coords) {
        return Err(EditError::SelfIntersectingPolygon { first, second });
    }
    let signed = signed_area_2d(&coords);
    if signed.abs() < AREA_EPSILON {
        return Err(EditError::Degenerate);
    }
    let mut boundary = polygon.to_vec();
    if signed < 0.0 {
        boundary.reverse();
    }
    let area = polygon_area(&boundary, &surface.model);
    Ok(PlanarSurface {
        model: surface.model,
        inliers: surface.inliers.clone(),
        boundary,
        area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::PlaneModel;

    fn rect_surface() -> PlanarSurface {
        let boundary = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(4.0, 2.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        let model = PlaneModel::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let area = polygon_area(&boundary, &model);
        PlanarSurface { model, inliers: vec![0, 1], boundary, area }
    }

    #[test]
    fn unedited_round_trip_is_exact() {
        let s = rect_surface();
        let back = import_boundary(&s, &s.boundary, 0.2).unwrap();
        assert_eq!(back, s);

        let dir = tempfile::tempdir().unwrap();
        let mut file = SurfacesFile::new(std::slice::from_ref(&s), None);
        let before = file.clone();
        let p = dir.path().join("b.json");
        export_boundary(&file, 0, &p).unwrap();
        import_boundary_file(&mut file, 0, &p, 0.2).unwrap();
        assert_eq!(file, before);
    }

    #[test]
    fn concave_edit_accepted_and_clockwise_fixed() {
        let s = rect_surface();
        let mut l = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(4.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.05),
            Point3::new(1.0, 2.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        l.reverse();
        let out = import_boundary(&s, &l, 0.2).unwrap();
        assert!((out.area - 5.0).abs() < 1e-12);
        let (coords, _) = out.boundary_2d();
        assert!(signed_area_2d(&coords) > 0.0);
    }

    #[test]
    fn rejects_off_plane_and_bow_tie() {
        let s = rect_surface();
        let mut off = s.boundary.clone();
        off[2].z = 1.0;
        assert!(matches!(import_boundary(&s, &off, 0.2), Err(EditError::NonPlanarEdit { vertex: 2, .. })));
        let bow = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 2.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
        ];
        assert!(matches!(import_boundary(&s, &bow, 0.2), Err(EditError::SelfIntersectingPolygon { .. })));
        let touching = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(2.0, 2.0, 0.0),
        ];
        assert!(import_boundary(&s, &touching, 0.2).is_err());
        assert_eq!(import_boundary(&s, &s.boundary[..2], 0.2), Err(EditError::Degenerate));
    }
}
