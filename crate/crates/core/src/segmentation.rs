//! Planar surface extraction: RANSAC plane hypotheses, total-least-squares
//! refinement, largest-component trimming, convex boundaries and area gating.

use crate::clustering::{euclidean_cluster_points, ClusterConfig};
use crate::geometry::{Point3, PointCloud};
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Areas below this are treated as zero.
pub const AREA_EPSILON: f64 = 1e-6;
/// Collinearity tolerance for 3-point samples, relative to the edge lengths.
const COLLINEAR_EPS: f64 = 1e-9;
/// Redraw budget for degenerate samples, per configured iteration.
const REDRAWS_PER_ITERATION: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no plane with at least {min_inliers} inliers (best {best})")]
    NoPlaneFound { best: usize, min_inliers: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `n·x + d = 0` with unit normal `n = (a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub d: f64,
}

impl PlaneModel {
    /// Normalizes `(a, b, c, d)` so that the normal has unit length.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, SegmentationError> {
        let n = Vector3::new(a, b, c);
        let len = n.norm();
        if !(len > 0.0) || !len.is_finite() || !d.is_finite() {
            return Err(SegmentationError::DegenerateGeometry("zero plane normal"));
        }
        Ok(Self {
            normal: n / len,
            d: d / len,
        })
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.d]
    }

    /// Signed distance of `p` to the plane.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.d
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn project(&self, p: &Point3<f64>) -> Point3<f64> {
        p - self.normal * self.signed_distance(p)
    }
}

/// How a surface's area is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AreaEstimator {
    /// Shoelace area of the convex boundary.
    Hull,
    /// Inlier count times the footprint of one voxel-grid cell.
    InlierDensity { leaf_size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub distance_threshold: f64,
    pub iterations: usize,
    pub min_inliers: usize,
    /// Surfaces smaller than this are rejected (m²).
    pub min_area: f64,
    /// Surfaces larger than this are rejected (m²).
    pub max_area: f64,
    pub rng_seed: u64,
    pub area_estimator: AreaEstimator,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.20,
            iterations: 200,
            min_inliers: 100,
            min_area: 2.0,
            max_area: f64::INFINITY,
            rng_seed: 0,
            area_estimator: AreaEstimator::Hull,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        if !(self.distance_threshold > 0.0) {
            return Err(SegmentationError::InvalidConfig("distance_threshold must be > 0"));
        }
        if self.iterations < 1 {
            return Err(SegmentationError::InvalidConfig("iterations must be >= 1"));
        }
        if !(self.min_area >= 0.0) || !(self.max_area >= self.min_area) {
            return Err(SegmentationError::InvalidConfig("need 0 <= min_area <= max_area"));
        }
        Ok(())
    }
}

/// A fitted plane and the indices of the points within the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub model: PlaneModel,
    pub inliers: Vec<usize>,
}

fn inliers_of(points: &[Point3<f64>], model: &PlaneModel, threshold: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| model.distance(p) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn count_inliers(points: &[Point3<f64>], model: &PlaneModel, threshold: f64) -> usize {
    points.iter().filter(|p| model.distance(p) <= threshold).count()
}

fn centered_covariance(points: &[Point3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let c = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    (c, cov / n)
}

/// True when the points span at most a line.
fn is_collinear(points: &[Point3<f64>]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let (_, cov) = centered_covariance(points);
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Total-least-squares plane: the smallest-eigenvalue eigenvector of the
/// centered covariance. The sign makes `d ≤ 0`; when `d` vanishes the first
/// nonzero normal component is made positive.
pub fn refine_plane(points: &[Point3<f64>]) -> Result<PlaneModel, SegmentationError> {
    if points.len() < 3 || is_collinear(points) {
        return Err(SegmentationError::DegenerateGeometry(
            "plane fit needs 3 non-collinear points",
        ));
    }
    let (c, cov) = centered_covariance(points);
    let eig = cov.symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("3 eigenvalues");
    let mut n: Vector3<f64> = eig.eigenvectors.column(imin).normalize();
    let mut d = -n.dot(&c);
    let flip = if d.abs() <= 1e-12 * (1.0 + c.norm()) {
        d = 0.0;
        n.iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0)
    } else {
        d > 0.0
    };
    if flip {
        n = -n;
        d = -d;
    }
    Ok(PlaneModel { normal: n, d })
}

/// Seeded RANSAC over 3-point samples. The winning hypothesis (most inliers,
/// earliest trial on ties) is refined over its inliers and the inlier set is
/// recomputed against the refined model.
pub fn ransac_plane(points: &[Point3<f64>], cfg: &RansacConfig) -> Result<PlaneFit, SegmentationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    ransac_plane_with_rng(points, cfg, &mut rng)
}

pub(crate) fn ransac_plane_with_rng(
    points: &[Point3<f64>],
    cfg: &RansacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlaneFit, SegmentationError> {
    cfg.validate()?;
    let no_plane = |best| SegmentationError::NoPlaneFound {
        best,
        min_inliers: cfg.min_inliers,
    };
    if points.len() < 3 || is_collinear(points) {
        return Err(no_plane(0));
    }

    let mut best: Option<(usize, PlaneModel)> = None;
    let mut trials = 0;
    let mut redraws = 0;
    while trials < cfg.iterations {
        let idx = sample(rng, points.len(), 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let (e1, e2) = (b - a, c - a);
        let n = e1.cross(&e2);
        if n.norm() <= COLLINEAR_EPS * e1.norm() * e2.norm() {
            redraws += 1;
            if redraws > REDRAWS_PER_ITERATION * cfg.iterations {
                break;
            }
            continue;
        }
        let normal = n.normalize();
        let model = PlaneModel {
            normal,
            d: -normal.dot(&a.coords),
        };
        let count = count_inliers(points, &model, cfg.distance_threshold);
        if best.as_ref().is_none_or(|(bc, _)| count > *bc) {
            best = Some((count, model));
        }
        trials += 1;
    }

    let Some((count, model)) = best else {
        return Err(no_plane(0));
    };
    if count < cfg.min_inliers || count < 3 {
        return Err(no_plane(count));
    }
    let hypothesis_inliers = inliers_of(points, &model, cfg.distance_threshold);
    let support: Vec<Point3<f64>> = hypothesis_inliers.iter().map(|&i| points[i]).collect();
    let refined = match refine_plane(&support) {
        Ok(m) => m,
        Err(_) => return Err(no_plane(count)),
    };
    let inliers = inliers_of(points, &refined, cfg.distance_threshold);
    if inliers.len() < cfg.min_inliers {
        return Err(no_plane(inliers.len()));
    }
    Ok(PlaneFit {
        model: refined,
        inliers,
    })
}

/// Orthonormal frame of a plane: `origin` is the foot of the global origin,
/// `u` the projection of the global axis least aligned with the normal and
/// `v = n × u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneBasis {
    pub origin: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl PlaneBasis {
    pub fn of(model: &PlaneModel) -> Self {
        let n = model.normal;
        let axis = (0..3)
            .min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
            .expect("three axes");
        let e = Vector3::ith(axis, 1.0);
        let u = (e - n * n.dot(&e)).normalize();
        let v = n.cross(&u);
        Self {
            origin: Point3::from(-model.d * n),
            u,
            v,
            normal: n,
        }
    }

    pub fn to_2d(&self, p: &Point3<f64>) -> Vector2<f64> {
        let r = p - self.origin;
        Vector2::new(r.dot(&self.u), r.dot(&self.v))
    }

    pub fn lift(&self, q: &Vector2<f64>) -> Point3<f64> {
        self.origin + self.u * q.x + self.v * q.y
    }
}

/// In-plane coordinates of `points` (the normal component is dropped).
pub fn project_to_plane(points: &[Point3<f64>], model: &PlaneModel) -> (Vec<Vector2<f64>>, PlaneBasis) {
    let basis = PlaneBasis::of(model);
    (points.iter().map(|p| basis.to_2d(p)).collect(), basis)
}

#[inline]
pub fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain) without collinear vertices,
/// starting from the lexicographically smallest point.
pub fn convex_hull_2d(points: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, SegmentationError> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(SegmentationError::DegenerateGeometry("hull needs 3 distinct points"));
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(SegmentationError::DegenerateGeometry("points are collinear"));
    }
    Ok(hull)
}

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn signed_area_2d(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Area of a planar polygon given by 3D vertices, measured in the plane basis.
/// Slivers below [`AREA_EPSILON`] count as zero.
pub fn polygon_area(boundary: &[Point3<f64>], model: &PlaneModel) -> f64 {
    let (poly, _) = project_to_plane(boundary, model);
    let a = signed_area_2d(&poly).abs();
    if a < AREA_EPSILON {
        0.0
    } else {
        a
    }
}

/// Even-odd point-in-polygon test, boundary points count as inside.
pub fn point_in_polygon(q: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        if on_segment(q, a, b) {
            return true;
        }
        if (a.y > q.y) != (b.y > q.y) {
            let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(q: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let len = (b - a).norm();
    cross2(a, b, q).abs() <= 1e-12 * len.max(1.0)
        && q.x >= a.x.min(b.x) - 1e-12
        && q.x <= a.x.max(b.x) + 1e-12
        && q.y >= a.y.min(b.y) - 1e-12
        && q.y <= a.y.max(b.y) + 1e-12
}

/// A detected planar surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarSurface {
    pub model: PlaneModel,
    /// Indices into the cloud the surface was extracted from, ascending.
    pub inliers: Vec<usize>,
    /// Polygon on the plane, counter-clockwise in the plane basis.
    pub boundary: Vec<Point3<f64>>,
    pub area: f64,
}

impl PlanarSurface {
    /// Boundary vertices in plane coordinates.
    pub fn boundary_2d(&self) -> (Vec<Vector2<f64>>, PlaneBasis) {
        project_to_plane(&self.boundary, &self.model)
    }
}

/// Shoelace area of the surface boundary in its plane basis.
pub fn surface_area(surface: &PlanarSurface) -> f64 {
    polygon_area(&surface.boundary, &surface.model)
}

/// Why a plane hypothesis was set aside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooSmall,
    TooLarge,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedPlane {
    pub model: PlaneModel,
    pub indices: Vec<usize>,
    pub area: f64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub surfaces: Vec<PlanarSurface>,
    pub rejected: Vec<RejectedPlane>,
    /// Every point not in an accepted surface, ascending (rejected planes
    /// included), handed on to obstacle clustering.
    pub remainder_indices: Vec<usize>,
    pub remainder: PointCloud,
}

/// Repeatedly extracts planes until RANSAC finds none: each hypothesis is
/// trimmed to its largest ε-connected component, bounded by the convex hull of
/// the projected component, and accepted iff its area lies in
/// `[min_area, max_area]`. The component leaves the working set either way;
/// the trimmed-off inliers stay in it.
pub fn extract_surfaces(
    cloud: &PointCloud,
    cfg: &RansacConfig,
    cluster_eps: f64,
) -> Result<Segmentation, SegmentationError> {
    cfg.validate()?;
    let trim_cfg = ClusterConfig {
        radius: cluster_eps,
        min_cluster_size: 1,
    };
    if trim_cfg.validate().is_err() {
        return Err(SegmentationError::InvalidConfig("cluster_eps must be > 0"));
    }
    let all = cloud.points();
    let mut working: Vec<usize> = (0..all.len()).collect();
    let mut accepted = vec![false; all.len()];
    let mut surfaces = Vec::new();
    let mut rejected = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    loop {
        let pts: Vec<Point3<f64>> = working.iter().map(|&i| all[i]).collect();
        let fit = match ransac_plane_with_rng(&pts, cfg, &mut rng) {
            Ok(f) => f,
            Err(SegmentationError::NoPlaneFound { .. }) => break,
            Err(e) => return Err(e),
        };
        let inlier_pts: Vec<Point3<f64>> = fit.inliers.iter().map(|&i| pts[i]).collect();
        let comps = euclidean_cluster_points(&inlier_pts, &trim_cfg)
            .map_err(|_| SegmentationError::InvalidConfig("cluster_eps must be > 0"))?;
        let largest = &comps.clusters[0];
        let mut component: Vec<usize> = largest.indices.iter().map(|&k| working[fit.inliers[k]]).collect();
        component.sort_unstable();

        let comp_pts: Vec<Point3<f64>> = component.iter().map(|&i| all[i]).collect();
        let (coords, basis) = project_to_plane(&comp_pts, &fit.model);
        let outcome = match convex_hull_2d(&coords) {
            Ok(hull) => {
                let boundary: Vec<Point3<f64>> = hull.iter().map(|q| basis.lift(q)).collect();
                let area = match cfg.area_estimator {
                    AreaEstimator::Hull => polygon_area(&boundary, &fit.model),
                    AreaEstimator::InlierDensity { leaf_size } => component.len() as f64 * leaf_size * leaf_size,
                };
                if area < cfg.min_area || area < AREA_EPSILON {
                    Err((area, RejectReason::TooSmall))
                } else if area > cfg.max_area {
                    Err((area, RejectReason::TooLarge))
                } else {
                    Ok((boundary, area))
                }
            }
            Err(_) => Err((0.0, RejectReason::Degenerate)),
        };
        match outcome {
            Ok((boundary, area)) => {
                for &i in &component {
                    accepted[i] = true;
                }
                log::debug!(
                    "surface {}: {} inliers, area {:.2} m²",
                    surfaces.len(),
                    component.len(),
                    area
                );
                surfaces.push(PlanarSurface {
                    model: fit.model,
                    inliers: component.clone(),
                    boundary,
                    area,
                });
            }
            Err((area, reason)) => rejected.push(RejectedPlane {
                model: fit.model,
                indices: component.clone(),
                area,
                reason,
            }),
        }
        // both vectors are ascending: drop the component from the working set
        let mut c = component.iter().peekable();
        working.retain(|i| {
            while c.peek().is_some_and(|&&x| x < *i) {
                c.next();
            }
            c.peek() != Some(&i)
        });
    }

    let remainder_indices: Vec<usize> = (0..all.len()).filter(|&i| !accepted[i]).collect();
    Ok(Segmentation {
        remainder: cloud.select(&remainder_indices),
        remainder_indices,
        surfaces,
        rejected,
    })
}
