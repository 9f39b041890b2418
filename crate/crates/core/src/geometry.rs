//! Core numeric types: polar scanner readings, rigid poses and point clouds.
//!
//! Points are `nalgebra::Point3<f64>` throughout. The vertical scanner's
//! readings live in its local x–z plane and are mapped into the global frame
//! by a [`Pose`] measured per scan.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub use nalgebra::Point3;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max |RᵀR − I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation determinant is {det}, expected +1")]
    NotProperRotation { det: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("invalid polar reading: range {range}, bearing {bearing}")]
    InvalidPolar { range: f64, bearing: f64 },
    #[error("point tags cover {tags} of {points} points")]
    TagMismatch { tags: usize, points: usize },
}

/// Angular detection window of a 2D scanner, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanArc {
    pub min: f64,
    pub max: f64,
}

impl Default for ScanArc {
    /// 270° device centered on the boresight.
    fn default() -> Self {
        Self {
            min: -135f64.to_radians(),
            max: 135f64.to_radians(),
        }
    }
}

impl ScanArc {
    pub fn contains(&self, bearing: f64) -> bool {
        const SLACK: f64 = 1e-9;
        bearing >= self.min - SLACK && bearing <= self.max + SLACK
    }
}

/// A single range/bearing reading of a 2D scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub range: f64,
    pub bearing: f64,
}

impl PolarPoint {
    pub fn new(range: f64, bearing: f64, arc: &ScanArc) -> Result<Self, GeometryError> {
        if !range.is_finite() || range < 0.0 || !bearing.is_finite() || !arc.contains(bearing) {
            return Err(GeometryError::InvalidPolar { range, bearing });
        }
        Ok(Self { range, bearing })
    }
}

/// Maps a vertical-scanner reading into the scanner's local frame.
///
/// The scan plane is the local x–z plane and both in-plane coordinates are
/// negated: `(−ρ cos α, 0, −ρ sin α)`.
pub fn polar_to_local(p: PolarPoint) -> Point3<f64> {
    let (sin, cos) = p.bearing.sin_cos();
    Point3::new(-p.range * cos, 0.0, -p.range * sin)
}

/// A proper rotation matrix, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and `det = +1` within [`ROTATION_TOLERANCE`].
    /// The matrix is stored as given, never re-orthogonalized.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { what: "rotation" });
        }
        let deviation = (m.transpose() * m - Matrix3::identity()).amax();
        if deviation > ROTATION_TOLERANCE {
            return Err(GeometryError::NotOrthonormal { deviation });
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotProperRotation { det });
        }
        Ok(Self(m))
    }

    /// Row-major 9-element form, as written in scan logs.
    pub fn from_row_major(v: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&v))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Rotation about +z by `angle` radians.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rotation about a unit axis by `angle` radians (Rodrigues).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self(*nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Heading of the rotated x-axis projected on the xy-plane.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }
}

impl TryFrom<[f64; 9]> for Rotation {
    type Error = GeometryError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_row_major(v)
    }
}

impl From<Rotation> for [f64; 9] {
    fn from(r: Rotation) -> Self {
        r.to_row_major()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Rigid motion `x ↦ R·x + T` from a local frame into the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite {
                what: "translation",
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: t,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        transform_point(self, p)
    }

    /// Applies only the rotation, for direction vectors.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix() * v
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt.matrix() * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.matrix() * other.translation + self.translation,
        }
    }
}

/// `R·local + T`.
pub fn transform_point(pose: &Pose, local: &Point3<f64>) -> Point3<f64> {
    Point3::from(pose.rotation.matrix() * local.coords + pose.translation)
}

/// An ordered list of global-frame points with optional per-point source tags
/// (scan or station index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    tags: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        check_finite(&points)?;
        Ok(Self { points, tags: None })
    }

    pub fn with_tags(points: Vec<Point3<f64>>, tags: Vec<u32>) -> Result<Self, GeometryError> {
        check_finite(&points)?;
        if tags.len() != points.len() {
            return Err(GeometryError::TagMismatch {
                tags: tags.len(),
                points: points.len(),
            });
        }
        Ok(Self {
            points,
            tags: Some(tags),
        })
    }

    /// Builds a cloud from points known to be finite (internal pipelines that
    /// only combine finite inputs).
    pub(crate) fn from_parts_unchecked(points: Vec<Point3<f64>>, tags: Option<Vec<u32>>) -> Self {
        debug_assert!(tags.as_ref().is_none_or(|t| t.len() == points.len()));
        Self { points, tags }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn tags(&self) -> Option<&[u32]> {
        self.tags.as_deref()
    }

    pub fn into_parts(self) -> (Vec<Point3<f64>>, Option<Vec<u32>>) {
        (self.points, self.tags)
    }

    /// Sub-cloud of the given indices, in the given order, tags carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let tags = self
            .tags
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        PointCloud { points, tags }
    }

    /// Appends `other`, tagging its points with `tag` (and tagging existing
    /// untagged points with 0).
    pub fn extend_tagged(&mut self, other: &[Point3<f64>], tag: u32) {
        let tags = self.tags.get_or_insert_with(|| vec![0; self.points.len()]);
        tags.extend(std::iter::repeat_n(tag, other.len()));
        self.points.extend_from_slice(other);
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

fn check_finite(points: &[Point3<f64>]) -> Result<(), GeometryError> {
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(GeometryError::NonFinite { what: "point" });
    }
    Ok(())
}

pub fn transform_cloud(pose: &Pose, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| pose.apply(p)).collect(),
        tags: cloud.tags.clone(),
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a, I>(points: I) -> Option<Aabb>
    where
        I: IntoIterator<Item = &'a Point3<f64>>,
    {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn dilate(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    /// Intersection, `None` when empty along any axis.
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        (0..3).all(|i| min[i] <= max[i]).then_some(Aabb { min, max })
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn close(a: &Point3<f64>, b: &Point3<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn polar_examples() {
        let arc = ScanArc::default();
        let p = polar_to_local(PolarPoint::new(1.0, 0.0, &arc).unwrap());
        assert_eq!(p, Point3::new(-1.0, 0.0, -0.0));
        let p = polar_to_local(PolarPoint::new(2.0, FRAC_PI_2, &arc).unwrap());
        assert!(close(&p, &Point3::new(0.0, 0.0, -2.0), 1e-15));
        let p = polar_to_local(PolarPoint::new(SQRT_2, FRAC_PI_4, &arc).unwrap());
        assert!(close(&p, &Point3::new(-1.0, 0.0, -1.0), 1e-15));
    }

    #[test]
    fn polar_rejects_out_of_arc_and_negative() {
        let arc = ScanArc::default();
        assert!(PolarPoint::new(1.0, 136f64.to_radians(), &arc).is_err());
        assert!(PolarPoint::new(-0.1, 0.0, &arc).is_err());
        assert!(PolarPoint::new(f64::NAN, 0.0, &arc).is_err());
        assert!(PolarPoint::new(1.0, 135f64.to_radians(), &arc).is_ok());
    }

    #[test]
    fn transform_examples() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose::identity().apply(&p), p);

        let yaw = Pose::new(Rotation::from_yaw(FRAC_PI_2), Vector3::zeros()).unwrap();
        assert!(close(
            &yaw.apply(&Point3::new(1.0, 0.0, 0.0)),
            &Point3::new(0.0, 1.0, 0.0),
            1e-15
        ));

        let t = Pose::from_translation(Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(
            t.apply(&Point3::new(-1.0, 0.0, -1.0)),
            Point3::new(0.0, 1.0, 0.0)
        );
    }

    #[test]
    fn transform_cloud_examples() {
        let cloud = PointCloud::with_tags(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 2.0, 3.0)],
            vec![4, 7],
        )
        .unwrap();
        assert_eq!(transform_cloud(&Pose::identity(), &cloud), cloud);

        let single = PointCloud::new(vec![Point3::origin()]).unwrap();
        let moved = transform_cloud(&Pose::from_translation(Vector3::x()), &single);
        assert_eq!(moved.points(), &[Point3::new(1.0, 0.0, 0.0)]);

        let pose = Pose::new(
            Rotation::from_axis_angle(&Vector3::new(0.3, -1.0, 0.5), 0.7),
            Vector3::new(3.0, -2.0, 0.25),
        )
        .unwrap();
        let back = transform_cloud(&pose.compose(&pose.inverse()), &cloud);
        for (a, b) in back.points().iter().zip(cloud.points()) {
            assert!(close(a, b, 1e-9));
        }
        assert_eq!(back.tags(), cloud.tags());
    }

    #[test]
    fn rotation_validation() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-6;
        assert!(matches!(
            Rotation::from_matrix(m),
            Err(GeometryError::NotOrthonormal { .. })
        ));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Rotation::from_matrix(reflect),
            Err(GeometryError::NotProperRotation { .. })
        ));
        let r = Rotation::from_yaw(0.3);
        assert_eq!(Rotation::from_row_major(r.to_row_major()).unwrap(), r);
    }

    #[test]
    fn cloud_rejects_nan_and_bad_tags() {
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::with_tags(vec![Point3::origin()], vec![]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            -1.0..1.0f64,
            -1.0..1.0f64,
            0.1..1.0f64,
            -PI..PI,
            prop::array::uniform3(-50.0..50.0f64),
        )
            .prop_map(|(ax, ay, az, angle, t)| {
                Pose::new(
                    Rotation::from_axis_angle(&Vector3::new(ax, ay, az), angle),
                    Vector3::from(t),
                )
                .unwrap()
            })
    }

    fn arb_point() -> impl Strategy<Value = Point3<f64>> {
        prop::array::uniform3(-30.0..30.0f64).prop_map(Point3::from)
    }

    proptest! {
        #[test]
        fn local_points_lie_in_scan_plane(range in 0.0..30.0f64, bearing in -2.35..2.35f64) {
            let p = polar_to_local(PolarPoint { range, bearing });
            prop_assert_eq!(p.y, 0.0);
            prop_assert!((p.coords.norm() - range).abs() <= 1e-12 * range.max(1.0));
        }

        #[test]
        fn rigid_motion_preserves_distances(pose in arb_pose(), a in arb_point(), b in arb_point()) {
            let d0 = (a - b).norm();
            let d1 = (pose.apply(&a) - pose.apply(&b)).norm();
            prop_assert!((d0 - d1).abs() <= 1e-9);
        }

        #[test]
        fn inverse_round_trips(pose in arb_pose(), pts in prop::collection::vec(arb_point(), 1..20)) {
            let cloud = PointCloud::new(pts).unwrap();
            let back = transform_cloud(&pose.inverse(), &transform_cloud(&pose, &cloud));
            for (a, b) in back.points().iter().zip(cloud.points()) {
                for i in 0..3 {
                    prop_assert!((a[i] - b[i]).abs() <= 1e-9);
                }
            }
        }
    }
}
