//! Point-to-point ICP in 2D and 3D, overlap prediction between stations and
//! sequential multi-station registration.

use crate::geometry::{wrap_angle, Aabb, Point3, PointCloud, Pose, Rotation};
use crate::kdtree::{KdTree2, KdTree3};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::kdtree::KdTree;

/// Consecutive growth steps of the RMS residual that count as divergence.
const DIVERGENCE_STREAK: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IcpError {
    #[error("ICP diverged at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("only {found} correspondences, {required} required")]
    InsufficientOverlap { found: usize, required: usize },
    #[error("invalid ICP configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("no overlap between the predicted bounding boxes")]
    NoOverlap,
    #[error("station {station}: {source}")]
    Station {
        station: usize,
        #[source]
        source: IcpError,
    },
    #[error("no stations to register")]
    NoStations,
    #[error("overlap margin must be non-negative, got {0}")]
    NegativeMargin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the RMS correspondence distance changes by less than this (m).
    pub convergence_eps: f64,
    /// Pairs farther apart than this are rejected (m).
    pub max_correspondence_dist: f64,
    /// Keep the initial rotation and solve translation only.
    pub rotation_locked: bool,
    pub min_pairs: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-4,
            max_correspondence_dist: 1.0,
            rotation_locked: false,
            min_pairs: 3,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), IcpError> {
        if self.max_iterations < 1 {
            return Err(IcpError::InvalidConfig("max_iterations must be >= 1"));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(IcpError::InvalidConfig("convergence_eps must be > 0"));
        }
        if !(self.max_correspondence_dist > 0.0) {
            return Err(IcpError::InvalidConfig(
                "max_correspondence_dist must be > 0",
            ));
        }
        Ok(())
    }
}

/// Planar rigid motion; angle kept in `(−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl Default for RigidTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform2D {
    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            translation: Vector2::zeros(),
        }
    }

    pub fn new(angle: f64, translation: Vector2<f64>) -> Self {
        Self {
            angle: wrap_angle(angle),
            translation,
        }
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation
    }
}

/// Per-iteration trace of an ICP run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IcpTrace {
    /// RMS correspondence distance measured at the start of each iteration.
    pub mean_residuals: Vec<f64>,
    pub converged: bool,
}

struct Pairs {
    src: Vec<usize>,
    tgt: Vec<usize>,
    mean: f64,
}

fn match_2d(
    moved: &[Vector2<f64>],
    tree: &KdTree2,
    max_dist: f64,
) -> Pairs {
    let max2 = max_dist * max_dist;
    let hits: Vec<Option<(usize, f64)>> = moved
        .par_iter()
        .map(|p| {
            tree.nearest(&[p.x, p.y])
                .filter(|n| n.dist2 <= max2)
                .map(|n| (n.index, n.dist2))
        })
        .collect();
    collect_pairs(hits)
}

fn match_3d(moved: &[Point3<f64>], tree: &KdTree3, max_dist: f64) -> Pairs {
    let max2 = max_dist * max_dist;
    let hits: Vec<Option<(usize, f64)>> = moved
        .par_iter()
        .map(|p| {
            tree.nearest(&[p.x, p.y, p.z])
                .filter(|n| n.dist2 <= max2)
                .map(|n| (n.index, n.dist2))
        })
        .collect();
    collect_pairs(hits)
}

fn collect_pairs(hits: Vec<Option<(usize, f64)>>) -> Pairs {
    let mut src = Vec::with_capacity(hits.len());
    let mut tgt = Vec::with_capacity(hits.len());
    let mut sum = 0.0;
    for (i, h) in hits.into_iter().enumerate() {
        if let Some((j, d2)) = h {
            src.push(i);
            tgt.push(j);
            sum += d2;
        }
    }
    let mean = if src.is_empty() {
        f64::INFINITY
    } else {
        (sum / src.len() as f64).sqrt()
    };
    Pairs { src, tgt, mean }
}

/// Tracks convergence and the divergence streak shared by both ICP variants.
struct Monitor {
    prev: f64,
    streak: usize,
}

enum Step {
    Continue,
    Converged,
}

impl Monitor {
    fn new() -> Self {
        Self {
            prev: f64::INFINITY,
            streak: 0,
        }
    }

    fn observe(&mut self, mean: f64, iteration: usize, eps: f64) -> Result<Step, IcpError> {
        if self.prev.is_finite() && (self.prev - mean).abs() < eps {
            return Ok(Step::Converged);
        }
        if mean > self.prev {
            self.streak += 1;
            if self.streak >= DIVERGENCE_STREAK {
                return Err(IcpError::Diverged { iteration });
            }
        } else {
            self.streak = 0;
        }
        self.prev = mean;
        Ok(Step::Continue)
    }
}

fn collinear_2d(points: &[Vector2<f64>]) -> bool {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let cov = points
        .iter()
        .map(|p| (p - c) * (p - c).transpose())
        .sum::<Matrix2<f64>>();
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    hi <= 0.0 || lo <= 1e-12 * hi
}

/// Aligns `source` onto `target`; the result maps source coordinates into the
/// target frame.
pub fn icp_align_2d(
    source: &[Vector2<f64>],
    target: &[Vector2<f64>],
    init: RigidTransform2D,
    cfg: &IcpConfig,
) -> Result<RigidTransform2D, IcpError> {
    icp_align_2d_traced(source, target, init, cfg).map(|(t, _)| t)
}

pub fn icp_align_2d_traced(
    source: &[Vector2<f64>],
    target: &[Vector2<f64>],
    init: RigidTransform2D,
    cfg: &IcpConfig,
) -> Result<(RigidTransform2D, IcpTrace), IcpError> {
    cfg.validate()?;
    if source.len() < 3 || target.len() < 3 {
        return Err(IcpError::DegenerateGeometry("fewer than 3 points"));
    }
    if !cfg.rotation_locked && collinear_2d(source) {
        return Err(IcpError::DegenerateGeometry(
            "source points are collinear and rotation is unlocked",
        ));
    }
    let tree = KdTree2::new(target.iter().map(|p| [p.x, p.y]).collect());
    let mut current = init;
    let mut trace = IcpTrace::default();
    let mut monitor = Monitor::new();

    for iteration in 0..cfg.max_iterations {
        let moved: Vec<Vector2<f64>> = source.iter().map(|p| current.apply(p)).collect();
        let pairs = match_2d(&moved, &tree, cfg.max_correspondence_dist);
        if pairs.src.is_empty() {
            return Err(IcpError::Diverged { iteration });
        }
        if pairs.src.len() < cfg.min_pairs {
            return Err(IcpError::InsufficientOverlap {
                found: pairs.src.len(),
                required: cfg.min_pairs,
            });
        }
        trace.mean_residuals.push(pairs.mean);
        if let Step::Converged = monitor.observe(pairs.mean, iteration, cfg.convergence_eps)? {
            trace.converged = true;
            break;
        }

        let n = pairs.src.len() as f64;
        let sc = pairs.src.iter().map(|&i| source[i]).sum::<Vector2<f64>>() / n;
        let tc = pairs.tgt.iter().map(|&j| target[j]).sum::<Vector2<f64>>() / n;
        current = if cfg.rotation_locked {
            let r = init.rotation();
            RigidTransform2D {
                angle: init.angle,
                translation: tc - r * sc,
            }
        } else {
            let (mut sin, mut cos) = (0.0, 0.0);
            for (&i, &j) in pairs.src.iter().zip(&pairs.tgt) {
                let a = source[i] - sc;
                let b = target[j] - tc;
                cos += a.dot(&b);
                sin += a.x * b.y - a.y * b.x;
            }
            let angle = sin.atan2(cos);
            let t = RigidTransform2D::new(angle, Vector2::zeros());
            RigidTransform2D {
                angle: t.angle,
                translation: tc - t.rotation() * sc,
            }
        };
    }
    Ok((current, trace))
}

/// Closed-form least-squares rigid fit (Kabsch) mapping `src[i]` onto `tgt[i]`.
pub fn fit_rigid_3d(src: &[Point3<f64>], tgt: &[Point3<f64>]) -> Result<Pose, IcpError> {
    if src.len() < 3 || src.len() != tgt.len() {
        return Err(IcpError::DegenerateGeometry("fewer than 3 correspondences"));
    }
    let n = src.len() as f64;
    let sc = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let tc = tgt.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in src.iter().zip(tgt) {
        h += (a.coords - sc) * (b.coords - tc).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
        return Err(IcpError::DegenerateGeometry("correspondences are collinear"));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = Rotation::from_matrix_unchecked(r);
    Ok(Pose {
        rotation,
        translation: tc - r * sc,
    })
}

/// Aligns `source` onto `target`; the returned pose maps source coordinates
/// into the target frame.
pub fn icp_align_3d(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    init: Pose,
    cfg: &IcpConfig,
) -> Result<Pose, IcpError> {
    icp_align_3d_traced(source, target, init, cfg).map(|(p, _)| p)
}

pub fn icp_align_3d_traced(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    init: Pose,
    cfg: &IcpConfig,
) -> Result<(Pose, IcpTrace), IcpError> {
    cfg.validate()?;
    if source.len() < 3 || target.len() < 3 {
        return Err(IcpError::DegenerateGeometry("fewer than 3 points"));
    }
    let tree = KdTree3::new(target.iter().map(|p| [p.x, p.y, p.z]).collect());
    let mut current = init;
    let mut trace = IcpTrace::default();
    let mut monitor = Monitor::new();

    for iteration in 0..cfg.max_iterations {
        let moved: Vec<Point3<f64>> = source.iter().map(|p| current.apply(p)).collect();
        let pairs = match_3d(&moved, &tree, cfg.max_correspondence_dist);
        if pairs.src.is_empty() {
            return Err(IcpError::Diverged { iteration });
        }
        if pairs.src.len() < 3 && !cfg.rotation_locked {
            return Err(IcpError::DegenerateGeometry("fewer than 3 correspondences"));
        }
        if pairs.src.len() < cfg.min_pairs {
            return Err(IcpError::InsufficientOverlap {
                found: pairs.src.len(),
                required: cfg.min_pairs,
            });
        }
        trace.mean_residuals.push(pairs.mean);
        if let Step::Converged = monitor.observe(pairs.mean, iteration, cfg.convergence_eps)? {
            trace.converged = true;
            break;
        }

        let src: Vec<Point3<f64>> = pairs.src.iter().map(|&i| source[i]).collect();
        let tgt: Vec<Point3<f64>> = pairs.tgt.iter().map(|&j| target[j]).collect();
        current = if cfg.rotation_locked {
            let n = src.len() as f64;
            let r = init.rotation;
            let rs = src
                .iter()
                .map(|p| r.matrix() * p.coords)
                .sum::<Vector3<f64>>()
                / n;
            let tc = tgt.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
            Pose {
                rotation: r,
                translation: tc - rs,
            }
        } else {
            fit_rigid_3d(&src, &tgt)?
        };
    }
    Ok((current, trace))
}

/// Indices of the points of each cloud that fall in the predicted overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// The dilated intersection box, in the global frame.
    pub region: Aabb,
}

/// Predicts the overlap of two clouds from their recorded poses: the points
/// inside the intersection of both global-frame bounding boxes, dilated by
/// `margin`.
pub fn predict_overlap(
    a: &PointCloud,
    b: &PointCloud,
    pose_a: &Pose,
    pose_b: &Pose,
    margin: f64,
) -> Result<Overlap, RegistrationError> {
    if !(margin >= 0.0) {
        return Err(RegistrationError::NegativeMargin(margin));
    }
    let ga: Vec<Point3<f64>> = a.points().iter().map(|p| pose_a.apply(p)).collect();
    let gb: Vec<Point3<f64>> = b.points().iter().map(|p| pose_b.apply(p)).collect();
    let (Some(ba), Some(bb)) = (Aabb::from_points(&ga), Aabb::from_points(&gb)) else {
        return Err(RegistrationError::NoOverlap);
    };
    let region = ba
        .dilate(margin)
        .intersection(&bb.dilate(margin))
        .ok_or(RegistrationError::NoOverlap)?;
    let inside = |pts: &[Point3<f64>]| -> Vec<usize> {
        pts.iter()
            .enumerate()
            .filter(|(_, p)| region.contains(p))
            .map(|(i, _)| i)
            .collect()
    };
    let (ia, ib) = (inside(&ga), inside(&gb));
    if ia.is_empty() || ib.is_empty() {
        return Err(RegistrationError::NoOverlap);
    }
    Ok(Overlap {
        a: ia,
        b: ib,
        region,
    })
}

/// One scanning station: its cloud in the station frame and the pose recorded
/// for it.
#[derive(Debug, Clone)]
pub struct Station {
    pub cloud: PointCloud,
    pub recorded_pose: Pose,
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Concatenated global-frame cloud tagged with station indices.
    pub cloud: PointCloud,
    /// Estimated station poses; station 0 keeps its recorded pose.
    pub poses: Vec<Pose>,
    /// Stations whose bounding boxes did not overlap and were matched against
    /// the full merged cloud instead.
    pub full_cloud_fallbacks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub icp: IcpConfig,
    /// Bounding-box dilation used for overlap prediction (m).
    pub overlap_margin: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            icp: IcpConfig::default(),
            overlap_margin: 0.5,
        }
    }
}

/// Registers stations sequentially: station 0 is the reference and every later
/// station is aligned against the merged cloud of its predecessors, seeded by
/// its recorded pose and restricted to the predicted overlap.
pub fn register_clouds(
    stations: &[Station],
    cfg: &RegistrationConfig,
) -> Result<Registration, RegistrationError> {
    let first = stations.first().ok_or(RegistrationError::NoStations)?;
    let station_err = |station| move |source| RegistrationError::Station { station, source };
    cfg.icp.validate().map_err(station_err(0))?;

    let mut merged = PointCloud::empty();
    let reference: Vec<Point3<f64>> = first
        .cloud
        .points()
        .iter()
        .map(|p| first.recorded_pose.apply(p))
        .collect();
    merged.extend_tagged(&reference, 0);
    let mut poses = vec![first.recorded_pose];
    let mut fallbacks = Vec::new();

    for (k, station) in stations.iter().enumerate().skip(1) {
        let (src, tgt) = match predict_overlap(
            &merged,
            &station.cloud,
            &Pose::identity(),
            &station.recorded_pose,
            cfg.overlap_margin,
        ) {
            Ok(ov) => (station.cloud.select(&ov.b), merged.select(&ov.a)),
            Err(RegistrationError::NoOverlap) => {
                fallbacks.push(k);
                (station.cloud.clone(), merged.clone())
            }
            Err(e) => return Err(e),
        };
        let pose = icp_align_3d(src.points(), tgt.points(), station.recorded_pose, &cfg.icp)
            .map_err(station_err(k))?;
        let global: Vec<Point3<f64>> = station.cloud.points().iter().map(|p| pose.apply(p)).collect();
        merged.extend_tagged(&global, k as u32);
        poses.push(pose);
        log::debug!("station {k} registered: {:?}", pose.translation);
    }
    Ok(Registration {
        cloud: merged,
        poses,
        full_cloud_fallbacks: fallbacks,
    })
}
