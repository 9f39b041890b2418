//! Artifact files: the ASCII cloud format, PLY export and the versioned JSON
//! documents exchanged between pipeline stages.

use crate::clustering::{Clustering, Octree};
use crate::geometry::{Point3, PointCloud, Pose};
use crate::planning::{FlightPlan, PlanningError};
use crate::segmentation::{PlaneModel, PlanarSurface};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Cloud { line: usize, reason: String },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported {what} version {found}")]
    Version { what: &'static str, found: u32 },
    #[error("{0}")]
    Invalid(String),
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Cloud text: point count, a `#` comment line, then `x y z [tag]` per point.
/// Coordinates use shortest round-trip formatting, so reading back is exact.
pub fn cloud_to_string(cloud: &PointCloud, comment: &str) -> String {
    let mut out = String::with_capacity(cloud.len() * 48 + 64);
    let _ = writeln!(out, "{}", cloud.len());
    let _ = writeln!(out, "# {}", comment.replace('\n', " "));
    match cloud.tags() {
        Some(tags) => {
            for (p, t) in cloud.points().iter().zip(tags) {
                let _ = writeln!(out, "{} {} {} {}", p.x, p.y, p.z, t);
            }
        }
        None => {
            for p in cloud.points() {
                let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
            }
        }
    }
    out
}

pub fn parse_cloud(text: &str) -> Result<PointCloud, IoError> {
    let bad = |line: usize, reason: &str| IoError::Cloud {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let count: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| bad(1, "expected point count"))?;
    if !lines.next().is_some_and(|l| l.starts_with('#')) {
        return Err(bad(2, "expected comment line"));
    }
    let mut points = Vec::with_capacity(count);
    let mut tags = Vec::new();
    let mut tagged = None;
    for (i, l) in lines.enumerate() {
        let line = i + 3;
        if l.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 4 {
            return Err(bad(line, "expected `x y z [tag]`"));
        }
        let mut xyz = [0.0f64; 3];
        for (k, t) in toks[..3].iter().enumerate() {
            xyz[k] = t.parse().map_err(|_| bad(line, "bad coordinate"))?;
            if !xyz[k].is_finite() {
                return Err(bad(line, "non-finite coordinate"));
            }
        }
        if *tagged.get_or_insert(toks.len() == 4) != (toks.len() == 4) {
            return Err(bad(line, "tags must be given for every point or none"));
        }
        if let Some(t) = toks.get(3) {
            tags.push(t.parse().map_err(|_| bad(line, "bad tag"))?);
        }
        points.push(Point3::from(xyz));
    }
    if points.len() != count {
        return Err(bad(1, &format!("header says {count} points, found {}", points.len())));
    }
    let cloud = if tags.is_empty() {
        PointCloud::new(points)
    } else {
        PointCloud::with_tags(points, tags)
    };
    cloud.map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, comment: &str) -> Result<(), IoError> {
    write_text(path, &cloud_to_string(cloud, comment))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    parse_cloud(&read_text(path)?)
}

/// ASCII PLY with vertex positions only.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let mut out = String::with_capacity(cloud.len() * 40 + 128);
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    write_text(path, &out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

fn check_version(what: &'static str, found: u32) -> Result<(), IoError> {
    if found == 0 || found > FORMAT_VERSION {
        return Err(IoError::Version { what, found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub normal: [f64; 3],
    pub d: f64,
    pub boundary: Vec<[f64; 3]>,
    pub area: f64,
    pub inlier_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacesFile {
    pub version: u32,
    pub planes: Vec<SurfaceRecord>,
    /// Where the scene was observed from, if known; planning prefers that
    /// side of a surface when both sides are equally clear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<[f64; 3]>,
}

impl SurfaceRecord {
    pub fn from_surface(s: &PlanarSurface) -> Self {
        let [a, b, c, d] = s.model.coefficients();
        Self {
            normal: [a, b, c],
            d,
            boundary: s.boundary.iter().map(|p| [p.x, p.y, p.z]).collect(),
            area: s.area,
            inlier_count: s.inliers.len(),
        }
    }

    /// Surface with an empty inlier list; the file keeps only the count.
    pub fn to_surface(&self) -> Result<PlanarSurface, IoError> {
        let [a, b, c] = self.normal;
        let norm = (a * a + b * b + c * c).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(IoError::Invalid(format!("plane normal has length {norm}")));
        }
        // stored coefficients are already unit length; keep them bit-exact
        let model = PlaneModel {
            normal: nalgebra::Vector3::new(a, b, c),
            d: self.d,
        };
        Ok(PlanarSurface {
            model,
            inliers: Vec::new(),
            boundary: self.boundary.iter().map(|p| Point3::from(*p)).collect(),
            area: self.area,
        })
    }
}

impl SurfacesFile {
    pub fn new(surfaces: &[PlanarSurface], viewpoint: Option<[f64; 3]>) -> Self {
        Self {
            version: FORMAT_VERSION,
            planes: surfaces.iter().map(SurfaceRecord::from_surface).collect(),
            viewpoint,
        }
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let f: Self = read_json(path)?;
        check_version("surfaces", f.version)?;
        Ok(f)
    }

    pub fn surfaces(&self) -> Result<Vec<PlanarSurface>, IoError> {
        self.planes.iter().map(SurfaceRecord::to_surface).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub indices: Vec<usize>,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub version: u32,
    pub clusters: Vec<ClusterRecord>,
    pub noise_count: usize,
}

impl ClustersFile {
    pub fn new(clustering: &Clustering, points: &[Point3<f64>]) -> Self {
        Self {
            version: FORMAT_VERSION,
            clusters: clustering
                .clusters
                .iter()
                .map(|c| {
                    let b = c.bounds(points);
                    ClusterRecord {
                        indices: c.indices.clone(),
                        min: b.min.into(),
                        max: b.max.into(),
                    }
                })
                .collect(),
            noise_count: clustering.noise.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctreeFile {
    pub version: u32,
    pub leaf_size: f64,
    pub depth: u32,
    pub origin: [f64; 3],
    pub leaf_centers: Vec<[f64; 3]>,
}

impl OctreeFile {
    pub fn new(tree: &Octree) -> Self {
        Self {
            version: FORMAT_VERSION,
            leaf_size: tree.leaf_size(),
            depth: tree.depth(),
            origin: tree.origin().into(),
            leaf_centers: tree.leaf_centers().into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub position: [f64; 3],
    pub facing: [f64; 3],
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

/// One surface's flight plan, or the reason it could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub surface: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stops: Vec<StopRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub legs: Vec<LegRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PlanRecord {
    pub fn success(surface: usize, standoff: f64, plan: &FlightPlan) -> Self {
        Self {
            surface,
            standoff: Some(standoff),
            stops: plan
                .stops
                .iter()
                .map(|s| StopRecord {
                    position: s.position.into(),
                    facing: s.facing.into(),
                    row: s.row,
                    col: s.col,
                })
                .collect(),
            waypoints: plan.waypoints.iter().map(|&p| p.into()).collect(),
            legs: plan
                .legs
                .iter()
                .map(|l| LegRecord {
                    from: l.from_stop,
                    to: l.to_stop,
                    cost: l.cost,
                })
                .collect(),
            error: None,
        }
    }

    pub fn failure(surface: usize, err: &PlanningError) -> Self {
        Self {
            surface,
            standoff: None,
            stops: Vec::new(),
            waypoints: Vec::new(),
            legs: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub version: u32,
    pub plans: Vec<PlanRecord>,
}

/// Waypoints as `x,y,z` rows.
pub fn waypoints_csv(waypoints: &[[f64; 3]]) -> String {
    let mut out = String::from("x,y,z\n");
    for w in waypoints {
        let _ = writeln!(out, "{},{},{}", w[0], w[1], w[2]);
    }
    out
}

/// Multi-station input: each station is a cloud file with its recorded pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEntry {
    /// Path to a cloud file, relative to the manifest.
    pub cloud: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationManifest {
    pub version: u32,
    pub stations: Vec<StationEntry>,
}

impl StationManifest {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let m: Self = read_json(path)?;
        check_version("station manifest", m.version)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub version: u32,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    pub input_points: usize,
}
