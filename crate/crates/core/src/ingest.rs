//! Scan-log parsing, pose-track reconstruction and single-station cloud
//! assembly.
//!
//! A log holds two 2D laser streams and an IMU stream. Rotation comes straight
//! from the IMU. Translation is accumulated from 2D ICP between consecutive
//! horizontal scans after each has been rotated into the global frame, so the
//! match only has to solve for the small shift between them.

use crate::geometry::{polar_to_local, GeometryError, Point3, PointCloud, PolarPoint, Pose, Rotation, ScanArc};
use crate::registration::{icp_align_2d, IcpConfig, IcpError, RigidTransform2D};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: timestamp {timestamp} is not after the previous record of the same kind")]
    UnsortedTimestamps { line: usize, timestamp: f64 },
    #[error("log contains no scan records")]
    EmptyLog,
    #[error("no IMU sample at or before the first scan")]
    MissingImuCoverage,
    #[error("need at least 2 horizontal scans, found {0}")]
    TooFewHorizontalScans(usize),
    #[error("ICP diverged between horizontal scans {pair} and {}", pair + 1)]
    IcpDiverged { pair: usize },
    #[error("horizontal scans {pair} and {}: {found} matched pairs, {required} required", pair + 1)]
    InsufficientOverlap { pair: usize, found: usize, required: usize },
    #[error("horizontal scans {pair} and {}: {source}", pair + 1)]
    Icp {
        pair: usize,
        #[source]
        source: IcpError,
    },
    #[error("no pose for vertical scan at t = {timestamp}")]
    MissingPose { timestamp: f64 },
    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanKind {
    Vertical,
    Horizontal,
}

impl ScanKind {
    fn tag(self) -> char {
        match self {
            ScanKind::Vertical => 'V',
            ScanKind::Horizontal => 'H',
        }
    }
}

/// Scanner metadata carried in the log header.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub angle_min: f64,
    pub angle_inc: f64,
    pub range_max: f64,
}

impl Default for DeviceParams {
    /// 270° arc at 0.25° resolution, 30 m range.
    fn default() -> Self {
        Self {
            angle_min: -135f64.to_radians(),
            angle_inc: 0.25f64.to_radians(),
            range_max: 30.0,
        }
    }
}

impl DeviceParams {
    pub fn bearing(&self, index: usize) -> f64 {
        self.angle_min + index as f64 * self.angle_inc
    }

    /// Number of beams spanning the default 270° arc.
    pub fn beam_count(&self) -> usize {
        let arc = ScanArc::default();
        ((arc.max - self.angle_min) / self.angle_inc + 1e-9).floor() as usize + 1
    }
}

/// One sweep of a 2D scanner. Raw ranges are kept so a log can be written back
/// unchanged; `valid` masks out zero and over-range readings.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub timestamp: f64,
    pub kind: ScanKind,
    pub ranges: Vec<f64>,
    pub valid: Vec<bool>,
    pub device: DeviceParams,
}

impl LaserScan {
    pub fn new(timestamp: f64, kind: ScanKind, ranges: Vec<f64>, device: DeviceParams) -> Self {
        let valid = ranges.iter().map(|&r| r > 0.0 && r <= device.range_max).collect();
        Self {
            timestamp,
            kind,
            ranges,
            valid,
            device,
        }
    }

    /// Valid readings, ordered by bearing.
    pub fn points(&self) -> Vec<PolarPoint> {
        self.ranges
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(|(i, (&range, _))| PolarPoint {
                range,
                bearing: self.device.bearing(i),
            })
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.ranges.len() - self.valid_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanLog {
    pub device: DeviceParams,
    pub vertical: Vec<LaserScan>,
    pub horizontal: Vec<LaserScan>,
    pub imu: Vec<ImuSample>,
}

impl ScanLog {
    /// Index of the IMU sample nearest in time; ties go to the earlier one.
    pub fn nearest_imu(&self, t: f64) -> Option<usize> {
        if self.imu.is_empty() {
            return None;
        }
        let i = self.imu.partition_point(|s| s.timestamp < t);
        if i == 0 {
            return Some(0);
        }
        if i == self.imu.len() {
            return Some(i - 1);
        }
        let before = t - self.imu[i - 1].timestamp;
        let after = self.imu[i].timestamp - t;
        Some(if after < before { i } else { i - 1 })
    }

    /// Checks stream ordering and IMU coverage.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.vertical.is_empty() && self.horizontal.is_empty() {
            return Err(IngestError::EmptyLog);
        }
        let sorted = |ts: &mut dyn Iterator<Item = f64>| {
            let mut prev = f64::NEG_INFINITY;
            for t in ts {
                if !(t >= 0.0) || t <= prev {
                    return Err(IngestError::UnsortedTimestamps { line: 0, timestamp: t });
                }
                prev = t;
            }
            Ok(())
        };
        sorted(&mut self.vertical.iter().map(|s| s.timestamp))?;
        sorted(&mut self.horizontal.iter().map(|s| s.timestamp))?;
        sorted(&mut self.imu.iter().map(|s| s.timestamp))?;
        let first = self
            .vertical
            .iter()
            .chain(&self.horizontal)
            .map(|s| s.timestamp)
            .fold(f64::INFINITY, f64::min);
        if !self.imu.first().is_some_and(|s| s.timestamp <= first) {
            return Err(IngestError::MissingImuCoverage);
        }
        Ok(())
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, IngestError> {
    let v: f64 = tok.parse().map_err(|_| malformed(line, format!("bad {what} {tok:?}")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("non-finite {what}")));
    }
    Ok(v)
}

pub fn parse_scan_log(path: impl AsRef<Path>) -> Result<ScanLog, IngestError> {
    let text = std::fs::read_to_string(path)?;
    parse_scan_log_str(&text)
}

pub fn parse_scan_log_str(text: &str) -> Result<ScanLog, IngestError> {
    let (mut angle_min, mut angle_inc, mut range_max) = (None, None, None);
    let mut log = ScanLog {
        device: DeviceParams::default(),
        vertical: Vec::new(),
        horizontal: Vec::new(),
        imu: Vec::new(),
    };
    let arc = ScanArc::default();
    let mut last = [f64::NEG_INFINITY; 3];

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut toks = rest.split_whitespace();
            let slot = match toks.next() {
                Some("angle_min") => &mut angle_min,
                Some("angle_inc") => &mut angle_inc,
                Some("range_max") => &mut range_max,
                _ => continue,
            };
            let tok = toks.next().ok_or_else(|| malformed(line, "header without value"))?;
            *slot = Some(parse_f64(tok, line, "header value")?);
            continue;
        }

        let device = match (angle_min, angle_inc, range_max) {
            (Some(angle_min), Some(angle_inc), Some(range_max)) => {
                if !(angle_inc > 0.0) || !(range_max > 0.0) {
                    return Err(malformed(line, "angle_inc and range_max must be positive"));
                }
                if !arc.contains(angle_min) {
                    return Err(malformed(line, "angle_min outside the scanner arc"));
                }
                DeviceParams {
                    angle_min,
                    angle_inc,
                    range_max,
                }
            }
            _ => return Err(malformed(line, "record before the angle_min/angle_inc/range_max header")),
        };
        log.device = device;

        let mut toks = trimmed.split_whitespace();
        let kind = toks.next().unwrap_or_default();
        let t = parse_f64(toks.next().ok_or_else(|| malformed(line, "missing timestamp"))?, line, "timestamp")?;
        if t < 0.0 {
            return Err(malformed(line, "negative timestamp"));
        }
        let values = toks.map(|v| parse_f64(v, line, "value")).collect::<Result<Vec<_>, _>>()?;
        let stream = match kind {
            "V" => 0,
            "H" => 1,
            "I" => 2,
            other => return Err(malformed(line, format!("unknown record type {other:?}"))),
        };
        if t <= last[stream] {
            return Err(IngestError::UnsortedTimestamps { line, timestamp: t });
        }
        last[stream] = t;

        if stream == 2 {
            let m: [f64; 9] = values
                .try_into()
                .map_err(|v: Vec<f64>| malformed(line, format!("IMU record needs 9 values, found {}", v.len())))?;
            let rotation = Rotation::from_row_major(m).map_err(|e| malformed(line, e.to_string()))?;
            log.imu.push(ImuSample { timestamp: t, rotation });
            continue;
        }
        if values.is_empty() {
            return Err(malformed(line, "scan without readings"));
        }
        let last_bearing = device.bearing(values.len() - 1);
        if !arc.contains(last_bearing) {
            return Err(malformed(
                line,
                format!("bearing {last_bearing:.6} of reading {} outside the scanner arc", values.len()),
            ));
        }
        if let Some(r) = values.iter().find(|r| **r < 0.0) {
            return Err(malformed(line, format!("negative range {r}")));
        }
        let kind = if stream == 0 { ScanKind::Vertical } else { ScanKind::Horizontal };
        let scan = LaserScan::new(t, kind, values, device);
        if stream == 0 {
            log.vertical.push(scan);
        } else {
            log.horizontal.push(scan);
        }
    }
    if angle_min.is_none() || angle_inc.is_none() || range_max.is_none() {
        return Err(IngestError::EmptyLog);
    }
    log.validate()?;
    Ok(log)
}

/// Serializes a log in the text format read by [`parse_scan_log_str`].
/// Numbers use shortest round-trip formatting so parsing is lossless.
pub fn write_scan_log_string(log: &ScanLog) -> String {
    let mut out = String::new();
    let d = &log.device;
    let _ = writeln!(out, "# angle_min {}", d.angle_min);
    let _ = writeln!(out, "# angle_inc {}", d.angle_inc);
    let _ = writeln!(out, "# range_max {}", d.range_max);
    // merge streams by time; IMU first on ties so coverage is visible in order
    let mut records: Vec<(f64, u8, usize)> = Vec::new();
    records.extend(log.imu.iter().enumerate().map(|(i, s)| (s.timestamp, 0, i)));
    records.extend(log.horizontal.iter().enumerate().map(|(i, s)| (s.timestamp, 1, i)));
    records.extend(log.vertical.iter().enumerate().map(|(i, s)| (s.timestamp, 2, i)));
    records.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, stream, i) in records {
        match stream {
            0 => {
                let s = &log.imu[i];
                let _ = write!(out, "I {}", s.timestamp);
                for v in s.rotation.to_row_major() {
                    let _ = write!(out, " {v}");
                }
            }
            _ => {
                let s = if stream == 1 { &log.horizontal[i] } else { &log.vertical[i] };
                let _ = write!(out, "{} {}", s.kind.tag(), s.timestamp);
                for r in &s.ranges {
                    let _ = write!(out, " {r}");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_scan_log(log: &ScanLog, path: impl AsRef<Path>) -> Result<(), IngestError> {
    std::fs::write(path, write_scan_log_string(log))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// ICP settings for horizontal-scan matching; rotation is always locked.
    pub icp: IcpConfig,
    /// Vertical scanner origin in the body frame (m).
    pub vertical_offset: [f64; 3],
    /// Horizontal scanner origin in the body frame (m).
    pub horizontal_offset: [f64; 3],
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            icp: IcpConfig {
                max_correspondence_dist: 0.5,
                rotation_locked: true,
                ..IcpConfig::default()
            },
            vertical_offset: [0.0; 3],
            horizontal_offset: [0.0; 3],
        }
    }
}

/// Body pose at each vertical-scan timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    pub entries: Vec<(f64, Pose)>,
}

impl PoseTrack {
    /// Pose recorded at exactly `t`.
    pub fn pose_at(&self, t: f64) -> Option<&Pose> {
        let i = self.entries.partition_point(|(ts, _)| *ts < t);
        self.entries.get(i).filter(|(ts, _)| *ts == t).map(|(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Horizontal-scanner reading in the scanner frame: the scan plane is the
/// local x–y plane with bearing measured from +x toward +y.
pub fn horizontal_to_local(p: PolarPoint) -> Point3<f64> {
    let (sin, cos) = p.bearing.sin_cos();
    Point3::new(p.range * cos, p.range * sin, 0.0)
}

fn imu_rotation(log: &ScanLog, t: f64) -> Result<Rotation, IngestError> {
    log.nearest_imu(t).map(|i| log.imu[i].rotation).ok_or(IngestError::MissingImuCoverage)
}

/// Horizontal scan rotated into the global orientation, projected to 2D.
fn leveled_scan(scan: &LaserScan, rotation: &Rotation, offset: &Vector3<f64>) -> Vec<Vector2<f64>> {
    scan.points()
        .into_iter()
        .map(|p| {
            let q = rotation.matrix() * (horizontal_to_local(p).coords + offset);
            Vector2::new(q.x, q.y)
        })
        .collect()
}

/// Horizontal-scan translations (x, y) relative to the first horizontal scan.
pub fn horizontal_translations(log: &ScanLog, cfg: &IngestConfig) -> Result<Vec<Vector2<f64>>, IngestError> {
    let n = log.horizontal.len();
    if n < 2 {
        return Err(IngestError::TooFewHorizontalScans(n));
    }
    let icp = IcpConfig {
        rotation_locked: true,
        ..cfg.icp
    };
    let offset = Vector3::from(cfg.horizontal_offset);
    let mut prev = leveled_scan(&log.horizontal[0], &imu_rotation(log, log.horizontal[0].timestamp)?, &offset);
    let mut positions = vec![Vector2::zeros()];
    let mut velocity = Vector2::zeros();
    for pair in 0..n - 1 {
        let scan = &log.horizontal[pair + 1];
        let cur = leveled_scan(scan, &imu_rotation(log, scan.timestamp)?, &offset);
        let step = icp_align_2d(&cur, &prev, RigidTransform2D::new(0.0, velocity), &icp).map_err(|e| match e {
            IcpError::Diverged { .. } => IngestError::IcpDiverged { pair },
            IcpError::InsufficientOverlap { found, required } => IngestError::InsufficientOverlap { pair, found, required },
            source => IngestError::Icp { pair, source },
        })?;
        // cur + step ≈ prev in the world, so the body moved by step
        velocity = step.translation;
        positions.push(positions[pair] + velocity);
        prev = cur;
    }
    Ok(positions)
}

/// Pose of every vertical scan: the nearest IMU rotation and the horizontal-
/// scan translation interpolated linearly in time (held constant outside the
/// horizontal stream). The vertical component stays zero.
pub fn estimate_pose_track(log: &ScanLog, cfg: &IngestConfig) -> Result<PoseTrack, IngestError> {
    log.validate()?;
    let positions = horizontal_translations(log, cfg)?;
    let times: Vec<f64> = log.horizontal.iter().map(|s| s.timestamp).collect();
    let translation_at = |t: f64| -> Vector2<f64> {
        let i = times.partition_point(|&ht| ht < t);
        if i == 0 {
            return positions[0];
        }
        if i == times.len() {
            return positions[i - 1];
        }
        if times[i] == t {
            return positions[i];
        }
        let f = (t - times[i - 1]) / (times[i] - times[i - 1]);
        positions[i - 1] + (positions[i] - positions[i - 1]) * f
    };
    let mut entries = Vec::with_capacity(log.vertical.len());
    for scan in &log.vertical {
        let rotation = imu_rotation(log, scan.timestamp)?;
        let xy = translation_at(scan.timestamp);
        let pose = Pose {
            rotation,
            translation: Vector3::new(xy.x, xy.y, 0.0),
        };
        entries.push((scan.timestamp, pose));
    }
    Ok(PoseTrack { entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltCloud {
    pub cloud: PointCloud,
    /// Zero or over-range readings left out of the cloud.
    pub dropped: usize,
}

/// Maps every valid vertical-scan reading into the global frame with its
/// scan's pose.
pub fn build_cloud(log: &ScanLog, track: &PoseTrack, cfg: &IngestConfig) -> Result<BuiltCloud, IngestError> {
    let offset = Vector3::from(cfg.vertical_offset);
    let mut points = Vec::with_capacity(log.vertical.iter().map(LaserScan::valid_count).sum());
    let mut dropped = 0;
    for scan in &log.vertical {
        let pose = track.pose_at(scan.timestamp).ok_or(IngestError::MissingPose { timestamp: scan.timestamp })?;
        for p in scan.points() {
            points.push(pose.apply(&(polar_to_local(p) + offset)));
        }
        dropped += scan.invalid_count();
    }
    let cloud = PointCloud::new(points).map_err(|e: GeometryError| IngestError::Io(e.to_string()))?;
    Ok(BuiltCloud { cloud, dropped })
}
