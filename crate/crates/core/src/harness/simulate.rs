//! Simulated 360° yaw scan: both scanners ray-cast against the scene at every
//! yaw step, with IMU samples from the true attitude.

use super::scene::{Rect, SceneError, SceneSpec};
use crate::geometry::{Point3, Pose, Rotation};
use crate::ingest::{DeviceParams, ImuSample, LaserScan, ScanKind, ScanLog};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YawScanSpec {
    /// UAV position at the first scan (m).
    pub position: [f64; 3],
    /// Heading at the first scan (rad).
    pub initial_yaw: f64,
    /// Yaw advance between scans (rad).
    pub yaw_step: f64,
    pub scans: usize,
    /// Translation added between consecutive scans (m).
    pub drift_per_scan: [f64; 3],
    /// Seconds between scans.
    pub scan_period: f64,
    pub device: DeviceParams,
}

impl Default for YawScanSpec {
    /// Full turn in 1° steps at 25 ms per scan.
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            initial_yaw: 0.0,
            yaw_step: 1f64.to_radians(),
            scans: 360,
            drift_per_scan: [0.0; 3],
            scan_period: 0.025,
            device: DeviceParams::default(),
        }
    }
}

impl YawScanSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let d = &self.device;
        let ok = d.angle_inc > 0.0
            && d.range_max > 0.0
            && self.scan_period > 0.0
            && self.scans >= 1
            && self.yaw_step.is_finite()
            && self.position.iter().chain(&self.drift_per_scan).all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SceneError::Invalid("invalid scan simulation parameters".into()))
        }
    }

    /// True world pose of the body at scan `k`.
    pub fn world_pose(&self, k: usize) -> Pose {
        let t = Vector3::from(self.position) + Vector3::from(self.drift_per_scan) * k as f64;
        Pose {
            rotation: Rotation::from_yaw(self.initial_yaw + self.yaw_step * k as f64),
            translation: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScan {
    pub log: ScanLog,
    /// Body pose at each scan in the station frame (the body frame at the
    /// first scan), which is the frame the ingest stage reconstructs.
    pub truth: Vec<(f64, Pose)>,
    /// World pose of the station frame.
    pub station: Pose,
}

impl SimulatedScan {
    /// Maps a world point into the station frame.
    pub fn to_station(&self, p: &Point3<f64>) -> Point3<f64> {
        self.station.inverse().apply(p)
    }
}

fn cast(rects: &[Rect], origin: &Point3<f64>, dir: &Vector3<f64>, max: f64) -> Option<f64> {
    rects
        .iter()
        .filter_map(|r| r.intersect(origin, dir, max))
        .min_by(f64::total_cmp)
}

/// Ray-casts every beam of both scanners at each yaw step. A beam that hits
/// nothing within range is recorded as 0. Ranges get N(0, σ²) noise from the
/// scene spec and are clamped to `[0, range_max]`.
///
/// IMU rotations are reported relative to the first heading so the first
/// reconstructed pose is the identity.
pub fn simulate_yaw_scan(scene: &SceneSpec, spec: &YawScanSpec, seed: u64) -> Result<SimulatedScan, SceneError> {
    scene.validate()?;
    spec.validate()?;
    let rects = scene.rects();
    let d = spec.device;
    let beams = d.beam_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, scene.noise_sigma).map_err(|e| SceneError::Invalid(e.to_string()))?;
    let station = spec.world_pose(0);
    let to_station = station.inverse();

    let vertical_dirs: Vec<Vector3<f64>> = (0..beams)
        .map(|i| {
            let (s, c) = d.bearing(i).sin_cos();
            Vector3::new(-c, 0.0, -s)
        })
        .collect();
    let horizontal_dirs: Vec<Vector3<f64>> = (0..beams)
        .map(|i| {
            let (s, c) = d.bearing(i).sin_cos();
            Vector3::new(c, s, 0.0)
        })
        .collect();

    let mut log = ScanLog {
        device: d,
        vertical: Vec::with_capacity(spec.scans),
        horizontal: Vec::with_capacity(spec.scans),
        imu: Vec::with_capacity(spec.scans),
    };
    let mut truth = Vec::with_capacity(spec.scans);
    for k in 0..spec.scans {
        let t = k as f64 * spec.scan_period;
        let pose = spec.world_pose(k);
        let origin = Point3::from(pose.translation);
        let mut sweep = |dirs: &[Vector3<f64>]| -> Vec<f64> {
            dirs.iter()
                .map(|dl| match cast(&rects, &origin, &pose.rotate(dl), d.range_max) {
                    Some(r) if scene.noise_sigma > 0.0 => (r + noise.sample(&mut rng)).clamp(0.0, d.range_max),
                    Some(r) => r,
                    None => 0.0,
                })
                .collect()
        };
        let v = sweep(&vertical_dirs);
        let h = sweep(&horizontal_dirs);
        log.vertical.push(LaserScan::new(t, ScanKind::Vertical, v, d));
        log.horizontal.push(LaserScan::new(t, ScanKind::Horizontal, h, d));
        let relative = to_station.compose(&pose);
        log.imu.push(ImuSample {
            timestamp: t,
            rotation: relative.rotation,
        });
        truth.push((t, relative));
    }
    Ok(SimulatedScan { log, truth, station })
}
