//! Synthetic scenes built from points, segments and rectangles, sampled into
//! clouds or ray-cast by the scan simulator.

use crate::geometry::{Point3, PointCloud};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown scene preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Point {
        position: [f64; 3],
    },
    Segment {
        start: [f64; 3],
        end: [f64; 3],
    },
    /// Rectangle centered at `center` spanning `width` along `u_axis` and
    /// `height` along `v_axis`; the axes must be orthogonal.
    Rectangle {
        center: [f64; 3],
        u_axis: [f64; 3],
        v_axis: [f64; 3],
        width: f64,
        height: f64,
    },
    /// Hollow box (six faces) rotated by `yaw` about the vertical axis.
    Box {
        center: [f64; 3],
        size: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    /// Hollow cube pierced by two vertical planes through its center, each
    /// reaching `extension` beyond the cube on every side.
    CrossedCube {
        center: [f64; 3],
        edge: f64,
        extension: f64,
    },
}

/// Named primitives plus sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Surface sampling density (points/m²); segments use its square root
    /// per meter.
    pub density: f64,
    /// Gaussian noise σ (m) along each rectangle's normal, and on simulated
    /// ranges.
    pub noise_sigma: f64,
}

/// Oriented rectangle with unit axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub half_width: f64,
    pub half_height: f64,
}

impl Rect {
    pub fn normal(&self) -> Vector3<f64> {
        self.u.cross(&self.v)
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_width * self.half_height
    }

    /// Ray parameter of the first hit, if any, in `(1e-9, max_t]`.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>, max_t: f64) -> Option<f64> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.center - origin)) / denom;
        if !(t > 1e-9 && t <= max_t) {
            return None;
        }
        let rel = origin + dir * t - self.center;
        (rel.dot(&self.u).abs() <= self.half_width && rel.dot(&self.v).abs() <= self.half_height).then_some(t)
    }

    pub fn corners(&self) -> [Point3<f64>; 4] {
        let (a, b) = (self.u * self.half_width, self.v * self.half_height);
        [self.center - a - b, self.center + a - b, self.center + a + b, self.center - a + b]
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

fn axis_rect(center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, w: f64, h: f64) -> Rect {
    Rect {
        center: Point3::from(center),
        u,
        v,
        half_width: w / 2.0,
        half_height: h / 2.0,
    }
}

fn box_faces(center: Vector3<f64>, size: [f64; 3], yaw: f64) -> Vec<Rect> {
    let (s, c) = yaw.sin_cos();
    let (ex, ey, ez) = if yaw == 0.0 {
        (Vector3::x(), Vector3::y(), Vector3::z())
    } else {
        (Vector3::new(c, s, 0.0), Vector3::new(-s, c, 0.0), Vector3::z())
    };
    let [sx, sy, sz] = size;
    let mut faces = Vec::with_capacity(6);
    for sign in [-1.0, 1.0] {
        faces.push(axis_rect(center + ex * (sign * sx / 2.0), ey, ez, sy, sz));
        faces.push(axis_rect(center + ey * (sign * sy / 2.0), ez, ex, sz, sx));
        faces.push(axis_rect(center + ez * (sign * sz / 2.0), ex, ey, sx, sy));
    }
    faces
}

impl Primitive {
    pub fn validate(&self) -> Result<(), SceneError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Primitive::Point { position } => finite(position),
            Primitive::Segment { start, end } => finite(start) && finite(end) && start != end,
            Primitive::Rectangle { center, u_axis, v_axis, width, height } => {
                let (u, v) = (v3(*u_axis), v3(*v_axis));
                finite(center)
                    && *width > 0.0
                    && *height > 0.0
                    && u.norm() > 0.0
                    && v.norm() > 0.0
                    && (u.dot(&v) / (u.norm() * v.norm())).abs() < 1e-9
            }
            Primitive::Box { center, size, yaw } => finite(center) && size.iter().all(|s| *s > 0.0) && yaw.is_finite(),
            Primitive::CrossedCube { center, edge, extension } => finite(center) && *edge > 0.0 && *extension >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SceneError::Invalid(format!("bad dimensions in {self:?}")))
        }
    }

    pub fn rects(&self) -> Vec<Rect> {
        match self {
            Primitive::Point { .. } | Primitive::Segment { .. } => Vec::new(),
            Primitive::Rectangle { center, u_axis, v_axis, width, height } => {
                vec![axis_rect(v3(*center), v3(*u_axis).normalize(), v3(*v_axis).normalize(), *width, *height)]
            }
            Primitive::Box { center, size, yaw } => box_faces(v3(*center), *size, *yaw),
            Primitive::CrossedCube { center, edge, extension } => {
                let c = v3(*center);
                let span = edge + 2.0 * extension;
                let mut faces = box_faces(c, [*edge; 3], 0.0);
                faces.push(axis_rect(c, Vector3::y(), Vector3::z(), span, span));
                faces.push(axis_rect(c, Vector3::z(), Vector3::x(), span, span));
                faces
            }
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(SceneError::Invalid("density must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SceneError::Invalid("noise σ must be >= 0".into()));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn rects(&self) -> Vec<Rect> {
        self.primitives.iter().flat_map(Primitive::rects).collect()
    }

    /// Built-in scenes. Names: `point`, `line`, `surface`, `cube`, `crossed`,
    /// `room`, `bridge`, `deck`.
    pub fn preset(name: &str) -> Result<Self, SceneError> {
        let rect = |center: [f64; 3], u: [f64; 3], v: [f64; 3], w: f64, h: f64| Primitive::Rectangle {
            center,
            u_axis: u,
            v_axis: v,
            width: w,
            height: h,
        };
        let (primitives, density, noise_sigma) = match name {
            "point" => (vec![Primitive::Point { position: [0.0, 0.0, 1.0] }], 100.0, 0.0),
            "line" => (
                vec![Primitive::Segment {
                    start: [0.0, 0.0, 0.0],
                    end: [5.0, 0.0, 2.0],
                }],
                100.0,
                0.0,
            ),
            "surface" => (vec![rect([3.0, 0.0, 2.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 6.0, 4.0)], 100.0, 0.01),
            "cube" => (
                vec![Primitive::Box {
                    center: [0.0, 0.0, 2.0],
                    size: [4.0; 3],
                    yaw: 0.0,
                }],
                100.0,
                0.01,
            ),
            "crossed" => (
                vec![Primitive::CrossedCube {
                    center: [0.0, 0.0, 2.0],
                    edge: 4.0,
                    extension: 3.0,
                }],
                100.0,
                0.01,
            ),
            "room" => (
                vec![Primitive::Box {
                    center: [0.0, 0.0, 0.0],
                    size: [8.0, 8.0, 6.0],
                    yaw: 0.0,
                }],
                100.0,
                0.005,
            ),
            "deck" => (vec![rect([0.0, 0.0, 5.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 22.0, 10.0)], 25.0, 0.0),
            "bridge" => (bridge_primitives(), 25.0, 0.005),
            other => return Err(SceneError::UnknownPreset(other.to_string())),
        };
        Ok(Self {
            primitives,
            density,
            noise_sigma,
        })
    }
}

/// Two-span deck on piers between abutment walls, over flat ground.
fn bridge_primitives() -> Vec<Primitive> {
    let mut p = vec![
        Primitive::Rectangle {
            center: [0.0, 0.0, 0.0],
            u_axis: [1.0, 0.0, 0.0],
            v_axis: [0.0, 1.0, 0.0],
            width: 30.0,
            height: 20.0,
        },
        Primitive::Box {
            center: [0.0, 0.0, 4.75],
            size: [22.0, 10.0, 0.5],
            yaw: 0.0,
        },
    ];
    for x in [-6.0, 6.0] {
        p.push(Primitive::Box {
            center: [x, 0.0, 2.25],
            size: [1.0, 8.0, 4.5],
            yaw: 0.0,
        });
    }
    for x in [-11.5, 11.5] {
        p.push(Primitive::Rectangle {
            center: [x, 0.0, 2.25],
            u_axis: [0.0, 1.0, 0.0],
            v_axis: [0.0, 0.0, 1.0],
            width: 10.0,
            height: 4.5,
        });
    }
    p
}

/// Samples the scene deterministically for a given seed.
///
/// Rectangles get jittered stratified samples, `⌈w·√ρ⌉ × ⌈h·√ρ⌉` of them,
/// offset along the normal by N(0, σ²). Segments get `⌈L·√ρ⌉ + 1` evenly
/// spaced points and points are emitted as is.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<PointCloud, SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| SceneError::Invalid(e.to_string()))?;
    let lin = spec.density.sqrt();
    let mut points = Vec::new();
    for prim in &spec.primitives {
        match prim {
            Primitive::Point { position } => points.push(Point3::from(*position)),
            Primitive::Segment { start, end } => {
                let (a, b) = (v3(*start), v3(*end));
                let n = ((b - a).norm() * lin).ceil() as usize + 1;
                for i in 0..n {
                    let t = i as f64 / (n - 1) as f64;
                    points.push(Point3::from(a + (b - a) * t));
                }
            }
            _ => {
                for r in prim.rects() {
                    let (w, h) = (2.0 * r.half_width, 2.0 * r.half_height);
                    let nu = (w * lin).ceil().max(1.0) as usize;
                    let nv = (h * lin).ceil().max(1.0) as usize;
                    let n = r.normal();
                    for j in 0..nv {
                        for i in 0..nu {
                            let a = (i as f64 + rng.random::<f64>()) / nu as f64 * w - r.half_width;
                            let b = (j as f64 + rng.random::<f64>()) / nv as f64 * h - r.half_height;
                            let mut p = r.center + r.u * a + r.v * b;
                            if spec.noise_sigma > 0.0 {
                                p += n * noise.sample(&mut rng);
                            }
                            points.push(p);
                        }
                    }
                }
            }
        }
    }
    PointCloud::new(points).map_err(|e| SceneError::Invalid(e.to_string()))
}
