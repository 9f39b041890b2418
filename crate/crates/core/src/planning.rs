//! Inspection flight planning: photo stop points covering a surface, and
//! collision-free waypoints between them found by A* on an inflated voxel grid.

use crate::geometry::{Aabb, Point3, PointCloud};
use crate::segmentation::{project_to_plane, signed_area_2d, PlaneModel, PlanarSurface, AREA_EPSILON};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

/// Integer voxel coordinates `(ix, iy, iz)`.
pub type Voxel = [usize; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("standoff {standoff:.3} m exceeds the maximum range {max:.3} m")]
    UnreachableStandoff { standoff: f64, max: f64 },
    #[error("footprint height {height} m exceeds the vertical field of view at {standoff:.3} m ({covered:.3} m)")]
    FootprintExceedsFov { height: f64, standoff: f64, covered: f64 },
    #[error("surface boundary is empty or degenerate")]
    EmptySurface,
    #[error("invalid planning input: {0}")]
    Invalid(&'static str),
    #[error("start or goal voxel is occupied")]
    StartOrGoalOccupied,
    #[error("voxel {0:?} is outside the grid")]
    OutOfBounds(Voxel),
    #[error("no path{}", leg.map(|l| format!(" for leg {l}")).unwrap_or_default())]
    NoPath { leg: Option<usize> },
    #[error("stop point {index} is blocked after inflation")]
    StopPointBlocked { index: usize },
    #[error("stop point {index} lies outside the planning grid")]
    StopPointOutsideGrid { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub width_px: u32,
    pub height_px: u32,
    /// Horizontal field of view (rad).
    pub fov_h: f64,
    /// Vertical field of view (rad).
    pub fov_v: f64,
    pub gimbal_dof: u8,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width_px: 4000,
            height_px: 3000,
            fov_h: 20f64.to_radians(),
            fov_v: 15f64.to_radians(),
            gimbal_dof: 2,
        }
    }
}

impl CameraSpec {
    pub fn validate(&self) -> Result<(), PlanningError> {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(self.fov_h) || !fov_ok(self.fov_v) {
            return Err(PlanningError::Invalid("fields of view must lie in (0, π)"));
        }
        if self.width_px < 1 || self.height_px < 1 {
            return Err(PlanningError::Invalid("image size must be at least 1 pixel"));
        }
        Ok(())
    }

    /// Camera-to-surface distance at which the horizontal field of view spans
    /// `footprint_width` (pinhole model).
    pub fn standoff_for(&self, footprint_width: f64) -> f64 {
        (footprint_width / 2.0) / (self.fov_h / 2.0).tan()
    }

    /// Ground sampling distance (m/pixel) across the image at `standoff`.
    pub fn ground_sampling_distance(&self, standoff: f64) -> f64 {
        2.0 * standoff * (self.fov_h / 2.0).tan() / self.width_px as f64
    }
}

/// Which photo pairs share the overlap fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Only consecutive photos along a row overlap; rows abut.
    #[default]
    AlongTrack,
    /// Rows overlap by the same fraction as consecutive photos.
    Both,
}

/// A surface to photograph and the photo requirements.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectionTask {
    pub model: PlaneModel,
    /// Polygon on the plane; may be concave after a manual edit.
    pub boundary: Vec<Point3<f64>>,
    /// Photo footprint along the plane's `u` axis (m).
    pub footprint_width: f64,
    /// Photo footprint along the plane's `v` axis (m).
    pub footprint_height: f64,
    pub overlap: f64,
    pub overlap_mode: OverlapMode,
}

impl InspectionTask {
    pub fn new(surface: &PlanarSurface, footprint_width: f64, footprint_height: f64, overlap: f64) -> Result<Self, PlanningError> {
        let task = Self {
            model: surface.model,
            boundary: surface.boundary.clone(),
            footprint_width,
            footprint_height,
            overlap,
            overlap_mode: OverlapMode::default(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if !(self.footprint_width > 0.0) || !(self.footprint_height > 0.0) {
            return Err(PlanningError::Invalid("footprint dimensions must be > 0"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(PlanningError::Invalid("overlap must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Lattice steps along `u` and `v`.
    pub fn steps(&self) -> (f64, f64) {
        let keep = 1.0 - self.overlap;
        match self.overlap_mode {
            OverlapMode::AlongTrack => (self.footprint_width * keep, self.footprint_height),
            OverlapMode::Both => (self.footprint_width * keep, self.footprint_height * keep),
        }
    }
}

/// A photo pose: where to hover and which way the camera faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPoint {
    pub position: Point3<f64>,
    /// Unit vector from the stop point toward the surface.
    pub facing: Vector3<f64>,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CoverageOptions<'a> {
    /// Longest usable standoff (m); `None` means unlimited.
    pub max_standoff: Option<f64>,
    /// Grid used to pick the side of the surface with fewer occupied voxels.
    pub grid: Option<&'a OccupancyGrid>,
    /// Scanner position; when both sides are equally clear, the side facing
    /// it wins. Without one, ties go to the normal's side.
    pub viewpoint: Option<Point3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePlan {
    pub stops: Vec<StopPoint>,
    pub standoff: f64,
    /// +1 when stops sit on the normal's side of the plane, −1 otherwise.
    pub side: f64,
}

/// Number of footprints of size `footprint` spaced by `step` needed to span
/// `extent`.
fn lattice_count(extent: f64, footprint: f64, step: f64) -> usize {
    if extent <= footprint {
        1
    } else {
        ((extent - footprint) / step - 1e-9).ceil() as usize + 1
    }
}

/// Centers of a lattice of `n` footprints centered on `[lo, hi]`.
fn lattice_centers(lo: f64, hi: f64, n: usize, footprint: f64, step: f64) -> Vec<f64> {
    let span = footprint + (n - 1) as f64 * step;
    let start = lo + (hi - lo - span) / 2.0 + footprint / 2.0;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Area of `poly` clipped to the axis-aligned rectangle (Sutherland–Hodgman;
/// the clip region is convex, the subject may be concave).
pub fn clipped_area(poly: &[Vector2<f64>], min: Vector2<f64>, max: Vector2<f64>) -> f64 {
    let mut out: Vec<Vector2<f64>> = poly.to_vec();
    // (axis, bound, keep-greater)
    let edges = [(0, min.x, true), (0, max.x, false), (1, min.y, true), (1, max.y, false)];
    for (axis, bound, greater) in edges {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Vector2<f64>| if greater { p[axis] >= bound } else { p[axis] <= bound };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                out.push(prev + (cur - prev) * t);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    signed_area_2d(&out).abs()
}

/// Lays a boustrophedon lattice of photo positions over the surface at the
/// standoff distance that makes each photo cover the requested footprint.
pub fn plan_coverage(task: &InspectionTask, camera: &CameraSpec, opts: &CoverageOptions) -> Result<CoveragePlan, PlanningError> {
    task.validate()?;
    camera.validate()?;
    let standoff = camera.standoff_for(task.footprint_width);
    if let Some(max) = opts.max_standoff {
        if standoff > max {
            return Err(PlanningError::UnreachableStandoff { standoff, max });
        }
    }
    let covered = 2.0 * standoff * (camera.fov_v / 2.0).tan();
    if task.footprint_height > covered * (1.0 + 1e-9) {
        return Err(PlanningError::FootprintExceedsFov {
            height: task.footprint_height,
            standoff,
            covered,
        });
    }
    if task.boundary.len() < 3 {
        return Err(PlanningError::EmptySurface);
    }
    let (poly, basis) = project_to_plane(&task.boundary, &task.model);
    if signed_area_2d(&poly).abs() < AREA_EPSILON {
        return Err(PlanningError::EmptySurface);
    }

    let (umin, umax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let (vmin, vmax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let (w, h) = (task.footprint_width, task.footprint_height);
    let (su, sv) = task.steps();
    let nu = lattice_count(umax - umin, w, su);
    let nv = lattice_count(vmax - vmin, h, sv);
    let us = lattice_centers(umin, umax, nu, w, su);
    let vs = lattice_centers(vmin, vmax, nv, h, sv);

    let mut cells = Vec::new();
    for (row, &v) in vs.iter().enumerate() {
        let cols: Box<dyn Iterator<Item = usize>> = if row % 2 == 0 { Box::new(0..nu) } else { Box::new((0..nu).rev()) };
        for col in cols {
            let c = Vector2::new(us[col], v);
            let half = Vector2::new(w / 2.0, h / 2.0);
            if clipped_area(&poly, c - half, c + half) > 1e-9 {
                cells.push((row, col, basis.lift(&c)));
            }
        }
    }
    if cells.is_empty() {
        return Err(PlanningError::EmptySurface);
    }

    let normal = task.model.normal;
    let place = |side: f64| -> Vec<StopPoint> {
        cells
            .iter()
            .map(|&(row, col, foot)| StopPoint {
                position: foot + normal * (side * standoff),
                facing: -normal * side,
                row,
                col,
            })
            .collect()
    };
    let blocked = |stops: &[StopPoint], grid: &OccupancyGrid| {
        stops
            .iter()
            .filter(|s| grid.voxel_of(&s.position).is_some_and(|v| grid.is_occupied(v)))
            .count()
    };
    let preferred = match opts.viewpoint {
        Some(p) if task.model.signed_distance(&p) < 0.0 => -1.0,
        _ => 1.0,
    };
    let first = place(preferred);
    let (stops, side) = match opts.grid {
        Some(grid) => {
            let other = place(-preferred);
            if blocked(&other, grid) < blocked(&first, grid) {
                (other, -preferred)
            } else {
                (first, preferred)
            }
        }
        None => (first, preferred),
    };
    Ok(CoveragePlan { stops, standoff, side })
}

/// Uniform voxel grid with a free/occupied flag per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: Point3<f64>,
    edge: f64,
    dims: [usize; 3],
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid.
    pub fn new(origin: Point3<f64>, edge: f64, dims: [usize; 3]) -> Result<Self, PlanningError> {
        if !(edge > 0.0) || !edge.is_finite() {
            return Err(PlanningError::Invalid("voxel edge must be > 0"));
        }
        if dims.contains(&0) {
            return Err(PlanningError::Invalid("grid dimensions must be >= 1"));
        }
        Ok(Self {
            origin,
            edge,
            dims,
            occupied: vec![false; dims[0] * dims[1] * dims[2]],
        })
    }

    /// All-free grid whose voxels cover `bounds`.
    pub fn covering(bounds: &Aabb, edge: f64) -> Result<Self, PlanningError> {
        if !(edge > 0.0) || !edge.is_finite() {
            return Err(PlanningError::Invalid("voxel edge must be > 0"));
        }
        let ext = bounds.extent();
        let dims = std::array::from_fn(|a| (ext[a] / edge).floor() as usize + 1);
        Self::new(bounds.min, edge, dims)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    #[inline]
    pub fn index(&self, v: Voxel) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    pub fn voxel_at(&self, index: usize) -> Voxel {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn contains(&self, v: Voxel) -> bool {
        (0..3).all(|a| v[a] < self.dims[a])
    }

    /// Voxel containing `p` by floor arithmetic, `None` outside the grid.
    pub fn voxel_of(&self, p: &Point3<f64>) -> Option<Voxel> {
        let mut v = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.edge).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            v[a] = f as usize;
        }
        Some(v)
    }

    pub fn center(&self, v: Voxel) -> Point3<f64> {
        Point3::new(
            self.origin.x + (v[0] as f64 + 0.5) * self.edge,
            self.origin.y + (v[1] as f64 + 0.5) * self.edge,
            self.origin.z + (v[2] as f64 + 0.5) * self.edge,
        )
    }

    pub fn is_occupied(&self, v: Voxel) -> bool {
        self.occupied[self.index(v)]
    }

    pub fn set_occupied(&mut self, v: Voxel, occupied: bool) {
        let i = self.index(v);
        self.occupied[i] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_voxels(&self) -> impl Iterator<Item = Voxel> + '_ {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.voxel_at(i))
    }

    /// Marks every voxel containing one of `points`; points outside are ignored.
    pub fn mark_points(&mut self, points: &[Point3<f64>]) {
        for p in points {
            if let Some(v) = self.voxel_of(p) {
                self.set_occupied(v, true);
            }
        }
    }
}

/// Grid covering the cloud's bounding box plus `margin` on every side, with a
/// voxel occupied iff it contains at least one point. An empty cloud yields an
/// all-free grid spanning `±margin` around the origin.
pub fn build_occupancy(cloud: &PointCloud, voxel_edge: f64, margin: f64) -> Result<OccupancyGrid, PlanningError> {
    if !(margin >= 0.0) {
        return Err(PlanningError::Invalid("margin must be >= 0"));
    }
    let bounds = cloud
        .bounds()
        .unwrap_or(Aabb {
            min: Point3::origin(),
            max: Point3::origin(),
        })
        .dilate(margin);
    let mut grid = OccupancyGrid::covering(&bounds, voxel_edge)?;
    grid.mark_points(cloud.points());
    Ok(grid)
}

/// Marks every voxel whose center lies within `radius` of an occupied voxel's
/// center.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> Result<OccupancyGrid, PlanningError> {
    if !(radius >= 0.0) {
        return Err(PlanningError::Invalid("inflation radius must be >= 0"));
    }
    let reach = (radius / grid.edge).floor() as i64;
    let r2 = radius * radius;
    let mut offsets = Vec::new();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d2 = ((dx * dx + dy * dy + dz * dz) as f64) * grid.edge * grid.edge;
                if d2 <= r2 {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let mut out = grid.clone();
    let dims = grid.dims.map(|d| d as i64);
    for v in grid.occupied_voxels() {
        for o in &offsets {
            let n = [v[0] as i64 + o[0], v[1] as i64 + o[1], v[2] as i64 + o[2]];
            if (0..3).all(|a| n[a] >= 0 && n[a] < dims[a]) {
                out.set_occupied([n[0] as usize, n[1] as usize, n[2] as usize], true);
            }
        }
    }
    Ok(out)
}

/// Per-axis weights of the step cost `a1·α² + a2·β² + a3·γ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AStarWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for AStarWeights {
    fn default() -> Self {
        Self { a1: 1.0, a2: 1.0, a3: 1.0 }
    }
}

impl AStarWeights {
    pub fn validate(&self) -> Result<(), PlanningError> {
        if [self.a1, self.a2, self.a3].iter().all(|a| *a > 0.0 && a.is_finite()) {
            Ok(())
        } else {
            Err(PlanningError::Invalid("A* weights must be > 0"))
        }
    }

    /// Cost of moving to the neighbour at offset `(α, β, γ)`.
    pub fn step_cost(&self, alpha: i64, beta: i64, gamma: i64) -> f64 {
        self.a1 * (alpha * alpha) as f64 + self.a2 * (beta * beta) as f64 + self.a3 * (gamma * gamma) as f64
    }

    fn min(&self) -> f64 {
        self.a1.min(self.a2).min(self.a3)
    }
}

/// The 26 neighbour offsets, in lexicographic order.
pub fn neighbor_offsets() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1i64).flat_map(|a| (-1..=1i64).flat_map(move |b| (-1..=1i64).map(move |c| [a, b, c])))
        .filter(|o| *o != [0, 0, 0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPath {
    pub voxels: Vec<Voxel>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    voxel: Voxel,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // min-heap on (f, voxel)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.voxel.cmp(&self.voxel))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost 26-connected path over free voxels. The heuristic
/// `min(a)·Chebyshev distance` is consistent: each step closes every axis gap
/// by at most one and costs at least `min(a)`.
pub fn astar(grid: &OccupancyGrid, start: Voxel, goal: Voxel, w: &AStarWeights) -> Result<VoxelPath, PlanningError> {
    w.validate()?;
    for v in [start, goal] {
        if !grid.contains(v) {
            return Err(PlanningError::OutOfBounds(v));
        }
    }
    if grid.is_occupied(start) || grid.is_occupied(goal) {
        return Err(PlanningError::StartOrGoalOccupied);
    }
    let amin = w.min();
    let h = |v: &Voxel| {
        let d = (0..3).map(|a| v[a].abs_diff(goal[a])).max().unwrap_or(0);
        amin * d as f64
    };
    let offsets: Vec<([i64; 3], f64)> = neighbor_offsets().map(|o| (o, w.step_cost(o[0], o[1], o[2]))).collect();
    let dims = grid.dims().map(|d| d as i64);

    let mut g: HashMap<Voxel, f64> = HashMap::new();
    let mut parent: HashMap<Voxel, Voxel> = HashMap::new();
    let mut closed: HashMap<Voxel, ()> = HashMap::new();
    let mut open = BinaryHeap::new();
    g.insert(start, 0.0);
    open.push(OpenEntry { f: h(&start), g: 0.0, voxel: start });

    while let Some(OpenEntry { g: gv, voxel, .. }) = open.pop() {
        if closed.contains_key(&voxel) || gv > g[&voxel] {
            continue;
        }
        if voxel == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(&p) = parent.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(VoxelPath { voxels: path, cost: gv });
        }
        closed.insert(voxel, ());
        for (o, cost) in &offsets {
            let n = [voxel[0] as i64 + o[0], voxel[1] as i64 + o[1], voxel[2] as i64 + o[2]];
            if !(0..3).all(|a| n[a] >= 0 && n[a] < dims[a]) {
                continue;
            }
            let nv = [n[0] as usize, n[1] as usize, n[2] as usize];
            if grid.is_occupied(nv) || closed.contains_key(&nv) {
                continue;
            }
            let cand = gv + cost;
            if g.get(&nv).is_none_or(|&old| cand < old) {
                g.insert(nv, cand);
                parent.insert(nv, voxel);
                open.push(OpenEntry { f: cand + h(&nv), g: cand, voxel: nv });
            }
        }
    }
    Err(PlanningError::NoPath { leg: None })
}

/// One A* leg between consecutive stop points.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub from_stop: usize,
    pub to_stop: usize,
    pub cost: f64,
    pub voxels: Vec<Voxel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightPlan {
    pub stops: Vec<StopPoint>,
    /// Voxel-center waypoints threading every stop point in order.
    pub waypoints: Vec<Point3<f64>>,
    pub waypoint_voxels: Vec<Voxel>,
    pub legs: Vec<Leg>,
}

impl FlightPlan {
    pub fn total_cost(&self) -> f64 {
        self.legs.iter().map(|l| l.cost).sum()
    }
}

/// Chains A* legs between consecutive stop points (in coverage order) on an
/// already inflated grid. Shared leg endpoints appear once in the waypoint
/// list, and stops falling in the same voxel produce a zero-cost leg.
pub fn generate_waypoints(stops: &[StopPoint], grid: &OccupancyGrid, w: &AStarWeights) -> Result<FlightPlan, PlanningError> {
    if stops.is_empty() {
        return Err(PlanningError::Invalid("need at least one stop point"));
    }
    w.validate()?;
    let mut voxels = Vec::with_capacity(stops.len());
    for (index, s) in stops.iter().enumerate() {
        let v = grid.voxel_of(&s.position).ok_or(PlanningError::StopPointOutsideGrid { index })?;
        if grid.is_occupied(v) {
            return Err(PlanningError::StopPointBlocked { index });
        }
        voxels.push(v);
    }

    let mut chain = vec![voxels[0]];
    let mut legs = Vec::with_capacity(stops.len().saturating_sub(1));
    for (leg, pair) in voxels.windows(2).enumerate() {
        let path = if pair[0] == pair[1] {
            VoxelPath { voxels: vec![pair[0]], cost: 0.0 }
        } else {
            astar(grid, pair[0], pair[1], w).map_err(|e| match e {
                PlanningError::NoPath { .. } => PlanningError::NoPath { leg: Some(leg) },
                other => other,
            })?
        };
        chain.extend(path.voxels.iter().skip(1));
        legs.push(Leg {
            from_stop: leg,
            to_stop: leg + 1,
            cost: path.cost,
            voxels: path.voxels,
        });
    }
    Ok(FlightPlan {
        stops: stops.to_vec(),
        waypoints: chain.iter().map(|&v| grid.center(v)).collect(),
        waypoint_voxels: chain,
        legs,
    })
}

/// Defaults for the planning stage. The UAV is treated as a point after
/// inflating obstacles by its largest dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningConfig {
    pub camera: CameraSpec,
    pub footprint_width: f64,
    pub footprint_height: f64,
    pub overlap: f64,
    pub overlap_mode: OverlapMode,
    pub max_standoff: f64,
    pub voxel_edge: f64,
    pub inflation_radius: f64,
    /// Free space added around the cloud and stop points (m).
    pub grid_margin: f64,
    pub weights: AStarWeights,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            camera: CameraSpec::default(),
            footprint_width: 0.6,
            footprint_height: 0.4,
            overlap: 0.2,
            overlap_mode: OverlapMode::AlongTrack,
            max_standoff: 10.0,
            voxel_edge: 0.25,
            inflation_radius: 0.6,
            grid_margin: 1.0,
            weights: AStarWeights::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::point_in_polygon;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect_task(lx: f64, ly: f64, w: f64, h: f64, overlap: f64) -> InspectionTask {
        InspectionTask {
            model: PlaneModel::new(0.0, 0.0, 1.0, 0.0).unwrap(),
            boundary: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(lx, 0.0, 0.0),
                Point3::new(lx, ly, 0.0),
                Point3::new(0.0, ly, 0.0),
            ],
            footprint_width: w,
            footprint_height: h,
            overlap,
            overlap_mode: OverlapMode::AlongTrack,
        }
    }

    fn wide_camera() -> CameraSpec {
        CameraSpec {
            fov_h: 60f64.to_radians(),
            fov_v: 60f64.to_radians(),
            ..Default::default()
        }
    }

    #[test]
    fn bridge_deck_count() {
        let plan = plan_coverage(&rect_task(22.0, 10.0, 0.6, 0.4, 0.2), &CameraSpec::default(), &CoverageOptions::default()).unwrap();
        let n = plan.stops.len();
        assert!((1123..=1169).contains(&n), "{n}");
    }

    #[test]
    fn oversized_footprint_gives_single_stop() {
        let plan = plan_coverage(&rect_task(1.0, 1.0, 2.0, 2.0, 0.0), &wide_camera(), &CoverageOptions::default()).unwrap();
        assert_eq!(plan.stops.len(), 1);
        let s = plan.stops[0];
        assert!((s.position - Point3::new(0.5, 0.5, plan.standoff)).norm() < 1e-12);
    }

    #[test]
    fn exact_tiling_is_serpentine() {
        let plan = plan_coverage(&rect_task(1.0, 1.0, 0.5, 0.5, 0.0), &wide_camera(), &CoverageOptions::default()).unwrap();
        let cells: Vec<(usize, usize)> = plan.stops.iter().map(|s| (s.row, s.col)).collect();
        assert_eq!(cells, vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
        let xy: Vec<(f64, f64)> = plan.stops.iter().map(|s| (s.position.x, s.position.y)).collect();
        assert_eq!(xy, vec![(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)]);
        for s in &plan.stops {
            assert!((s.position.z - plan.standoff).abs() < 1e-6);
            assert!((s.facing - -Vector3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn standoff_errors() {
        let err = plan_coverage(
            &rect_task(5.0, 5.0, 10.0, 1.0, 0.0),
            &CameraSpec::default(),
            &CoverageOptions { max_standoff: Some(10.0), ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, PlanningError::UnreachableStandoff { .. }));
        let err = plan_coverage(&rect_task(5.0, 5.0, 0.6, 2.0, 0.0), &CameraSpec::default(), &CoverageOptions::default()).unwrap_err();
        assert!(matches!(err, PlanningError::FootprintExceedsFov { .. }));
        let mut t = rect_task(5.0, 5.0, 0.6, 0.4, 0.0);
        t.boundary.truncate(2);
        assert_eq!(plan_coverage(&t, &CameraSpec::default(), &CoverageOptions::default()), Err(PlanningError::EmptySurface));
    }

    #[test]
    fn footprints_cover_concave_polygon() {
        let mut task = rect_task(0.0, 0.0, 0.6, 0.4, 0.2);
        task.boundary = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(4.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(1.0, 3.0, 0.0),
            Point3::new(0.0, 3.0, 0.0),
        ];
        let plan = plan_coverage(&task, &CameraSpec::default(), &CoverageOptions::default()).unwrap();
        let (poly, basis) = project_to_plane(&task.boundary, &task.model);
        let centers: Vec<Vector2<f64>> = plan.stops.iter().map(|s| basis.to_2d(&s.position)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        while checked < 10_000 {
            let q = Vector2::new(rng.random_range(0.0..4.0), rng.random_range(0.0..3.0));
            if !point_in_polygon(&q, &poly) {
                continue;
            }
            checked += 1;
            assert!(centers.iter().any(|c| (q.x - c.x).abs() <= 0.3 + 1e-9 && (q.y - c.y).abs() <= 0.2 + 1e-9));
        }
        // no footprint lies entirely in the notch
        for c in &centers {
            let area = clipped_area(&poly, c - Vector2::new(0.3, 0.2), c + Vector2::new(0.3, 0.2));
            assert!(area > 0.0);
        }
    }

    #[test]
    fn side_with_fewer_occupied_voxels_wins() {
        let task = rect_task(2.0, 2.0, 0.6, 0.4, 0.2);
        let bounds = Aabb { min: Point3::new(-1.0, -1.0, -3.0), max: Point3::new(3.0, 3.0, 3.0) };
        let mut grid = OccupancyGrid::covering(&bounds, 0.25).unwrap();
        // clutter above the plane
        for v in 0..grid.len() {
            let vx = grid.voxel_at(v);
            if grid.center(vx).z > 1.0 {
                grid.set_occupied(vx, true);
            }
        }
        let plan = plan_coverage(&task, &CameraSpec::default(), &CoverageOptions { grid: Some(&grid), ..Default::default() }).unwrap();
        assert_eq!(plan.side, -1.0);
        assert!(plan.stops.iter().all(|s| s.position.z < 0.0 && s.facing.z > 0.0));
    }

    #[test]
    fn viewpoint_breaks_ties() {
        let task = rect_task(2.0, 2.0, 0.6, 0.4, 0.2);
        let below = CoverageOptions { viewpoint: Some(Point3::new(1.0, 1.0, -3.0)), ..Default::default() };
        assert_eq!(plan_coverage(&task, &CameraSpec::default(), &below).unwrap().side, -1.0);
        let above = CoverageOptions { viewpoint: Some(Point3::new(1.0, 1.0, 3.0)), ..Default::default() };
        assert_eq!(plan_coverage(&task, &CameraSpec::default(), &above).unwrap().side, 1.0);
    }

    #[test]
    fn occupancy_examples() {
        let g = build_occupancy(&PointCloud::empty(), 0.5, 1.0).unwrap();
        assert_eq!(g.occupied_count(), 0);
        assert_eq!(g.dims(), [5, 5, 5]);

        let one = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let g = build_occupancy(&one, 0.25, 1.0).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.is_occupied(g.voxel_of(&Point3::new(1.0, 2.0, 3.0)).unwrap()));

        // 4 m × 2 m plane at z = 0.1, dense sampling, edge 0.5 → 8 × 4 voxels in one slab
        let mut pts = Vec::new();
        for i in 0..80 {
            for j in 0..40 {
                pts.push(Point3::new(0.01 + i as f64 * 0.05, 0.01 + j as f64 * 0.05, 0.1));
            }
        }
        let g = build_occupancy(&PointCloud::new(pts).unwrap(), 0.5, 0.0).unwrap();
        assert_eq!(g.occupied_count(), 32);
    }

    #[test]
    fn voxel_index_round_trip() {
        let g = OccupancyGrid::new(Point3::new(-1.0, 0.0, 2.0), 0.3, [4, 5, 6]).unwrap();
        for i in 0..g.len() {
            let v = g.voxel_at(i);
            assert_eq!(g.index(v), i);
            assert_eq!(g.voxel_of(&g.center(v)), Some(v));
        }
        assert!(g.voxel_of(&Point3::new(-1.01, 0.0, 2.0)).is_none());
    }

    #[test]
    fn inflation_examples() {
        let mut g = OccupancyGrid::new(Point3::origin(), 1.0, [9, 9, 9]).unwrap();
        g.set_occupied([4, 4, 4], true);
        assert_eq!(inflate(&g, 0.0).unwrap(), g);

        let inflated = inflate(&g, 2.0).unwrap();
        // brute force over all voxels
        let c = g.center([4, 4, 4]);
        let mut want = 0;
        for i in 0..g.len() {
            let v = g.voxel_at(i);
            let d = (g.center(v) - c).norm();
            let hit = d <= 2.0;
            assert_eq!(inflated.is_occupied(v), hit, "{v:?}");
            want += hit as usize;
        }
        assert_eq!(inflated.occupied_count(), want);
        assert_eq!(want, 33);

        let mut full = g.clone();
        for i in 0..full.len() {
            let v = full.voxel_at(i);
            full.set_occupied(v, true);
        }
        assert_eq!(inflate(&full, 1.5).unwrap(), full);
    }

    #[test]
    fn astar_straight_line() {
        let g = OccupancyGrid::new(Point3::origin(), 1.0, [8, 3, 3]).unwrap();
        let p = astar(&g, [0, 0, 0], [5, 0, 0], &AStarWeights::default()).unwrap();
        assert_eq!(p.cost, 5.0);
        assert_eq!(p.voxels, (0..6).map(|x| [x, 0, 0]).collect::<Vec<_>>());
    }

    #[test]
    fn step_costs() {
        let w = AStarWeights::default();
        assert_eq!(w.step_cost(1, 0, 0), 1.0);
        assert_eq!(w.step_cost(1, -1, 0), 2.0);
        assert_eq!(w.step_cost(-1, 1, 1), 3.0);
        let w = AStarWeights { a1: 1.0, a2: 2.0, a3: 5.0 };
        assert_eq!(w.step_cost(1, 1, -1), 8.0);
    }

    #[test]
    fn astar_errors() {
        let mut g = OccupancyGrid::new(Point3::origin(), 1.0, [5, 1, 1]).unwrap();
        g.set_occupied([2, 0, 0], true);
        assert_eq!(astar(&g, [0, 0, 0], [4, 0, 0], &AStarWeights::default()), Err(PlanningError::NoPath { leg: None }));
        assert_eq!(astar(&g, [2, 0, 0], [4, 0, 0], &AStarWeights::default()), Err(PlanningError::StartOrGoalOccupied));
        assert!(matches!(astar(&g, [0, 0, 0], [9, 0, 0], &AStarWeights::default()), Err(PlanningError::OutOfBounds(_))));
        let bad = AStarWeights { a1: 0.0, ..Default::default() };
        assert!(astar(&g, [0, 0, 0], [1, 0, 0], &bad).is_err());
    }

    #[test]
    fn weight_scaling_scales_cost() {
        let mut g = OccupancyGrid::new(Point3::origin(), 1.0, [10, 10, 4]).unwrap();
        for y in 0..9 {
            for z in 0..4 {
                g.set_occupied([5, y, z], true);
            }
        }
        let w = AStarWeights { a1: 1.0, a2: 1.5, a3: 3.0 };
        let w2 = AStarWeights { a1: 2.0, a2: 3.0, a3: 6.0 };
        let a = astar(&g, [0, 0, 0], [9, 0, 3], &w).unwrap();
        let b = astar(&g, [0, 0, 0], [9, 0, 3], &w2).unwrap();
        assert!((2.0 * a.cost - b.cost).abs() < 1e-9);
    }

    #[test]
    fn waypoints_chain_neighbors() {
        let grid = OccupancyGrid::new(Point3::new(-1.0, -1.0, 0.0), 0.25, [24, 24, 8]).unwrap();
        let plan = plan_coverage(&rect_task(2.0, 2.0, 0.6, 0.4, 0.2), &CameraSpec::default(), &CoverageOptions::default()).unwrap();
        let fp = generate_waypoints(&plan.stops, &grid, &AStarWeights::default()).unwrap();
        assert_eq!(fp.legs.len(), plan.stops.len() - 1);
        for w in fp.waypoint_voxels.windows(2) {
            let d: Vec<usize> = (0..3).map(|a| w[0][a].abs_diff(w[1][a])).collect();
            assert!(d.iter().all(|&x| x <= 1) && d.contains(&1));
        }
        for s in &plan.stops {
            assert!(fp.waypoint_voxels.contains(&grid.voxel_of(&s.position).unwrap()));
        }
    }

    #[test]
    fn blocked_and_outside_stops() {
        let mut grid = OccupancyGrid::new(Point3::origin(), 1.0, [4, 4, 4]).unwrap();
        grid.set_occupied([1, 1, 1], true);
        let stop = |x: f64| StopPoint { position: Point3::new(x, 1.5, 1.5), facing: Vector3::z(), row: 0, col: 0 };
        assert_eq!(
            generate_waypoints(&[stop(0.5), stop(1.5)], &grid, &AStarWeights::default()),
            Err(PlanningError::StopPointBlocked { index: 1 })
        );
        assert_eq!(
            generate_waypoints(&[stop(0.5), stop(9.0)], &grid, &AStarWeights::default()),
            Err(PlanningError::StopPointOutsideGrid { index: 1 })
        );
        let single = generate_waypoints(&[stop(0.5)], &grid, &AStarWeights::default()).unwrap();
        assert_eq!(single.waypoints.len(), 1);
        assert!(single.legs.is_empty());
    }
}
