//! End-to-end processing: ingest or register, filter, downsample, segment,
//! cluster and plan, writing each stage's artifact as it completes.

use super::io::{
    waypoints_csv, write_cloud, write_json, write_ply, write_text, ClustersFile, OctreeFile, PlanFile, PlanRecord,
    StageTiming, SurfacesFile, TimingReport, FORMAT_VERSION,
};
use super::svg::{render, SvgScene, View};
use crate::clustering::{euclidean_cluster, octree_from_points, ClusterConfig, Clustering, Octree};
use crate::geometry::{Point3, PointCloud};
use crate::ingest::{build_cloud, estimate_pose_track, IngestConfig, ScanLog};
use crate::planning::{
    build_occupancy, generate_waypoints, inflate, plan_coverage, CoverageOptions, FlightPlan, InspectionTask,
    PlanningConfig, PlanningError,
};
use crate::preprocess::{remove_statistical_outliers, voxel_downsample, OutlierFilterConfig, VoxelGridConfig};
use crate::registration::{register_clouds, RegistrationConfig, Station};
use crate::segmentation::{extract_surfaces, PlanarSurface, RansacConfig, Segmentation};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Register,
    Filter,
    Downsample,
    Segment,
    Cluster,
    Plan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Register => "register",
            Stage::Filter => "filter",
            Stage::Downsample => "downsample",
            Stage::Segment => "segment",
            Stage::Cluster => "cluster",
            Stage::Plan => "plan",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: err.to_string(),
        }
    }
}

/// Every stage's settings in one document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub registration: RegistrationConfig,
    pub outlier: OutlierFilterConfig,
    pub voxel: VoxelGridConfig,
    pub ransac: RansacConfig,
    /// ε used to trim each plane to its largest connected component (m).
    pub trim_radius: f64,
    pub cluster: ClusterConfig,
    /// Octree leaf edge for the obstacle export (m).
    pub octree_leaf: f64,
    pub planning: PlanningConfig,
    pub write_ply: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ingest: IngestConfig::default(),
            registration: RegistrationConfig::default(),
            outlier: OutlierFilterConfig::default(),
            voxel: VoxelGridConfig::default(),
            ransac: RansacConfig::default(),
            trim_radius: 0.3,
            cluster: ClusterConfig::default(),
            octree_leaf: 0.5,
            planning: PlanningConfig::default(),
            write_ply: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |e: &dyn fmt::Display| PipelineError::Config(e.to_string());
        self.ingest.icp.validate().map_err(|e| cfg(&e))?;
        self.registration.icp.validate().map_err(|e| cfg(&e))?;
        if !(self.registration.overlap_margin >= 0.0) {
            return Err(PipelineError::Config("overlap_margin must be >= 0".into()));
        }
        self.outlier.validate().map_err(|e| cfg(&e))?;
        if !(self.voxel.leaf_size > 0.0) {
            return Err(PipelineError::Config("voxel leaf_size must be > 0".into()));
        }
        self.ransac.validate().map_err(|e| cfg(&e))?;
        if !(self.trim_radius > 0.0) || !(self.octree_leaf > 0.0) {
            return Err(PipelineError::Config("trim_radius and octree_leaf must be > 0".into()));
        }
        self.cluster.validate().map_err(|e| cfg(&e))?;
        let p = &self.planning;
        p.camera.validate().map_err(|e| cfg(&e))?;
        p.weights.validate().map_err(|e| cfg(&e))?;
        let positive = [p.footprint_width, p.footprint_height, p.voxel_edge, p.max_standoff];
        if positive.iter().any(|v| !(*v > 0.0)) || !(0.0..1.0).contains(&p.overlap) {
            return Err(PipelineError::Config("invalid planning parameters".into()));
        }
        if !(p.inflation_radius >= 0.0) || !(p.grid_margin >= 0.0) {
            return Err(PipelineError::Config("inflation radius and grid margin must be >= 0".into()));
        }
        Ok(())
    }
}

pub enum PipelineInput {
    Cloud(PointCloud),
    Log(ScanLog),
    Stations(Vec<Station>),
}

/// Per-surface planning result.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub surface: usize,
    pub result: Result<(f64, FlightPlan), PlanningError>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub input_points: usize,
    pub filtered_points: usize,
    pub downsampled_points: usize,
    pub surfaces: Vec<PlanarSurface>,
    pub segmentation: Segmentation,
    pub clustering: Clustering,
    pub plans: Vec<PlanOutcome>,
    pub timings: TimingReport,
}

impl PipelineReport {
    pub fn failed_plans(&self) -> impl Iterator<Item = &PlanOutcome> {
        self.plans.iter().filter(|p| p.result.is_err())
    }
}

/// Outlier removal. Clouds too small for the neighbourhood size pass through
/// unchanged.
pub fn filter_stage(cloud: &PointCloud, cfg: &OutlierFilterConfig) -> Result<PointCloud, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::stage(Stage::Filter, e))?;
    if cloud.len() <= cfg.k_neighbors {
        log::warn!(
            "outlier filter skipped: {} points, k = {}",
            cloud.len(),
            cfg.k_neighbors
        );
        return Ok(cloud.clone());
    }
    let r = remove_statistical_outliers(cloud, cfg).map_err(|e| PipelineError::stage(Stage::Filter, e))?;
    log::info!("outlier filter removed {} of {} points", r.removed_count, cloud.len());
    Ok(r.kept)
}

pub fn downsample_stage(cloud: &PointCloud, cfg: &VoxelGridConfig) -> Result<PointCloud, PipelineError> {
    voxel_downsample(cloud, cfg).map_err(|e| PipelineError::stage(Stage::Downsample, e))
}

pub fn segment_stage(cloud: &PointCloud, cfg: &RansacConfig, trim_radius: f64) -> Result<Segmentation, PipelineError> {
    extract_surfaces(cloud, cfg, trim_radius).map_err(|e| PipelineError::stage(Stage::Segment, e))
}

pub fn cluster_stage(
    remainder: &PointCloud,
    cfg: &ClusterConfig,
    octree_leaf: f64,
) -> Result<(Clustering, Octree), PipelineError> {
    let clustering = euclidean_cluster(remainder, cfg).map_err(|e| PipelineError::stage(Stage::Cluster, e))?;
    let tree = octree_from_points(remainder.points(), octree_leaf).map_err(|e| PipelineError::stage(Stage::Cluster, e))?;
    Ok((clustering, tree))
}

/// Grid margin large enough to hold stop points on either side of any
/// surface with room to route around them.
pub fn planning_margin(cfg: &PlanningConfig) -> f64 {
    let standoff = cfg.camera.standoff_for(cfg.footprint_width);
    let half_foot = cfg.footprint_width.max(cfg.footprint_height) / 2.0;
    cfg.grid_margin
        .max(standoff + half_foot + cfg.inflation_radius + 2.0 * cfg.voxel_edge)
}

/// Coverage and waypoints for every surface over one shared inflated grid
/// built from the whole cloud. A surface that cannot be planned gets an error
/// outcome; the others are unaffected.
pub fn plan_stage(
    cloud: &PointCloud,
    surfaces: &[PlanarSurface],
    cfg: &PlanningConfig,
    viewpoint: Option<Point3<f64>>,
) -> Result<Vec<PlanOutcome>, PipelineError> {
    let stage_err = |e: PlanningError| PipelineError::stage(Stage::Plan, e);
    let grid = build_occupancy(cloud, cfg.voxel_edge, planning_margin(cfg)).map_err(stage_err)?;
    let grid = inflate(&grid, cfg.inflation_radius).map_err(stage_err)?;
    log::info!(
        "occupancy grid {:?}, {} of {} voxels blocked after inflation",
        grid.dims(),
        grid.occupied_count(),
        grid.len()
    );
    let opts = CoverageOptions {
        max_standoff: Some(cfg.max_standoff),
        grid: Some(&grid),
        viewpoint,
    };
    let plan_one = |s: &PlanarSurface| -> Result<(f64, FlightPlan), PlanningError> {
        let mut task = InspectionTask::new(s, cfg.footprint_width, cfg.footprint_height, cfg.overlap)?;
        task.overlap_mode = cfg.overlap_mode;
        let coverage = plan_coverage(&task, &cfg.camera, &opts)?;
        let plan = generate_waypoints(&coverage.stops, &grid, &cfg.weights)?;
        Ok((coverage.standoff, plan))
    };
    Ok(surfaces
        .iter()
        .enumerate()
        .map(|(surface, s)| {
            let result = plan_one(s);
            match &result {
                Ok((_, p)) => log::info!(
                    "surface {surface}: {} stops, {} waypoints",
                    p.stops.len(),
                    p.waypoints.len()
                ),
                Err(e) => log::warn!("surface {surface}: {e}"),
            }
            PlanOutcome { surface, result }
        })
        .collect())
}

pub fn plan_file(outcomes: &[PlanOutcome]) -> PlanFile {
    PlanFile {
        version: FORMAT_VERSION,
        plans: outcomes
            .iter()
            .map(|o| match &o.result {
                Ok((standoff, plan)) => PlanRecord::success(o.surface, *standoff, plan),
                Err(e) => PlanRecord::failure(o.surface, e),
            })
            .collect(),
    }
}

/// Writes `plan.json` and one `plan_<i>.csv` per successful plan.
pub fn write_plans(out: &Path, outcomes: &[PlanOutcome]) -> Result<(), PipelineError> {
    let file = plan_file(outcomes);
    let err = |e: super::io::IoError| PipelineError::stage(Stage::Plan, e);
    write_json(&out.join("plan.json"), &file).map_err(err)?;
    for rec in file.plans.iter().filter(|r| r.error.is_none()) {
        write_text(&out.join(format!("plan_{}.csv", rec.surface)), &waypoints_csv(&rec.waypoints)).map_err(err)?;
    }
    Ok(())
}

struct Timer {
    stages: Vec<StageTiming>,
    start: Instant,
}

impl Timer {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let t0 = Instant::now();
        let out = f();
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3} s");
        self.stages.push(StageTiming {
            stage: stage.name().to_string(),
            seconds,
        });
        out
    }
}

/// Runs every stage in order and writes the artifacts into `out`:
/// `registered.xyz`, `filtered.xyz`, `downsampled.xyz`, `surfaces.json`,
/// `remainder.xyz`, `clusters.json`, `octree.json`, `plan.json`,
/// `plan_<i>.csv`, `timings.json`, `topdown.svg`, `elevation.svg` and, when
/// enabled, `downsampled.ply`.
///
/// A failing stage stops the run; artifacts already written stay on disk.
/// Planning failures of individual surfaces are reported in the outcome list
/// instead.
pub fn run_pipeline(input: PipelineInput, cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::Config(format!("{}: {e}", out.display())))?;
    let mut timer = Timer {
        stages: Vec::new(),
        start: Instant::now(),
    };
    let io = |stage: Stage| move |e: super::io::IoError| PipelineError::stage(stage, e);

    let (registered, viewpoint, stage) = match input {
        PipelineInput::Cloud(c) => (c, None, Stage::Ingest),
        PipelineInput::Log(log) => {
            let built = timer.run(Stage::Ingest, || {
                let track = estimate_pose_track(&log, &cfg.ingest).map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
                build_cloud(&log, &track, &cfg.ingest).map_err(|e| PipelineError::stage(Stage::Ingest, e))
            })?;
            log::info!("ingest: {} points, {} readings dropped", built.cloud.len(), built.dropped);
            (built.cloud, Some(Point3::origin()), Stage::Ingest)
        }
        PipelineInput::Stations(stations) => {
            let viewpoint = stations.first().map(|s| Point3::from(s.recorded_pose.translation));
            let reg = timer.run(Stage::Register, || {
                register_clouds(&stations, &cfg.registration).map_err(|e| PipelineError::stage(Stage::Register, e))
            })?;
            (reg.cloud, viewpoint, Stage::Register)
        }
    };
    let input_points = registered.len();
    write_cloud(&out.join("registered.xyz"), &registered, "registered cloud").map_err(io(stage))?;

    let filtered = timer.run(Stage::Filter, || filter_stage(&registered, &cfg.outlier))?;
    write_cloud(&out.join("filtered.xyz"), &filtered, "outliers removed").map_err(io(Stage::Filter))?;

    let down = timer.run(Stage::Downsample, || downsample_stage(&filtered, &cfg.voxel))?;
    write_cloud(&out.join("downsampled.xyz"), &down, "voxel centroids").map_err(io(Stage::Downsample))?;
    if cfg.write_ply {
        write_ply(&out.join("downsampled.ply"), &down).map_err(io(Stage::Downsample))?;
    }

    let seg = timer.run(Stage::Segment, || segment_stage(&down, &cfg.ransac, cfg.trim_radius))?;
    let surfaces_file = SurfacesFile::new(&seg.surfaces, viewpoint.map(Into::into));
    write_json(&out.join("surfaces.json"), &surfaces_file).map_err(io(Stage::Segment))?;
    write_cloud(&out.join("remainder.xyz"), &seg.remainder, "points outside accepted surfaces")
        .map_err(io(Stage::Segment))?;
    log::info!("{} surfaces, {} remainder points", seg.surfaces.len(), seg.remainder.len());

    let (clustering, tree) = timer.run(Stage::Cluster, || cluster_stage(&seg.remainder, &cfg.cluster, cfg.octree_leaf))?;
    write_json(&out.join("clusters.json"), &ClustersFile::new(&clustering, seg.remainder.points()))
        .map_err(io(Stage::Cluster))?;
    write_json(&out.join("octree.json"), &OctreeFile::new(&tree)).map_err(io(Stage::Cluster))?;

    let plans = timer.run(Stage::Plan, || plan_stage(&down, &seg.surfaces, &cfg.planning, viewpoint))?;
    write_plans(out, &plans)?;

    let boundaries: Vec<Vec<Point3<f64>>> = seg.surfaces.iter().map(|s| s.boundary.clone()).collect();
    let (mut paths, mut stops) = (Vec::new(), Vec::new());
    for (_, plan) in plans.iter().filter_map(|o| o.result.as_ref().ok()) {
        paths.push(plan.waypoints.clone());
        stops.extend(plan.stops.iter().map(|s| s.position));
    }
    let scene = SvgScene {
        points: down.points(),
        boundaries: &boundaries,
        paths: &paths,
        stops: &stops,
    };
    write_text(&out.join("topdown.svg"), &render(&scene, View::TopDown)).map_err(io(Stage::Plan))?;
    write_text(&out.join("elevation.svg"), &render(&scene, View::Elevation)).map_err(io(Stage::Plan))?;

    let timings = TimingReport {
        version: FORMAT_VERSION,
        total_seconds: timer.start.elapsed().as_secs_f64(),
        stages: timer.stages,
        input_points,
    };
    write_json(&out.join("timings.json"), &timings).map_err(io(Stage::Plan))?;

    Ok(PipelineReport {
        input_points,
        filtered_points: filtered.len(),
        downsampled_points: down.len(),
        surfaces: seg.surfaces.clone(),
        segmentation: seg,
        clustering,
        plans,
        timings,
    })
}
