use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use structscan::harness::io::{
    read_cloud, read_json, read_text, write_cloud, write_json, write_ply, ClustersFile, IoError,
    OctreeFile, StationManifest, SurfacesFile, FORMAT_VERSION,
};
use structscan::harness::pipeline::{
    cluster_stage, downsample_stage, filter_stage, plan_stage, segment_stage, write_plans,
};
use structscan::harness::{
    export_boundary, generate_scene, import_boundary_file, run_pipeline, simulate_yaw_scan, PipelineConfig,
    PipelineError, PipelineInput, PipelineReport, SceneSpec, Stage, YawScanSpec,
};
use structscan::ingest::{build_cloud, estimate_pose_track, parse_scan_log, write_scan_log, IngestError};
use structscan::registration::{register_clouds, Station};
use structscan::{Point3, Pose};

const PRESETS: &str = "point, line, surface, cube, crossed, room, deck, bridge";

#[derive(Parser)]
#[command(name = "structscan", version, about = "Scan a structure, find its surfaces and plan inspection flights")]
struct Cli {
    /// TOML file with pipeline settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic scene into a cloud file.
    Generate(GenerateArgs),
    /// Simulate a 360° yaw scan of a scene and write a scan log.
    Simulate(SimulateArgs),
    /// Reconstruct a cloud from a scan log.
    Ingest(IngestArgs),
    /// Register station clouds listed in a manifest into one cloud.
    Register(RegisterArgs),
    /// Remove statistical outliers.
    Filter(FilterArgs),
    /// Voxel-grid downsampling.
    Downsample(DownsampleArgs),
    /// Extract planar surfaces.
    Segment(SegmentArgs),
    /// Cluster the points outside surfaces into obstacles.
    Cluster(ClusterArgs),
    /// Plan stop points and waypoints for every surface.
    Plan(PlanArgs),
    /// Run every stage and write all artifacts into one directory.
    Run(RunArgs),
    /// Hand a surface boundary to an operator and read it back.
    #[command(subcommand)]
    EditBoundary(EditCommand),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, help = format!("Preset ({PRESETS}) or scene JSON file"))]
    scene: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a PLY copy next to the cloud.
    #[arg(long)]
    ply: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, help = format!("Preset ({PRESETS}) or scene JSON file"))]
    scene: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scan log to write; ground truth goes to `<out>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    /// Start position x,y,z (m).
    #[arg(long, value_parser = parse_vec3)]
    position: Option<[f64; 3]>,
    /// Yaw advance per scan (degrees).
    #[arg(long)]
    yaw_step: Option<f64>,
    #[arg(long)]
    scans: Option<usize>,
    /// Translation drift per scan x,y,z (m).
    #[arg(long, value_parser = parse_vec3)]
    drift: Option<[f64; 3]>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON dump of the estimated pose track.
    #[arg(long)]
    poses: Option<PathBuf>,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON dump of the estimated station poses.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    overlap_margin: Option<f64>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d_t: Option<f64>,
}

#[derive(Args)]
struct DownsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    leaf: Option<f64>,
    #[arg(long)]
    ply: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// Surfaces JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Points outside accepted surfaces.
    #[arg(long)]
    remainder: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where the scene was observed from, x,y,z.
    #[arg(long, value_parser = parse_vec3)]
    viewpoint: Option<[f64; 3]>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    input: PathBuf,
    /// Clusters JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    octree: Option<PathBuf>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    /// Cloud the occupancy grid is built from.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    surfaces: PathBuf,
    /// Directory for `plan.json` and `plan_<i>.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    footprint_width: Option<f64>,
    #[arg(long)]
    footprint_height: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    voxel_edge: Option<f64>,
    #[arg(long)]
    inflation: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scan log (`.log`), station manifest (`.json`) or cloud file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    ply: bool,
}

#[derive(Subcommand)]
enum EditCommand {
    /// Write one surface's boundary to a polygon file.
    Export {
        #[arg(long)]
        surfaces: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace one surface's boundary with an edited polygon file.
    Import {
        #[arg(long)]
        surfaces: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        boundary: PathBuf,
        /// Surfaces file to write; defaults to updating `--surfaces`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Allowed vertex distance from the plane (m).
        #[arg(long)]
        threshold: Option<f64>,
    },
}

enum Failure {
    Validation(String),
    Stage(Stage, String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => Failure::Validation(m),
            PipelineError::Stage { stage, message } => Failure::Stage(stage, message),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([x, y, z]),
        _ => Err("expected three finite numbers x,y,z".into()),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load_scene(arg: &str) -> Result<SceneSpec, Failure> {
    let spec = if Path::new(arg).is_file() {
        read_json::<SceneSpec>(Path::new(arg))?
    } else {
        SceneSpec::preset(arg).map_err(invalid)?
    };
    spec.validate().map_err(invalid)?;
    Ok(spec)
}

/// Parse problems are the caller's fault; anything after parsing is a stage
/// failure.
fn ingest_failure(e: IngestError) -> Failure {
    match e {
        IngestError::MalformedRecord { .. }
        | IngestError::UnsortedTimestamps { .. }
        | IngestError::EmptyLog
        | IngestError::Io(_) => invalid(e),
        _ => Failure::Stage(Stage::Ingest, e.to_string()),
    }
}

#[derive(serde::Serialize)]
struct PoseDump {
    version: u32,
    poses: Vec<(f64, Pose)>,
}

#[derive(serde::Serialize)]
struct SimulationTruth<'a> {
    version: u32,
    scene: &'a SceneSpec,
    spec: &'a YawScanSpec,
    /// World pose of the frame the ingest stage reconstructs in.
    station: Pose,
    /// Body pose at every scan, in the station frame.
    poses: &'a [(f64, Pose)],
}

fn load_stations(manifest: &Path) -> Result<Vec<Station>, Failure> {
    let m = StationManifest::read(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    m.stations
        .iter()
        .map(|s| {
            Ok(Station {
                cloud: read_cloud(&base.join(&s.cloud))?,
                recorded_pose: s.pose,
            })
        })
        .collect()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn report_plans(report: &PipelineReport) -> Result<(), Failure> {
    let failed: Vec<String> = report
        .failed_plans()
        .map(|o| format!("surface {}: {}", o.surface, o.result.as_ref().err().map(ToString::to_string).unwrap_or_default()))
        .collect();
    println!(
        "{} points in, {} after filtering, {} downsampled, {} surfaces, {} obstacle clusters, {} of {} plans",
        report.input_points,
        report.filtered_points,
        report.downsampled_points,
        report.surfaces.len(),
        report.clustering.clusters.len(),
        report.plans.len() - failed.len(),
        report.plans.len()
    );
    for t in &report.timings.stages {
        println!("  {:<10} {:>8.3} s", t.stage, t.seconds);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Stage(Stage::Plan, failed.join("; ")))
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => {
            let scene = load_scene(&a.scene)?;
            let cloud = generate_scene(&scene, a.seed).map_err(invalid)?;
            write_cloud(&a.out, &cloud, &format!("scene {} seed {}", a.scene, a.seed))?;
            if a.ply {
                write_ply(&a.out.with_extension("ply"), &cloud)?;
            }
            println!("{} points", cloud.len());
        }
        Command::Simulate(a) => {
            let scene = load_scene(&a.scene)?;
            let mut spec = YawScanSpec::default();
            if let Some(p) = a.position {
                spec.position = p;
            }
            if let Some(deg) = a.yaw_step {
                spec.yaw_step = deg.to_radians();
            }
            if let Some(n) = a.scans {
                spec.scans = n;
            }
            if let Some(d) = a.drift {
                spec.drift_per_scan = d;
            }
            let sim = simulate_yaw_scan(&scene, &spec, a.seed).map_err(invalid)?;
            write_scan_log(&sim.log, &a.out).map_err(invalid)?;
            let truth = SimulationTruth {
                version: FORMAT_VERSION,
                scene: &scene,
                spec: &spec,
                station: sim.station,
                poses: &sim.truth,
            };
            write_json(&sibling(&a.out, ".truth.json"), &truth)?;
            println!("{} vertical and {} horizontal scans", sim.log.vertical.len(), sim.log.horizontal.len());
        }
        Command::Ingest(a) => {
            let log = parse_scan_log(&a.log).map_err(ingest_failure)?;
            let track = estimate_pose_track(&log, &cfg.ingest).map_err(ingest_failure)?;
            let built = build_cloud(&log, &track, &cfg.ingest).map_err(ingest_failure)?;
            write_cloud(&a.out, &built.cloud, "registered cloud")?;
            if let Some(p) = a.poses {
                write_json(&p, &PoseDump { version: FORMAT_VERSION, poses: track.entries.clone() })?;
            }
            println!("{} points, {} readings dropped", built.cloud.len(), built.dropped);
        }
        Command::Register(a) => {
            if let Some(m) = a.overlap_margin {
                cfg.registration.overlap_margin = m;
            }
            cfg.validate()?;
            let stations = load_stations(&a.manifest)?;
            let reg = register_clouds(&stations, &cfg.registration)
                .map_err(|e| Failure::Stage(Stage::Register, e.to_string()))?;
            write_cloud(&a.out, &reg.cloud, "registered cloud")?;
            if let Some(p) = a.poses {
                let poses = reg.poses.iter().enumerate().map(|(i, p)| (i as f64, *p)).collect();
                write_json(&p, &PoseDump { version: FORMAT_VERSION, poses })?;
            }
            println!("{} stations, {} points", stations.len(), reg.cloud.len());
        }
        Command::Filter(a) => {
            if let Some(k) = a.k {
                cfg.outlier.k_neighbors = k;
            }
            if let Some(d) = a.d_t {
                cfg.outlier.d_t = d;
            }
            cfg.validate()?;
            let cloud = read_cloud(&a.input)?;
            let kept = filter_stage(&cloud, &cfg.outlier)?;
            write_cloud(&a.out, &kept, "outliers removed")?;
            println!("{} of {} points kept", kept.len(), cloud.len());
        }
        Command::Downsample(a) => {
            if let Some(l) = a.leaf {
                cfg.voxel.leaf_size = l;
            }
            cfg.validate()?;
            let cloud = read_cloud(&a.input)?;
            let down = downsample_stage(&cloud, &cfg.voxel)?;
            write_cloud(&a.out, &down, "voxel centroids")?;
            if a.ply {
                write_ply(&a.out.with_extension("ply"), &down)?;
            }
            println!("{} of {} points kept", down.len(), cloud.len());
        }
        Command::Segment(a) => {
            if let Some(t) = a.threshold {
                cfg.ransac.distance_threshold = t;
            }
            if let Some(n) = a.iterations {
                cfg.ransac.iterations = n;
            }
            if let Some(s) = a.seed {
                cfg.ransac.rng_seed = s;
            }
            cfg.validate()?;
            let cloud = read_cloud(&a.input)?;
            let seg = segment_stage(&cloud, &cfg.ransac, cfg.trim_radius)?;
            write_json(&a.out, &SurfacesFile::new(&seg.surfaces, a.viewpoint))?;
            if let Some(r) = a.remainder {
                write_cloud(&r, &seg.remainder, "points outside accepted surfaces")?;
            }
            println!("{} surfaces, {} remainder points", seg.surfaces.len(), seg.remainder.len());
        }
        Command::Cluster(a) => {
            if let Some(r) = a.radius {
                cfg.cluster.radius = r;
            }
            if let Some(m) = a.min_size {
                cfg.cluster.min_cluster_size = m;
            }
            cfg.validate()?;
            let cloud = read_cloud(&a.input)?;
            let (clustering, tree) = cluster_stage(&cloud, &cfg.cluster, cfg.octree_leaf)?;
            write_json(&a.out, &ClustersFile::new(&clustering, cloud.points()))?;
            if let Some(o) = a.octree {
                write_json(&o, &OctreeFile::new(&tree))?;
            }
            println!("{} clusters, {} noise points", clustering.clusters.len(), clustering.noise.len());
        }
        Command::Plan(a) => {
            let p = &mut cfg.planning;
            if let Some(v) = a.footprint_width {
                p.footprint_width = v;
            }
            if let Some(v) = a.footprint_height {
                p.footprint_height = v;
            }
            if let Some(v) = a.overlap {
                p.overlap = v;
            }
            if let Some(v) = a.voxel_edge {
                p.voxel_edge = v;
            }
            if let Some(v) = a.inflation {
                p.inflation_radius = v;
            }
            cfg.validate()?;
            let cloud = read_cloud(&a.cloud)?;
            let file = SurfacesFile::read(&a.surfaces)?;
            let surfaces = file.surfaces()?;
            let plans = plan_stage(&cloud, &surfaces, &cfg.planning, file.viewpoint.map(Point3::from))?;
            std::fs::create_dir_all(&a.out_dir).map_err(|e| invalid(format!("{}: {e}", a.out_dir.display())))?;
            write_plans(&a.out_dir, &plans)?;
            let mut failed = Vec::new();
            for o in &plans {
                match &o.result {
                    Ok((standoff, plan)) => println!(
                        "surface {}: {} stops at {standoff:.2} m, {} waypoints, cost {:.1}",
                        o.surface,
                        plan.stops.len(),
                        plan.waypoints.len(),
                        plan.total_cost()
                    ),
                    Err(e) => failed.push(format!("surface {}: {e}", o.surface)),
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Stage(Stage::Plan, failed.join("; ")));
            }
        }
        Command::Run(a) => {
            if a.ply {
                cfg.write_ply = true;
            }
            cfg.validate()?;
            let ext = a.input.extension().and_then(|e| e.to_str()).unwrap_or("");
            let input = match ext {
                "log" => PipelineInput::Log(parse_scan_log(&a.input).map_err(ingest_failure)?),
                "json" => PipelineInput::Stations(load_stations(&a.input)?),
                _ => PipelineInput::Cloud(read_cloud(&a.input)?),
            };
            let report = run_pipeline(input, &cfg, &a.out_dir)?;
            report_plans(&report)?;
        }
        Command::EditBoundary(EditCommand::Export { surfaces, index, out }) => {
            let file = SurfacesFile::read(&surfaces)?;
            export_boundary(&file, index, &out).map_err(invalid)?;
        }
        Command::EditBoundary(EditCommand::Import {
            surfaces,
            index,
            boundary,
            out,
            threshold,
        }) => {
            let mut file = SurfacesFile::read(&surfaces)?;
            let limit = threshold.unwrap_or(cfg.ransac.distance_threshold);
            let s = import_boundary_file(&mut file, index, &boundary, limit).map_err(invalid)?;
            write_json(out.as_deref().unwrap_or(&surfaces), &file)?;
            println!("surface {index}: {} vertices, area {:.3} m²", s.boundary.len(), s.area);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(stage, m)) => {
            eprintln!("error: stage {stage} failed: {m}");
            ExitCode::from(3)
        }
    }
}
