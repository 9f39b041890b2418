use std::path::Path;
use structscan::harness::io::{read_cloud, read_text, write_json, ClustersFile, SurfacesFile};
use structscan::harness::pipeline::{cluster_stage, downsample_stage, filter_stage, plan_file, plan_stage, segment_stage};
use structscan::harness::{
    export_boundary, generate_scene, import_boundary_file, run_pipeline, simulate_yaw_scan, EditError, PipelineConfig,
    PipelineInput, SceneSpec, YawScanSpec,
};
use structscan::ingest::{parse_scan_log, parse_scan_log_str, write_scan_log, write_scan_log_string};
use structscan::planning::{plan_coverage, CameraSpec, CoverageOptions, InspectionTask};
use structscan::Point3;

fn room_log() -> structscan::ingest::ScanLog {
    let spec = YawScanSpec {
        yaw_step: 6f64.to_radians(),
        scans: 60,
        ..Default::default()
    };
    simulate_yaw_scan(&SceneSpec::preset("room").unwrap(), &spec, 3).unwrap().log
}

fn json_bytes<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Vec<u8> {
    let p = dir.join(name);
    write_json(&p, value).unwrap();
    std::fs::read(p).unwrap()
}

#[test]
fn scan_log_survives_a_write_read_cycle() {
    let log = room_log();
    let text = write_scan_log_string(&log);
    let back = parse_scan_log_str(&text).unwrap();
    assert_eq!(back, log);
    assert_eq!(write_scan_log_string(&back), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("room.log");
    write_scan_log(&log, &path).unwrap();
    assert_eq!(parse_scan_log(&path).unwrap(), log);
}

#[test]
fn every_stage_reruns_from_its_input_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = PipelineConfig::default();
    run_pipeline(PipelineInput::Log(room_log()), &cfg, &out).unwrap();
    let scratch = dir.path().join("scratch");
    std::fs::create_dir_all(&scratch).unwrap();

    let registered = read_cloud(&out.join("registered.xyz")).unwrap();
    let filtered = filter_stage(&registered, &cfg.outlier).unwrap();
    assert_eq!(filtered, read_cloud(&out.join("filtered.xyz")).unwrap());

    let filtered = read_cloud(&out.join("filtered.xyz")).unwrap();
    let down = downsample_stage(&filtered, &cfg.voxel).unwrap();
    assert_eq!(down, read_cloud(&out.join("downsampled.xyz")).unwrap());

    let down = read_cloud(&out.join("downsampled.xyz")).unwrap();
    let seg = segment_stage(&down, &cfg.ransac, cfg.trim_radius).unwrap();
    let stored = SurfacesFile::read(&out.join("surfaces.json")).unwrap();
    let fresh = SurfacesFile::new(&seg.surfaces, stored.viewpoint);
    assert_eq!(json_bytes(&scratch, "surfaces.json", &fresh), std::fs::read(out.join("surfaces.json")).unwrap());
    assert_eq!(seg.remainder, read_cloud(&out.join("remainder.xyz")).unwrap());

    let remainder = read_cloud(&out.join("remainder.xyz")).unwrap();
    let (clustering, _) = cluster_stage(&remainder, &cfg.cluster, cfg.octree_leaf).unwrap();
    let clusters = ClustersFile::new(&clustering, remainder.points());
    assert_eq!(json_bytes(&scratch, "clusters.json", &clusters), std::fs::read(out.join("clusters.json")).unwrap());

    let surfaces = stored.surfaces().unwrap();
    let viewpoint = stored.viewpoint.map(Point3::from);
    let plans = plan_stage(&down, &surfaces, &cfg.planning, viewpoint).unwrap();
    assert!(!plans.is_empty());
    assert_eq!(json_bytes(&scratch, "plan.json", &plan_file(&plans)), std::fs::read(out.join("plan.json")).unwrap());
}

#[test]
fn halving_a_boundary_halves_the_stop_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let deck = generate_scene(&SceneSpec::preset("deck").unwrap(), 4).unwrap();
    let down = downsample_stage(&deck, &cfg.voxel).unwrap();
    let seg = segment_stage(&down, &cfg.ransac, cfg.trim_radius).unwrap();
    assert_eq!(seg.surfaces.len(), 1);
    let mut file = SurfacesFile::new(&seg.surfaces, None);
    let path = dir.path().join("boundary.json");
    export_boundary(&file, 0, &path).unwrap();

    // replace the sampled hull with the exact deck and its western half
    let count = |file: &SurfacesFile| {
        let s = &file.surfaces().unwrap()[0];
        let task = InspectionTask::new(s, 0.6, 0.4, 0.2).unwrap();
        plan_coverage(&task, &CameraSpec::default(), &CoverageOptions::default()).unwrap().stops.len()
    };
    let (n, d) = (file.planes[0].normal, file.planes[0].d);
    let edit = |x_max: f64| {
        let text = read_text(&path).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let z = |x: f64, y: f64| -(n[0] * x + n[1] * y + d) / n[2];
        v["boundary"] = serde_json::json!([
            [-11.0, -5.0, z(-11.0, -5.0)],
            [x_max, -5.0, z(x_max, -5.0)],
            [x_max, 5.0, z(x_max, 5.0)],
            [-11.0, 5.0, z(-11.0, 5.0)]
        ]);
        std::fs::write(&path, v.to_string()).unwrap();
    };
    edit(11.0);
    import_boundary_file(&mut file, 0, &path, cfg.ransac.distance_threshold).unwrap();
    assert!((file.planes[0].area - 220.0).abs() < 1e-6);
    assert_eq!(count(&file), 1150);
    edit(0.0);
    import_boundary_file(&mut file, 0, &path, cfg.ransac.distance_threshold).unwrap();
    assert!((file.planes[0].area - 110.0).abs() < 1e-6);
    assert_eq!(count(&file), 575);
}

#[test]
fn non_planar_and_crossing_edits_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let cloud = generate_scene(&SceneSpec::preset("surface").unwrap(), 1).unwrap();
    let down = downsample_stage(&cloud, &cfg.voxel).unwrap();
    let seg = segment_stage(&down, &cfg.ransac, cfg.trim_radius).unwrap();
    let mut file = SurfacesFile::new(&seg.surfaces, None);
    let before = file.clone();
    let path = dir.path().join("b.json");
    export_boundary(&file, 0, &path).unwrap();
    let original: serde_json::Value = serde_json::from_str(&read_text(&path).unwrap()).unwrap();

    let mut lifted = original.clone();
    let y = lifted["boundary"][0][1].as_f64().unwrap();
    lifted["boundary"][0][1] = serde_json::json!(y + 1.0);
    std::fs::write(&path, lifted.to_string()).unwrap();
    let err = import_boundary_file(&mut file, 0, &path, cfg.ransac.distance_threshold).unwrap_err();
    assert!(matches!(err, EditError::NonPlanarEdit { vertex: 0, .. }), "{err:?}");

    let mut bowtie = original.clone();
    let b = bowtie["boundary"].as_array_mut().unwrap();
    assert!(b.len() >= 4);
    b.swap(0, 1);
    std::fs::write(&path, bowtie.to_string()).unwrap();
    let err = import_boundary_file(&mut file, 0, &path, cfg.ransac.distance_threshold).unwrap_err();
    assert!(matches!(err, EditError::SelfIntersectingPolygon { .. }), "{err:?}");
    assert_eq!(file, before);
}
