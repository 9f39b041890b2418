use std::path::Path;
use std::process::{Command, Output};

fn structscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structscan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let steps: &[&[&str]] = &[
        &["generate", "--scene", "surface", "--seed", "2", "--out", "cloud.xyz"],
        &["filter", "--input", "cloud.xyz", "--out", "filtered.xyz"],
        &["downsample", "--input", "filtered.xyz", "--out", "down.xyz", "--ply"],
        &["segment", "--input", "down.xyz", "--out", "surfaces.json", "--remainder", "rest.xyz"],
        &["cluster", "--input", "rest.xyz", "--out", "clusters.json", "--octree", "octree.json"],
        &["plan", "--cloud", "down.xyz", "--surfaces", "surfaces.json", "--out-dir", "plan"],
    ];
    for args in steps {
        let o = structscan(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    for f in ["down.ply", "clusters.json", "octree.json", "plan/plan.json", "plan/plan_0.csv"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let surfaces: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("surfaces.json")).unwrap()).unwrap();
    assert_eq!(surfaces["version"], 1);
    assert_eq!(surfaces["planes"].as_array().unwrap().len(), 1);
}

#[test]
fn run_without_surfaces_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&structscan(d, &["generate", "--scene", "line", "--out", "line.xyz"])), 0);
    let o = structscan(d, &["run", "--input", "line.xyz", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/plan.json")).unwrap()).unwrap();
    assert!(plan["plans"].as_array().unwrap().is_empty());
    assert!(d.join("out/timings.json").is_file());
}

#[test]
fn blocked_plans_exit_with_stage_failure_and_keep_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&structscan(d, &["generate", "--scene", "crossed", "--out", "crossed.xyz"])), 0);
    let o = structscan(d, &["run", "--input", "crossed.xyz", "--out-dir", "out"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("stage plan failed") && err.contains("blocked"), "{err}");
    for f in ["registered.xyz", "surfaces.json", "clusters.json", "plan.json", "topdown.svg", "timings.json"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn bad_settings_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&structscan(d, &["generate", "--scene", "point", "--out", "p.xyz"])), 0);
    std::fs::write(d.join("bad.toml"), "[voxel]\nleaf_size = -1.0\n").unwrap();
    let o = structscan(d, &["--config", "bad.toml", "run", "--input", "p.xyz", "--out-dir", "out"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    std::fs::write(d.join("typo.toml"), "[voxel]\nleaf = 1.0\n").unwrap();
    assert_eq!(code(&structscan(d, &["--config", "typo.toml", "run", "--input", "p.xyz", "--out-dir", "out"])), 2);
    assert_eq!(code(&structscan(d, &["downsample", "--input", "p.xyz", "--out", "q.xyz", "--leaf", "0"])), 2);
    assert_eq!(code(&structscan(d, &["generate", "--scene", "nonsense", "--out", "x.xyz"])), 2);
    assert_eq!(code(&structscan(d, &["filter", "--input", "missing.xyz", "--out", "x.xyz"])), 2);
    std::fs::write(d.join("broken.log"), "V 0.0 1 2 3\n").unwrap();
    assert_eq!(code(&structscan(d, &["ingest", "--log", "broken.log", "--out", "x.xyz"])), 2);

    std::fs::write(d.join("ok.toml"), "[voxel]\nleaf_size = 0.5\n").unwrap();
    let o = structscan(d, &["--config", "ok.toml", "run", "--input", "p.xyz", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn simulated_log_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = structscan(d, &["simulate", "--scene", "room", "--yaw-step", "6", "--scans", "60", "--out", "room.log"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("room.log.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["poses"].as_array().unwrap().len(), 60);

    let o = structscan(d, &["ingest", "--log", "room.log", "--out", "room.xyz", "--poses", "poses.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = structscan(d, &["run", "--input", "room.log", "--out-dir", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("room.xyz")).unwrap(), std::fs::read(d.join("out/registered.xyz")).unwrap());
}

#[test]
fn stations_register_from_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&structscan(d, &["generate", "--scene", "cube", "--out", "a.xyz"])), 0);
    std::fs::copy(d.join("a.xyz"), d.join("b.xyz")).unwrap();
    let pose = serde_json::json!({"rotation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "translation": [0.0, 0.0, 0.0]});
    let moved = serde_json::json!({"rotation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "translation": [0.05, -0.03, 0.02]});
    let manifest = serde_json::json!({"version": 1, "stations": [{"cloud": "a.xyz", "pose": pose}, {"cloud": "b.xyz", "pose": moved}]});
    std::fs::write(d.join("stations.json"), manifest.to_string()).unwrap();
    let o = structscan(d, &["register", "--manifest", "stations.json", "--out", "merged.xyz", "--poses", "poses.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let poses: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("poses.json")).unwrap()).unwrap();
    let t = &poses["poses"][1][1]["translation"];
    for a in 0..3 {
        assert!(t[a].as_f64().unwrap().abs() < 0.01, "{t}");
    }
}

#[test]
fn unedited_boundary_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&structscan(d, &["generate", "--scene", "surface", "--out", "s.xyz"])), 0);
    assert_eq!(code(&structscan(d, &["segment", "--input", "s.xyz", "--out", "surfaces.json"])), 0);
    let o = structscan(d, &["edit-boundary", "export", "--surfaces", "surfaces.json", "--index", "0", "--out", "b.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = structscan(
        d,
        &["edit-boundary", "import", "--surfaces", "surfaces.json", "--index", "0", "--boundary", "b.json", "--out", "edited.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let before: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("surfaces.json")).unwrap()).unwrap();
    let after: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("edited.json")).unwrap()).unwrap();
    assert_eq!(before["planes"][0]["boundary"], after["planes"][0]["boundary"]);
    assert_eq!(before["planes"][0]["normal"], after["planes"][0]["normal"]);

    let mut b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    let y = b["boundary"][1][1].as_f64().unwrap();
    b["boundary"][1][1] = serde_json::json!(y + 1.0);
    std::fs::write(d.join("b.json"), b.to_string()).unwrap();
    let o = structscan(d, &["edit-boundary", "import", "--surfaces", "surfaces.json", "--index", "0", "--boundary", "b.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("off the plane"), "{}", stderr(&o));
}
