//! Synthetic data, artifact I/O and pipeline orchestration.

pub mod edit;
pub mod io;
pub mod pipeline;
pub mod scene;
pub mod simulate;
pub mod svg;

pub use edit::{export_boundary, import_boundary, import_boundary_file, EditError};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineInput, PipelineReport, PlanOutcome, Stage};
pub use scene::{generate_scene, Primitive, SceneSpec};
pub use simulate::{simulate_yaw_scan, SimulatedScan, YawScanSpec};
