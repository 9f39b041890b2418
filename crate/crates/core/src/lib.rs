//! Point-cloud processing and inspection path planning for UAV structure
//! surveys: scan ingestion, registration, filtering, plane segmentation,
//! clustering, and coverage flight planning.

// NaN-rejecting `!(x > 0.0)` checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod geometry;
pub mod harness;
pub mod ingest;
pub mod kdtree;
pub mod planning;
pub mod preprocess;
pub mod registration;
pub mod segmentation;

pub use geometry::{Point3, PointCloud, Pose, Rotation};
