//! Statistical outlier removal and voxel-grid density equalization.

use crate::geometry::{Point3, PointCloud};
use crate::kdtree::KdTree3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("cloud has {points} points, need more than k = {k}")]
    CloudTooSmall { points: usize, k: usize },
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Neighbourhood size and band width of the statistical outlier filter.
/// Defaults (k = 50, d_t = 1.0) are tunable, not measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierFilterConfig {
    pub k_neighbors: usize,
    /// Points whose mean neighbour distance leaves `μ ± d_t·σ` are removed.
    pub d_t: f64,
}

impl Default for OutlierFilterConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 50,
            d_t: 1.0,
        }
    }
}

impl OutlierFilterConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.k_neighbors < 1 {
            return Err(PreprocessError::InvalidConfig("k_neighbors must be >= 1"));
        }
        if !(self.d_t > 0.0) {
            return Err(PreprocessError::InvalidConfig("d_t must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelGridConfig {
    /// Cube edge in meters.
    pub leaf_size: f64,
}

impl Default for VoxelGridConfig {
    fn default() -> Self {
        Self { leaf_size: 0.05 }
    }
}

/// Outcome of the outlier filter, with the statistics it used.
#[derive(Debug, Clone)]
pub struct OutlierFilterResult {
    pub kept: PointCloud,
    pub kept_indices: Vec<usize>,
    pub removed_count: usize,
    pub mean: f64,
    pub std_dev: f64,
}

/// Mean distance from each point to its `k` nearest other points.
pub fn mean_neighbor_distances(points: &[Point3<f64>], k: usize) -> Vec<f64> {
    let tree = KdTree3::new(points.iter().map(|p| [p.x, p.y, p.z]).collect());
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let hits = tree.knn(&[p.x, p.y, p.z], k + 1);
            let mut sum = 0.0;
            let mut taken = 0;
            for n in hits.iter().filter(|n| n.index != i).take(k) {
                sum += n.dist2.sqrt();
                taken += 1;
            }
            sum / taken as f64
        })
        .collect()
}

/// Removes points whose mean k-neighbour distance lies outside `μ ± d_t·σ`,
/// where μ and σ (population) are taken over all points.
pub fn remove_statistical_outliers(
    cloud: &PointCloud,
    cfg: &OutlierFilterConfig,
) -> Result<OutlierFilterResult, PreprocessError> {
    cfg.validate()?;
    let n = cloud.len();
    if n <= cfg.k_neighbors {
        return Err(PreprocessError::CloudTooSmall {
            points: n,
            k: cfg.k_neighbors,
        });
    }
    let means = mean_neighbor_distances(cloud.points(), cfg.k_neighbors);
    let mu = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n as f64;
    let sigma = var.sqrt();
    // Rounding slack so that a zero-variance cloud keeps every point.
    let band = cfg.d_t * sigma + 1e-12 * mu.abs();
    let kept_indices: Vec<usize> = means
        .iter()
        .enumerate()
        .filter(|(_, m)| (*m - mu).abs() <= band)
        .map(|(i, _)| i)
        .collect();
    Ok(OutlierFilterResult {
        kept: cloud.select(&kept_indices),
        removed_count: n - kept_indices.len(),
        kept_indices,
        mean: mu,
        std_dev: sigma,
    })
}

/// Replaces the points of every occupied voxel by their centroid. The grid is
/// anchored at the cloud's minimum corner; output is ordered by voxel index
/// `(ix, iy, iz)` lexicographically.
pub fn voxel_downsample(cloud: &PointCloud, cfg: &VoxelGridConfig) -> Result<PointCloud, PreprocessError> {
    match cloud.bounds() {
        None => {
            validate_leaf(cfg.leaf_size)?;
            Ok(PointCloud::empty())
        }
        Some(b) => voxel_downsample_anchored(cloud, cfg.leaf_size, &b.min),
    }
}

fn validate_leaf(leaf: f64) -> Result<(), PreprocessError> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(PreprocessError::InvalidConfig("leaf_size must be > 0"));
    }
    Ok(())
}

/// Voxel downsampling with an explicit grid anchor. Tags, when present, are
/// taken from the lowest-index member of each voxel.
pub fn voxel_downsample_anchored(
    cloud: &PointCloud,
    leaf_size: f64,
    anchor: &Point3<f64>,
) -> Result<PointCloud, PreprocessError> {
    validate_leaf(leaf_size)?;
    let pts = cloud.points();
    let mut keyed: Vec<([i64; 3], usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let key = std::array::from_fn(|a| ((p[a] - anchor[a]) / leaf_size).floor() as i64);
            (key, i)
        })
        .collect();
    keyed.sort_unstable();

    let mut out = Vec::new();
    let mut tags = cloud.tags().map(|_| Vec::new());
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start;
        let mut sum = nalgebra::Vector3::zeros();
        while end < keyed.len() && keyed[end].0 == key {
            sum += pts[keyed[end].1].coords;
            end += 1;
        }
        out.push(Point3::from(sum / (end - start) as f64));
        if let (Some(t), Some(src)) = (tags.as_mut(), cloud.tags()) {
            // keyed is sorted by (key, index): the first entry is the lowest index
            t.push(src[keyed[start].1]);
        }
        start = end;
    }
    Ok(PointCloud::from_parts_unchecked(out, tags))
}
