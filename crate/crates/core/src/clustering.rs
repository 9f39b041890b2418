//! Euclidean clustering of obstacle points and an occupancy octree for
//! rendering them.

use crate::geometry::{Aabb, Point3, PointCloud};
use crate::kdtree::KdTree3;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Neighbour search radius ε in meters; the ball is closed (distance ≤ ε).
    pub radius: f64,
    pub min_cluster_size: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            radius: 0.3,
            min_cluster_size: 10,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.radius > 0.0) {
            return Err(ClusterError::InvalidConfig("radius must be > 0"));
        }
        if self.min_cluster_size < 1 {
            return Err(ClusterError::InvalidConfig("min_cluster_size must be >= 1"));
        }
        Ok(())
    }
}

/// Point indices of one obstacle, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub indices: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bounds(&self, points: &[Point3<f64>]) -> Aabb {
        Aabb::from_points(self.indices.iter().map(|&i| &points[i]))
            .expect("clusters are never empty")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Clustering {
    /// Ordered by descending size, ties by smallest member index.
    pub clusters: Vec<Cluster>,
    /// Members of components smaller than `min_cluster_size`, ascending.
    pub noise: Vec<usize>,
}

pub fn euclidean_cluster(cloud: &PointCloud, cfg: &ClusterConfig) -> Result<Clustering, ClusterError> {
    euclidean_cluster_points(cloud.points(), cfg)
}

/// Flood fill over the ε-neighbour graph. Each unprocessed seed starts a FIFO
/// queue that grows while it is walked; the finished queue is one component.
pub fn euclidean_cluster_points(
    points: &[Point3<f64>],
    cfg: &ClusterConfig,
) -> Result<Clustering, ClusterError> {
    cfg.validate()?;
    let tree = KdTree3::new(points.iter().map(|p| [p.x, p.y, p.z]).collect());
    let mut processed = vec![false; points.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut hits = Vec::new();

    for seed in 0..points.len() {
        if processed[seed] {
            continue;
        }
        processed[seed] = true;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(q) = queue.pop_front() {
            members.push(q);
            let p = &points[q];
            tree.within_radius_into(&[p.x, p.y, p.z], cfg.radius, &mut hits);
            for &n in &hits {
                if !processed[n] {
                    processed[n] = true;
                    queue.push_back(n);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let mut clustering = Clustering::default();
    for c in components {
        if c.len() >= cfg.min_cluster_size {
            clustering.clusters.push(Cluster { indices: c });
        } else {
            clustering.noise.extend(c);
        }
    }
    clustering
        .clusters
        .sort_by(|a, b| b.len().cmp(&a.len()).then(a.indices[0].cmp(&b.indices[0])));
    clustering.noise.sort_unstable();
    Ok(clustering)
}

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct OctNode {
    children: [u32; 8],
}

/// Sparse occupancy octree over a cubic root region.
#[derive(Debug, Clone)]
pub struct Octree {
    origin: Point3<f64>,
    leaf_size: f64,
    depth: u32,
    nodes: Vec<OctNode>,
    /// Occupied leaf keys, sorted.
    leaves: Vec<[u64; 3]>,
}

impl Octree {
    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn leaf_size(&self) -> f64 {
        self.leaf_size
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Edge of the root cube: `leaf_size · 2^depth`.
    pub fn root_edge(&self) -> f64 {
        self.leaf_size * (1u64 << self.depth) as f64
    }

    pub fn occupied_leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_keys(&self) -> &[[u64; 3]] {
        &self.leaves
    }

    pub fn leaf_centers(&self) -> Vec<Point3<f64>> {
        self.leaves
            .iter()
            .map(|k| {
                Point3::new(
                    self.origin.x + (k[0] as f64 + 0.5) * self.leaf_size,
                    self.origin.y + (k[1] as f64 + 0.5) * self.leaf_size,
                    self.origin.z + (k[2] as f64 + 0.5) * self.leaf_size,
                )
            })
            .collect()
    }

    fn key_of(&self, p: &Point3<f64>) -> Option<[u64; 3]> {
        let side = 1u64 << self.depth;
        let mut key = [0u64; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.leaf_size).floor();
            if !(f >= 0.0 && f < side as f64) {
                return None;
            }
            key[a] = f as u64;
        }
        Some(key)
    }

    /// Whether the leaf containing `p` is occupied, walking the tree.
    pub fn is_occupied(&self, p: &Point3<f64>) -> bool {
        let Some(key) = self.key_of(p) else {
            return false;
        };
        if self.nodes.is_empty() {
            return false;
        }
        let mut node = 0usize;
        for level in (0..self.depth).rev() {
            let child = child_slot(&key, level);
            let next = self.nodes[node].children[child];
            if next == NO_CHILD {
                return false;
            }
            node = next as usize;
        }
        true
    }
}

fn child_slot(key: &[u64; 3], level: u32) -> usize {
    (((key[0] >> level) & 1) | (((key[1] >> level) & 1) << 1) | (((key[2] >> level) & 1) << 2)) as usize
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("octree leaf resolution must be > 0, got {0}")]
pub struct InvalidResolution(pub f64);

/// Builds an octree whose root is anchored at the bounding-box minimum with
/// edge `leaf_resolution · 2^depth`, depth the smallest that strictly covers
/// the box so that the max corner still floors into a valid leaf.
pub fn octree_from_points(points: &[Point3<f64>], leaf_resolution: f64) -> Result<Octree, InvalidResolution> {
    if !(leaf_resolution > 0.0) || !leaf_resolution.is_finite() {
        return Err(InvalidResolution(leaf_resolution));
    }
    let Some(bounds) = Aabb::from_points(points) else {
        return Ok(Octree {
            origin: Point3::origin(),
            leaf_size: leaf_resolution,
            depth: 0,
            nodes: Vec::new(),
            leaves: Vec::new(),
        });
    };
    let extent = bounds.extent().max();
    let mut depth = 0u32;
    while leaf_resolution * ((1u64 << depth) as f64) <= extent {
        depth += 1;
    }
    let mut tree = Octree {
        origin: bounds.min,
        leaf_size: leaf_resolution,
        depth,
        nodes: vec![OctNode {
            children: [NO_CHILD; 8],
        }],
        leaves: Vec::new(),
    };
    let mut keys: Vec<[u64; 3]> = points
        .iter()
        .map(|p| tree.key_of(p).expect("root covers the bounding box"))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    for key in &keys {
        let mut node = 0usize;
        for level in (0..depth).rev() {
            let slot = child_slot(key, level);
            let next = tree.nodes[node].children[slot];
            node = if next == NO_CHILD {
                let id = tree.nodes.len();
                tree.nodes.push(OctNode {
                    children: [NO_CHILD; 8],
                });
                tree.nodes[node].children[slot] = id as u32;
                id
            } else {
                next as usize
            };
        }
    }
    tree.leaves = keys;
    Ok(tree)
}
