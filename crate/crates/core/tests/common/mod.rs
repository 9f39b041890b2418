//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::Vector2;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use structscan::planning::{neighbor_offsets, AStarWeights, OccupancyGrid, Voxel};
use structscan::Point3;

/// Nearest point by linear scan; lowest index wins ties.
pub fn linear_nearest(points: &[Point3<f64>], q: &Point3<f64>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the closed-ball ε-graph, each sorted ascending,
/// split into (size ≥ min, rest). Components are ordered by size descending
/// then smallest member.
pub fn union_find_components(points: &[Point3<f64>], eps: f64, min_size: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = points.len();
    let mut uf = UnionFind { parent: (0..n).collect() };
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm_squared() <= eps * eps {
                uf.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut noise: Vec<usize> = comps.iter().filter(|c| c.len() < min_size).flatten().copied().collect();
    noise.sort_unstable();
    comps.retain(|c| c.len() >= min_size);
    (comps, noise)
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Directed hull edges `i → j` (counter-clockwise) between distinct
/// locations: every other point lies strictly left of the edge, or on it and
/// not outside the endpoints. Duplicated locations yield one edge, from the
/// lowest index.
pub fn brute_force_hull_edges(points: &[Vector2<f64>]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || points[i] == points[j] {
                continue;
            }
            if (0..i).any(|k| points[k] == points[i]) || (0..j).any(|k| points[k] == points[j]) {
                continue;
            }
            let ok = (0..n).all(|k| {
                if k == i || k == j {
                    return true;
                }
                let c = cross(&points[i], &points[j], &points[k]);
                if c > 0.0 {
                    return true;
                }
                if c < 0.0 {
                    return false;
                }
                let (a, b, p) = (points[i], points[j], points[k]);
                let t = (p - a).dot(&(b - a)) / (b - a).norm_squared();
                (0.0..=1.0).contains(&t)
            });
            if ok {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Dijkstra over 26-connected free voxels with the same step costs as A*.
pub fn dijkstra(grid: &OccupancyGrid, start: Voxel, goal: Voxel, w: &AStarWeights) -> Option<f64> {
    if grid.is_occupied(start) || grid.is_occupied(goal) {
        return None;
    }
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[grid.index(start)] = 0.0;
    heap.push(Reverse((OrdF64(0.0), grid.index(start))));
    let dims = grid.dims().map(|d| d as i64);
    let offsets: Vec<[i64; 3]> = neighbor_offsets().collect();
    while let Some(Reverse((OrdF64(d), idx))) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        let v = grid.voxel_at(idx);
        if v == goal {
            return Some(d);
        }
        for o in &offsets {
            let n = [v[0] as i64 + o[0], v[1] as i64 + o[1], v[2] as i64 + o[2]];
            if (0..3).any(|a| n[a] < 0 || n[a] >= dims[a]) {
                continue;
            }
            let nv = [n[0] as usize, n[1] as usize, n[2] as usize];
            if grid.is_occupied(nv) {
                continue;
            }
            let nd = d + w.step_cost(o[0], o[1], o[2]);
            let ni = grid.index(nv);
            if nd < dist[ni] {
                dist[ni] = nd;
                heap.push(Reverse((OrdF64(nd), ni)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Prints one result line and returns the verdict.
pub fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    println!("{} {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
