//! kd-tree nearest-neighbor index over point positions.
//!
//! Query contract: `query(i, k)` returns exactly `min(k, N)` indices sorted
//! by non-decreasing Euclidean distance, with the queried point itself first
//! and remaining distance ties broken by lower point index. The index is
//! immutable after construction and safe to share across threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::PointCloud;

#[derive(Debug, Clone)]
struct Node {
    /// point index at this node
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
pub struct KnnIndex {
    positions: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    root: i32,
}

/// Heap entry ordered worst-first: greater distance, then less-preferred rank.
#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    rank: u64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .partial_cmp(&other.dist2)
            .unwrap()
            .then(self.rank.cmp(&other.rank))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KnnIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_positions(cloud.positions.clone())
    }

    pub fn from_positions(positions: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::with_capacity(positions.len());
        let root = Self::build_rec(&positions, &mut order, 0, &mut nodes);
        KnnIndex {
            positions,
            nodes,
            root,
        }
    }

    fn build_rec(
        positions: &[[f64; 3]],
        slots: &mut [u32],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> i32 {
        if slots.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = slots.len() / 2;
        // total order (coordinate, index) keeps the split deterministic
        slots.select_nth_unstable_by(mid, |&a, &b| {
            positions[a as usize][axis as usize]
                .partial_cmp(&positions[b as usize][axis as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        let point = slots[mid];
        let id = nodes.len() as i32;
        nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = slots.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(positions, lo, depth + 1, nodes);
        let right = Self::build_rec(positions, hi, depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest useful `k` (every point of the cloud).
    pub fn max_neighbors(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.positions[i]
    }

    /// k nearest neighbors of point `i`, the point itself first.
    pub fn query(&self, i: usize, k: usize) -> Vec<usize> {
        self.search(self.positions[i], k, Some(i))
            .into_iter()
            .map(|(idx, _)| idx)
            .collect()
    }

    /// k nearest neighbors of an arbitrary position as (index, distance).
    pub fn query_position(&self, p: [f64; 3], k: usize) -> Vec<(usize, f64)> {
        self.search(p, k, None)
            .into_iter()
            .map(|(idx, d2)| (idx, d2.sqrt()))
            .collect()
    }

    /// Distance from `p` to the closest indexed point.
    pub fn nearest_distance(&self, p: [f64; 3]) -> f64 {
        self.query_position(p, 1)
            .first()
            .map(|&(_, d)| d)
            .unwrap_or(f64::INFINITY)
    }

    fn search(&self, target: [f64; 3], k: usize, favored: Option<usize>) -> Vec<(usize, f64)> {
        let k = k.min(self.positions.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search_rec(self.root, target, k, favored, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.idx as usize, c.dist2))
            .collect()
    }

    fn search_rec(
        &self,
        node_id: i32,
        target: [f64; 3],
        k: usize,
        favored: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if node_id < 0 {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let idx = node.point;
        let d2 = dist2(self.positions[idx as usize], target);
        // rank 0 pins the favored (query) point ahead of coincident duplicates
        let rank = match favored {
            Some(f) if f as u32 == idx => 0,
            _ => idx as u64 + 1,
        };
        let cand = Candidate {
            dist2: d2,
            rank,
            idx,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }

        let axis = node.axis as usize;
        let delta = target[axis] - self.positions[idx as usize][axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search_rec(near, target, k, favored, heap);
        // the far side can still win on a distance tie, so prune strictly
        if heap.len() < k || delta * delta <= heap.peek().unwrap().dist2 {
            self.search_rec(far, target, k, favored, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{generate_scene, SceneSpec};
    use crate::rng::Rng;

    fn cloud_from(positions: Vec<[f64; 3]>) -> PointCloud {
        let n = positions.len();
        PointCloud::new(positions, None, vec![0; n], vec!["c".into()]).unwrap()
    }

    /// Exhaustive O(N^2) reference with the same ordering contract.
    fn brute_knn(positions: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, u64, usize)> = positions
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                let rank = if j == i { 0 } else { j as u64 + 1 };
                (dist2(positions[i], p), rank, j)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.truncate(k.min(positions.len()));
        all.into_iter().map(|(_, _, j)| j).collect()
    }

    #[test]
    fn single_point_cloud() {
        let c = cloud_from(vec![[0.0, 0.0, 0.0]]);
        let idx = KnnIndex::build(&c);
        assert_eq!(idx.query(0, 5), vec![0]);
    }

    #[test]
    fn collinear_points_sorted_by_distance() {
        let c = cloud_from(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let idx = KnnIndex::build(&c);
        assert_eq!(idx.query(0, 2), vec![0, 1]);
        assert_eq!(idx.query(1, 3), vec![1, 0, 2]);
        assert_eq!(idx.query(2, 3), vec![2, 1, 0]);
    }

    #[test]
    fn self_first_even_with_coincident_lower_index() {
        let c = cloud_from(vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]);
        let idx = KnnIndex::build(&c);
        assert_eq!(idx.query(2, 3), vec![2, 0, 1]);
        assert_eq!(idx.query(1, 2), vec![1, 0]);
    }

    #[test]
    fn distance_ties_break_by_lower_index() {
        // points 1 and 2 are both at distance 1 from point 0
        let c = cloud_from(vec![
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [5.0, 0.0, 0.0],
        ]);
        let idx = KnnIndex::build(&c);
        assert_eq!(idx.query(0, 3), vec![0, 1, 2]);
    }

    #[test]
    fn matches_exhaustive_scan_uniform_random() {
        let mut rng = Rng::new(0xBEEF);
        let n = 200;
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(-1.0, 1.0),
                ]
            })
            .collect();
        let c = cloud_from(positions.clone());
        let idx = KnnIndex::build(&c);
        for i in 0..n {
            assert_eq!(idx.query(i, 8), brute_knn(&positions, i, 8), "point {i}");
        }
    }

    #[test]
    fn matches_exhaustive_scan_clustered_scene() {
        let spec = SceneSpec {
            n_classes: 3,
            points_per_class: vec![60, 60, 60],
            cluster_centers: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]],
            cluster_stddev: vec![0.3, 0.3, 0.3],
            overlap_shift: vec![],
            color_means: vec![[0.5; 3]; 3],
            seed: 17,
        };
        let c = generate_scene(&spec).unwrap();
        let idx = KnnIndex::build(&c);
        for i in (0..c.len()).step_by(7) {
            assert_eq!(idx.query(i, 12), brute_knn(&c.positions, i, 12));
        }
    }

    #[test]
    fn query_position_returns_sorted_distances() {
        let c = cloud_from(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        let idx = KnnIndex::build(&c);
        let hits = idx.query_position([0.9, 0.0, 0.0], 3);
        assert_eq!(hits[0].0, 1);
        assert!((hits[0].1 - 0.1).abs() < 1e-12);
        assert!(hits.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn k_clamped_to_cloud_size() {
        let c = cloud_from(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        let idx = KnnIndex::build(&c);
        assert_eq!(idx.query(0, 100).len(), 2);
        assert_eq!(idx.max_neighbors(), 2);
    }
}
