//! Collapsing a spanning tree to junctions, endpoints and polyline segments.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::SkeletonGraph;
use super::SkeletonError;
use crate::files::{self, FileError};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonNode {
    pub id: usize,
    pub xyz_m: [f64; 3],
    pub radius_m: f64,
}

impl SkeletonNode {
    pub fn position(&self) -> Vec3 {
        Vec3::from(self.xyz_m)
    }
}

/// A chain between two nodes, oriented away from the root (`a` is the parent side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSegment {
    pub a: usize,
    pub b: usize,
    pub polyline: Vec<[f64; 3]>,
    pub length_m: f64,
    pub mean_radius_m: f64,
    pub dz_m: f64,
}

impl SkeletonSegment {
    pub fn points(&self) -> Vec<Vec3> {
        self.polyline.iter().map(|&p| Vec3::from(p)).collect()
    }

    /// Straight line from the first to the last polyline point.
    pub fn chord(&self) -> Vec3 {
        let first = Vec3::from(self.polyline[0]);
        let last = Vec3::from(*self.polyline.last().expect("non-empty polyline"));
        last - first
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplifiedSkeleton {
    pub nodes: Vec<SkeletonNode>,
    pub segments: Vec<SkeletonSegment>,
    pub root: usize,
}

impl SimplifiedSkeleton {
    /// Structural checks for skeletons read from disk.
    pub fn validate(&self) -> Result<(), SkeletonError> {
        let bad = |m: String| Err(SkeletonError::NotATree(m));
        if self.nodes.is_empty() {
            return Err(SkeletonError::EmptySkeleton);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node at position {i} has id {}", n.id));
            }
            if !n.xyz_m.iter().all(|c| c.is_finite()) || !(n.radius_m >= 0.0) {
                return bad(format!("node {i} has non-finite position or negative radius"));
            }
        }
        if self.root >= self.nodes.len() {
            return bad(format!("root {} out of range", self.root));
        }
        if self.segments.len() + 1 != self.nodes.len() {
            return bad(format!("{} nodes but {} segments", self.nodes.len(), self.segments.len()));
        }
        let mut has_parent = vec![false; self.nodes.len()];
        for (k, s) in self.segments.iter().enumerate() {
            if s.a >= self.nodes.len() || s.b >= self.nodes.len() || s.a == s.b {
                return bad(format!("segment {k} has invalid endpoints ({}, {})", s.a, s.b));
            }
            if s.b == self.root || has_parent[s.b] {
                return bad(format!("node {} has more than one parent", s.b));
            }
            has_parent[s.b] = true;
            if s.polyline.len() < 2 || s.polyline.iter().flatten().any(|c| !c.is_finite()) {
                return bad(format!("segment {k} needs a finite polyline of at least 2 points"));
            }
            if !(s.length_m.is_finite() && s.length_m >= 0.0 && s.mean_radius_m.is_finite()) {
                return bad(format!("segment {k} has invalid length or radius"));
            }
        }
        // every node reaches the root through parents
        let mut parent = vec![usize::MAX; self.nodes.len()];
        for s in &self.segments {
            parent[s.b] = s.a;
        }
        for start in 0..self.nodes.len() {
            let mut v = start;
            let mut hops = 0;
            while v != self.root {
                v = parent[v];
                hops += 1;
                if v == usize::MAX || hops > self.nodes.len() {
                    return bad(format!("node {start} is not connected to the root"));
                }
            }
        }
        Ok(())
    }

    pub fn root_node(&self) -> &SkeletonNode {
        &self.nodes[self.root]
    }

    /// Segment indices grouped by their parent node.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (k, s) in self.segments.iter().enumerate() {
            out[s.a].push(k);
        }
        out
    }

    /// Segment ending at each node (None for the root).
    pub fn parent_segment(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.nodes.len()];
        for (k, s) in self.segments.iter().enumerate() {
            out[s.b] = Some(k);
        }
        out
    }

    /// Number of segments touching each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for s in &self.segments {
            deg[s.a] += 1;
            deg[s.b] += 1;
        }
        deg
    }

    /// Leaf nodes in ascending id order.
    pub fn leaves(&self) -> Vec<usize> {
        let children = self.children();
        (0..self.nodes.len())
            .filter(|&v| v != self.root && children[v].is_empty())
            .collect()
    }

    /// Segment ids from the root down to `node`.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let parent = self.parent_segment();
        let mut path = Vec::new();
        let mut v = node;
        while let Some(k) = parent[v] {
            path.push(k);
            v = self.segments[k].a;
        }
        path.reverse();
        path
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }

    pub fn to_json(&self) -> String {
        files::to_json_string(self)
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        files::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let s: SimplifiedSkeleton = files::read_json(path)?;
        s.validate().map_err(|e| FileError::format(path, e.to_string()))?;
        Ok(s)
    }
}

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Collapses every degree-2 chain of `tree` into one segment.
///
/// The root is the vertex with the lowest z (ties: lower x, then lower y); node
/// ids follow breadth-first order from the root, children visited by
/// ascending vertex id.
pub fn simplify(tree: &SkeletonGraph) -> Result<SimplifiedSkeleton, SkeletonError> {
    let n = tree.vertices.len();
    if n == 0 {
        return Err(SkeletonError::EmptySkeleton);
    }
    if tree.edges.len() + 1 != n {
        return Err(SkeletonError::NotATree(format!("{n} vertices but {} edges", tree.edges.len())));
    }
    let mut adj = vec![Vec::new(); n];
    for e in &tree.edges {
        if e.a == e.b || e.a >= n || e.b >= n {
            return Err(SkeletonError::NotATree(format!("bad edge ({}, {})", e.a, e.b)));
        }
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    let root_v = (0..n)
        .min_by(|&i, &j| {
            let (p, q) = (&tree.vertices[i].position, &tree.vertices[j].position);
            p.z.total_cmp(&q.z).then(p.x.total_cmp(&q.x)).then(p.y.total_cmp(&q.y)).then(i.cmp(&j))
        })
        .expect("non-empty");

    let pos = |v: usize| tree.vertices[v].position;
    let mut nodes = vec![SkeletonNode {
        id: 0,
        xyz_m: pos(root_v).into(),
        radius_m: tree.vertices[root_v].radius,
    }];
    let mut segments = Vec::new();
    let mut visited = vec![false; n];
    visited[root_v] = true;
    let mut queue = VecDeque::from([(root_v, 0usize)]);
    while let Some((v, node_id)) = queue.pop_front() {
        for &first in &adj[v] {
            if visited[first] {
                continue;
            }
            let mut chain = vec![v, first];
            visited[first] = true;
            let mut cur = first;
            while adj[cur].len() == 2 {
                let next = adj[cur].iter().copied().find(|&w| !visited[w]);
                match next {
                    Some(w) => {
                        visited[w] = true;
                        chain.push(w);
                        cur = w;
                    }
                    None => return Err(SkeletonError::NotATree("cycle detected".into())),
                }
            }
            let end_id = nodes.len();
            nodes.push(SkeletonNode {
                id: end_id,
                xyz_m: pos(cur).into(),
                radius_m: tree.vertices[cur].radius,
            });
            let pts: Vec<Vec3> = chain.iter().map(|&w| pos(w)).collect();
            let mean_radius = chain.iter().map(|&w| tree.vertices[w].radius).sum::<f64>() / chain.len() as f64;
            segments.push(SkeletonSegment {
                a: node_id,
                b: end_id,
                length_m: polyline_length(&pts),
                mean_radius_m: mean_radius,
                dz_m: pts[pts.len() - 1].z - pts[0].z,
                polyline: pts.iter().map(|&p| p.into()).collect(),
            });
            queue.push_back((cur, end_id));
        }
    }
    if visited.iter().any(|&v| !v) {
        return Err(SkeletonError::NotATree("tree is disconnected".into()));
    }
    Ok(SimplifiedSkeleton {
        nodes,
        segments,
        root: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::graph::{SkeletonEdge, SkeletonVertex};

    fn tree(points: &[[f64; 3]], edges: &[(usize, usize)]) -> SkeletonGraph {
        SkeletonGraph {
            vertices: points
                .iter()
                .enumerate()
                .map(|(i, p)| SkeletonVertex {
                    voxel: [i, 0, 0],
                    position: Vec3::from(*p),
                    radius: 0.001 * (i + 1) as f64,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(a, b)| SkeletonEdge {
                    a: a.min(b),
                    b: a.max(b),
                    weight: 1.0,
                })
                .collect(),
            resolution: 0.01,
        }
    }

    #[test]
    fn straight_chain_is_one_segment() {
        let r = 0.01;
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [0.0, 0.0, i as f64 * r]).collect();
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
        let s = simplify(&tree(&pts, &edges)).unwrap();
        assert_eq!(s.nodes.len(), 2);
        assert_eq!(s.segments.len(), 1);
        assert!((s.segments[0].length_m - 9.0 * r).abs() < 1e-12);
        assert!((s.segments[0].dz_m - 9.0 * r).abs() < 1e-12);
        s.validate().unwrap();
    }

    #[test]
    fn y_shape_has_one_junction() {
        let pts = [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 2.0],
            [-1.0, 0.0, 3.0],
            [1.0, 0.0, 3.0],
            [-2.0, 0.0, 4.0],
        ];
        let s = simplify(&tree(&pts, &[(0, 1), (1, 2), (2, 3), (2, 4), (3, 5)])).unwrap();
        assert_eq!(s.segments.len(), 3);
        let deg = s.degrees();
        assert_eq!(deg.iter().filter(|&&d| d == 3).count(), 1);
        assert_eq!(deg.iter().filter(|&&d| d == 1).count(), 3);
        assert_eq!(s.root_node().xyz_m, [0.0, 0.0, 0.0]);
        let total: f64 = 2.0 + 2f64.sqrt() * 2.0 + 2f64.sqrt();
        assert!((s.total_length() - total).abs() < 1e-9);
    }

    #[test]
    fn single_vertex() {
        let s = simplify(&tree(&[[0.0, 0.0, 0.0]], &[])).unwrap();
        assert_eq!(s.nodes.len(), 1);
        assert!(s.segments.is_empty());
    }

    #[test]
    fn middle_root_keeps_degree_two() {
        // V shape whose lowest point is in the middle of the chain
        let pts = [[-1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]];
        let s = simplify(&tree(&pts, &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.degrees()[s.root], 2);
    }

    #[test]
    fn json_round_trip() {
        let pts = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 2.0], [-1.0, 0.0, 2.0]];
        let s = simplify(&tree(&pts, &[(0, 1), (1, 2), (1, 3)])).unwrap();
        let back: SimplifiedSkeleton = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back, s);
        back.validate().unwrap();
    }

    #[test]
    fn paths_and_leaves() {
        let pts = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 2.0], [-1.0, 0.0, 2.0]];
        let s = simplify(&tree(&pts, &[(0, 1), (1, 2), (1, 3)])).unwrap();
        let leaves = s.leaves();
        assert_eq!(leaves.len(), 2);
        for leaf in leaves {
            let p = s.path_to(leaf);
            assert_eq!(p.len(), 2);
            assert_eq!(s.segments[p[0]].a, s.root);
        }
    }
}
