//! Rod networks: rest geometry, springs, lumped masses and reference frames.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kinematics::{pair_curvatures, transport, LocalFrame};
use super::DerError;
use crate::files::{self, FileError};
use crate::geometry::{any_perpendicular, Vec3};
use crate::skeleton::SimplifiedSkeleton;

/// Shortest admissible rest edge.
pub const MIN_EDGE_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    #[serde(rename = "E_pa")]
    pub young_modulus: f64,
    #[serde(rename = "rho_kgm3")]
    pub density: f64,
    /// Mass-proportional viscous damping coefficient (1/s).
    pub damping: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            young_modulus: 1e9,
            density: 900.0,
            damping: 0.5,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), DerError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.young_modulus) && ok(self.density) && ok(self.damping)) {
            return Err(DerError::InvalidNetwork(format!("material parameters must be positive and finite: {self:?}")));
        }
        Ok(())
    }

    pub fn area(radius: f64) -> f64 {
        std::f64::consts::PI * radius * radius
    }

    pub fn second_moment(radius: f64) -> f64 {
        std::f64::consts::PI * radius.powi(4) / 4.0
    }

    pub fn axial_stiffness(&self, radius: f64) -> f64 {
        self.young_modulus * Self::area(radius)
    }

    pub fn bending_stiffness(&self, radius: f64) -> f64 {
        self.young_modulus * Self::second_moment(radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodEdge {
    pub a: usize,
    pub b: usize,
    pub radius_m: f64,
}

/// Serialized form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<[f64; 3]>,
    pub edges: Vec<RodEdge>,
    pub material: MaterialParams,
}

/// Reference tangent and directors of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub tangent: Vec3,
    pub m1: Vec3,
    pub m2: Vec3,
}

impl EdgeFrame {
    pub fn new(tangent: Vec3, m1: Vec3) -> Self {
        Self {
            tangent,
            m1,
            m2: tangent.cross(&m1),
        }
    }

    /// Frame as seen by a spring that traverses the edge with the given sign.
    pub fn local(&self, sign: f64) -> LocalFrame {
        LocalFrame {
            a: self.tangent * sign,
            m_ref: self.m1,
        }
    }

    /// Carries the frame onto a new edge direction and re-orthonormalizes it.
    pub fn transported(&self, edge: &Vec3) -> EdgeFrame {
        let t = edge.normalize();
        let moved = if 1.0 + self.tangent.dot(&t) > 1e-12 {
            transport(&self.m1, &self.tangent, &t)
        } else {
            self.m1
        };
        let m1 = moved - t * moved.dot(&t);
        let m1 = if m1.norm() > 1e-12 { m1.normalize() } else { any_perpendicular(&t) };
        EdgeFrame::new(t, m1)
    }
}

/// A bend spring at `center` between edges `edges[0]` (arriving from `ends[0]`)
/// and `edges[1]` (leaving towards `ends[1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct BendSpring {
    pub center: usize,
    pub ends: [usize; 2],
    pub edges: [usize; 2],
    /// +1 when the network edge points the same way as the local traversal.
    pub signs: [f64; 2],
    pub rest_kappa: [f64; 2],
    pub voronoi_length: f64,
    pub bending_stiffness: f64,
}

impl BendSpring {
    pub fn local_frames(&self, frames: &[EdgeFrame]) -> [LocalFrame; 2] {
        [frames[self.edges[0]].local(self.signs[0]), frames[self.edges[1]].local(self.signs[1])]
    }
}

#[derive(Debug, Clone)]
pub struct RodNetwork {
    nodes: Vec<Vec3>,
    edges: Vec<RodEdge>,
    material: MaterialParams,
    rest_edges: Vec<Vec3>,
    springs: Vec<BendSpring>,
    masses: Vec<f64>,
    rest_frames: Vec<EdgeFrame>,
    incident: Vec<Vec<usize>>,
}

/// Correspondence between skeleton nodes and network nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonRodMap {
    /// Network node of every skeleton node.
    pub node_of: Vec<usize>,
    /// Network nodes along every skeleton segment, from `a` to `b`.
    pub segment_nodes: Vec<Vec<usize>>,
}

impl RodNetwork {
    pub fn new(nodes: Vec<Vec3>, edges: Vec<RodEdge>, material: MaterialParams) -> Result<Self, DerError> {
        material.validate()?;
        let n = nodes.len();
        if n < 2 || edges.is_empty() {
            return Err(DerError::InvalidNetwork("a network needs at least two nodes and one edge".into()));
        }
        if nodes.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(DerError::InvalidNetwork("node coordinates must be finite".into()));
        }
        let mut seen = BTreeSet::new();
        let mut incident = vec![Vec::new(); n];
        let mut rest_edges = Vec::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(DerError::InvalidNetwork(format!("edge {k} has invalid endpoints ({}, {})", e.a, e.b)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(DerError::InvalidNetwork(format!("edge {k} duplicates an earlier edge")));
            }
            if !(e.radius_m.is_finite() && e.radius_m > 0.0) {
                return Err(DerError::InvalidNetwork(format!("edge {k} radius must be positive")));
            }
            let v = nodes[e.b] - nodes[e.a];
            if v.norm() < MIN_EDGE_LENGTH {
                return Err(DerError::DegenerateSegment { edge: k, length: v.norm() });
            }
            rest_edges.push(v);
            incident[e.a].push(k);
            incident[e.b].push(k);
        }
        let mut reached = vec![false; n];
        reached[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &k in &incident[u] {
                let w = if edges[k].a == u { edges[k].b } else { edges[k].a };
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(lost) = reached.iter().position(|r| !r) {
            return Err(DerError::InvalidNetwork(format!("node {lost} is not connected to node 0")));
        }

        let mut masses = vec![0.0; n];
        for (e, v) in edges.iter().zip(&rest_edges) {
            let half = 0.5 * material.density * MaterialParams::area(e.radius_m) * v.norm();
            masses[e.a] += half;
            masses[e.b] += half;
        }

        let rest_frames = space_parallel_frames(&edges, &rest_edges, &incident);

        let mut springs = Vec::new();
        for c in 0..n {
            let inc = &incident[c];
            for x in 0..inc.len() {
                for y in x + 1..inc.len() {
                    let (i, j) = (inc[x], inc[y]);
                    let a = if edges[i].a == c { edges[i].b } else { edges[i].a };
                    let b = if edges[j].a == c { edges[j].b } else { edges[j].a };
                    let signs = [if edges[i].b == c { 1.0 } else { -1.0 }, if edges[j].a == c { 1.0 } else { -1.0 }];
                    let ei = nodes[c] - nodes[a];
                    let ej = nodes[b] - nodes[c];
                    let spring_index = springs.len();
                    let fi = rest_frames[i].local(signs[0]);
                    let fj = rest_frames[j].local(signs[1]);
                    let (k1, k2) = pair_curvatures(&ei, &ej, &fi, &fj)
                        .map_err(|_| DerError::AntiparallelEdges { spring: Some(spring_index) })?;
                    springs.push(BendSpring {
                        center: c,
                        ends: [a, b],
                        edges: [i, j],
                        signs,
                        rest_kappa: [k1, k2],
                        voronoi_length: 0.5 * (rest_edges[i].norm() + rest_edges[j].norm()),
                        bending_stiffness: 0.5
                            * (material.bending_stiffness(edges[i].radius_m) + material.bending_stiffness(edges[j].radius_m)),
                    });
                }
            }
        }

        Ok(Self {
            nodes,
            edges,
            material,
            rest_edges,
            springs,
            masses,
            rest_frames,
            incident,
        })
    }

    /// A straight rod from `start` to `end` with `n_edges` equal edges.
    pub fn straight(start: Vec3, end: Vec3, n_edges: usize, radius: f64, material: MaterialParams) -> Result<Self, DerError> {
        if n_edges == 0 {
            return Err(DerError::InvalidNetwork("a rod needs at least one edge".into()));
        }
        let nodes = (0..=n_edges).map(|k| start + (end - start) * (k as f64 / n_edges as f64)).collect();
        let edges = (0..n_edges).map(|k| RodEdge { a: k, b: k + 1, radius_m: radius }).collect();
        Self::new(nodes, edges, material)
    }

    /// A clamped cantilever of free length `length` along `axis` from the origin.
    ///
    /// Node `i` sits at arc length `(i − 0.5)·l` with `l = length/(n_nodes − 1.5)`,
    /// so clamping nodes 0 and 1 puts the effective clamp at the origin and the tip at `length`.
    pub fn cantilever(length: f64, n_nodes: usize, radius: f64, axis: Vec3, material: MaterialParams) -> Result<Self, DerError> {
        if n_nodes < 3 {
            return Err(DerError::InvalidNetwork("a cantilever needs at least three nodes".into()));
        }
        let axis = axis.normalize();
        let l = length / (n_nodes as f64 - 1.5);
        let nodes = (0..n_nodes).map(|i| axis * ((i as f64 - 0.5) * l)).collect();
        let edges = (0..n_nodes - 1).map(|k| RodEdge { a: k, b: k + 1, radius_m: radius }).collect();
        Self::new(nodes, edges, material)
    }

    pub fn from_skeleton(skel: &SimplifiedSkeleton, material: MaterialParams, max_edge_len: f64) -> Result<Self, DerError> {
        Ok(Self::from_skeleton_mapped(skel, material, max_edge_len)?.0)
    }

    /// Resamples every skeleton segment into edges no longer than `max_edge_len`.
    ///
    /// Network nodes are numbered depth-first from the skeleton root, so node 0 is the root.
    pub fn from_skeleton_mapped(
        skel: &SimplifiedSkeleton,
        material: MaterialParams,
        max_edge_len: f64,
    ) -> Result<(Self, SkeletonRodMap), DerError> {
        if !(max_edge_len.is_finite() && max_edge_len > 0.0) {
            return Err(DerError::InvalidNetwork("max_edge_len must be positive".into()));
        }
        skel.validate().map_err(|e| DerError::InvalidNetwork(e.to_string()))?;
        let children = skel.children();
        let mut node_of = vec![usize::MAX; skel.nodes.len()];
        let mut segment_nodes = vec![Vec::new(); skel.segments.len()];
        let mut nodes = vec![skel.nodes[skel.root].position()];
        let mut edges = Vec::new();
        node_of[skel.root] = 0;
        let mut stack: Vec<usize> = children[skel.root].iter().rev().copied().collect();
        while let Some(s) = stack.pop() {
            let seg = &skel.segments[s];
            let mut pts = seg.points();
            let last = pts.len() - 1;
            pts[0] = skel.nodes[seg.a].position();
            pts[last] = skel.nodes[seg.b].position();
            let mut chain = vec![node_of[seg.a]];
            for p in resample(&pts, max_edge_len).into_iter().skip(1) {
                nodes.push(p);
                chain.push(nodes.len() - 1);
            }
            for w in chain.windows(2) {
                edges.push(RodEdge {
                    a: w[0],
                    b: w[1],
                    radius_m: seg.mean_radius_m,
                });
            }
            node_of[seg.b] = *chain.last().expect("chain has endpoints");
            segment_nodes[s] = chain;
            stack.extend(children[seg.b].iter().rev());
        }
        let net = Self::new(nodes, edges, material)?;
        Ok((net, SkeletonRodMap { node_of, segment_nodes }))
    }

    pub fn from_file(file: NetworkFile) -> Result<Self, DerError> {
        Self::new(file.nodes.iter().map(|&p| Vec3::from(p)).collect(), file.edges, file.material)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.nodes.iter().map(|p| [p.x, p.y, p.z]).collect(),
            edges: self.edges.clone(),
            material: self.material,
        }
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let file: NetworkFile = files::read_json(path)?;
        Self::from_file(file).map_err(|e| FileError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        files::write_json(path, &self.to_file())
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dof_count(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn edges(&self) -> &[RodEdge] {
        &self.edges
    }

    pub fn material(&self) -> &MaterialParams {
        &self.material
    }

    pub fn rest_edges(&self) -> &[Vec3] {
        &self.rest_edges
    }

    pub fn springs(&self) -> &[BendSpring] {
        &self.springs
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn rest_frames(&self) -> &[EdgeFrame] {
        &self.rest_frames
    }

    pub fn incident_edges(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn neighbours(&self, node: usize) -> Vec<usize> {
        self.incident[node]
            .iter()
            .map(|&k| if self.edges[k].a == node { self.edges[k].b } else { self.edges[k].a })
            .collect()
    }

    /// Hop distance of every node from `start`.
    pub fn hop_distances(&self, start: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for w in self.neighbours(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Path length along edges from `start` to every node.
    pub fn path_distances(&self, start: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        dist[start] = 0.0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &k in &self.incident[u] {
                let w = if self.edges[k].a == u { self.edges[k].b } else { self.edges[k].a };
                if dist[w].is_infinite() {
                    dist[w] = dist[u] + self.rest_edges[k].norm();
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Rest positions stacked as `[x0, y0, z0, x1, …]`.
    pub fn rest_positions(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Network node closest to `p` (lowest index on ties).
    pub fn nearest_node(&self, p: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n - p).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

fn space_parallel_frames(edges: &[RodEdge], rest: &[Vec3], incident: &[Vec<usize>]) -> Vec<EdgeFrame> {
    let mut frames: Vec<Option<EdgeFrame>> = vec![None; edges.len()];
    let mut queue = VecDeque::new();
    for &k in &incident[0] {
        let t = rest[k].normalize();
        frames[k] = Some(EdgeFrame::new(t, any_perpendicular(&t)));
        queue.push_back(k);
    }
    while let Some(k) = queue.pop_front() {
        let parent = frames[k].expect("queued edges have frames");
        for end in [edges[k].a, edges[k].b] {
            for &j in &incident[end] {
                if frames[j].is_none() {
                    frames[j] = Some(parent.transported(&rest[j]));
                    queue.push_back(j);
                }
            }
        }
    }
    frames.into_iter().map(|f| f.expect("network is connected")).collect()
}

/// Points at equal arc-length spacing along a polyline, endpoints included,
/// with spacing no larger than `max_len`.
pub fn resample(points: &[Vec3], max_len: f64) -> Vec<Vec3> {
    let cum: Vec<f64> = std::iter::once(0.0)
        .chain(points.windows(2).scan(0.0, |acc, w| {
            *acc += (w[1] - w[0]).norm();
            Some(*acc)
        }))
        .collect();
    let total = *cum.last().expect("non-empty polyline");
    let pieces = ((total / max_len) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(pieces + 1);
    out.push(points[0]);
    let mut seg = 0;
    for k in 1..pieces {
        let s = total * k as f64 / pieces as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { (s - cum[seg]) / span } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * f);
    }
    out.push(*points.last().expect("non-empty polyline"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{SkeletonNode, SkeletonSegment};

    fn segment(a: usize, b: usize, pa: [f64; 3], pb: [f64; 3], r: f64) -> SkeletonSegment {
        let len = (Vec3::from(pb) - Vec3::from(pa)).norm();
        SkeletonSegment {
            a,
            b,
            polyline: vec![pa, pb],
            length_m: len,
            mean_radius_m: r,
            dz_m: pb[2] - pa[2],
        }
    }

    fn y_skeleton() -> SimplifiedSkeleton {
        let p = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.2], [0.05, 0.0, 0.35], [-0.08, 0.03, 0.3]];
        SimplifiedSkeleton {
            nodes: p
                .iter()
                .enumerate()
                .map(|(id, &xyz_m)| SkeletonNode { id, xyz_m, radius_m: 0.003 })
                .collect(),
            segments: vec![segment(0, 1, p[0], p[1], 0.004), segment(1, 2, p[1], p[2], 0.003), segment(1, 3, p[1], p[3], 0.002)],
            root: 0,
        }
    }

    #[test]
    fn straight_segment_resampling() {
        let p = [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let skel = SimplifiedSkeleton {
            nodes: vec![
                SkeletonNode { id: 0, xyz_m: p[0], radius_m: 0.01 },
                SkeletonNode { id: 1, xyz_m: p[1], radius_m: 0.01 },
            ],
            segments: vec![segment(0, 1, p[0], p[1], 0.01)],
            root: 0,
        };
        let net = RodNetwork::from_skeleton(&skel, MaterialParams::default(), 0.1).unwrap();
        assert_eq!(net.edges().len(), 10);
        assert_eq!(net.node_count(), 11);
        for s in net.springs() {
            assert!(s.rest_kappa[0].abs() < 1e-12 && s.rest_kappa[1].abs() < 1e-12);
        }
    }

    #[test]
    fn junction_gets_all_pairs() {
        let (net, map) = RodNetwork::from_skeleton_mapped(&y_skeleton(), MaterialParams::default(), 0.05).unwrap();
        let joint = map.node_of[1];
        assert_eq!(net.incident_edges(joint).len(), 3);
        assert_eq!(net.springs().iter().filter(|s| s.center == joint).count(), 3);
        let mut pairs: Vec<_> = net
            .springs()
            .iter()
            .filter(|s| s.center == joint)
            .map(|s| (s.edges[0], s.edges[1]))
            .collect();
        pairs.dedup();
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn total_mass_matches_volume() {
        let net = RodNetwork::from_skeleton(&y_skeleton(), MaterialParams::default(), 0.03).unwrap();
        let expected: f64 = net
            .edges()
            .iter()
            .zip(net.rest_edges())
            .map(|(e, v)| 900.0 * MaterialParams::area(e.radius_m) * v.norm())
            .sum();
        assert!((net.total_mass() - expected).abs() < 1e-12);
        assert!(net.masses().iter().all(|&m| m > 0.0));
    }

    #[test]
    fn every_edge_has_a_spring() {
        let net = RodNetwork::from_skeleton(&y_skeleton(), MaterialParams::default(), 0.02).unwrap();
        for k in 0..net.edges().len() {
            assert!(net.springs().iter().any(|s| s.edges.contains(&k)));
        }
    }

    #[test]
    fn root_is_node_zero_and_map_is_consistent() {
        let skel = y_skeleton();
        let (net, map) = RodNetwork::from_skeleton_mapped(&skel, MaterialParams::default(), 0.04).unwrap();
        assert_eq!(map.node_of[skel.root], 0);
        for (sn, &nn) in skel.nodes.iter().zip(&map.node_of) {
            assert!((net.nodes()[nn] - sn.position()).norm() < 1e-15);
        }
        for (s, chain) in skel.segments.iter().zip(&map.segment_nodes) {
            assert_eq!(chain[0], map.node_of[s.a]);
            assert_eq!(*chain.last().unwrap(), map.node_of[s.b]);
        }
    }

    #[test]
    fn rest_frames_are_orthonormal() {
        let net = RodNetwork::from_skeleton(&y_skeleton(), MaterialParams::default(), 0.02).unwrap();
        for (f, e) in net.rest_frames().iter().zip(net.rest_edges()) {
            let t = e.normalize();
            assert!((f.tangent - t).norm() < 1e-12);
            assert!(f.m1.dot(&t).abs() < 1e-12 && (f.m1.norm() - 1.0).abs() < 1e-12);
            assert!(f.m2.dot(&f.m1).abs() < 1e-12 && (f.m2.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_edge_rejected() {
        let nodes = vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 1e-7)];
        let err = RodNetwork::new(nodes, vec![RodEdge { a: 0, b: 1, radius_m: 0.01 }], MaterialParams::default()).unwrap_err();
        assert!(matches!(err, DerError::DegenerateSegment { .. }));
    }

    #[test]
    fn disconnected_rejected() {
        let nodes = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let edges = vec![RodEdge { a: 0, b: 1, radius_m: 0.01 }, RodEdge { a: 2, b: 3, radius_m: 0.01 }];
        assert!(matches!(RodNetwork::new(nodes, edges, MaterialParams::default()), Err(DerError::InvalidNetwork(_))));
    }

    #[test]
    fn json_round_trip() {
        let net = RodNetwork::from_skeleton(&y_skeleton(), MaterialParams::default(), 0.05).unwrap();
        let text = crate::files::to_json_string(&net.to_file());
        let back: NetworkFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net.to_file());
        assert!(text.contains("\"E_pa\""));
    }

    #[test]
    fn cantilever_layout() {
        let net = RodNetwork::cantilever(0.4, 50, 0.003, Vec3::x(), MaterialParams::default()).unwrap();
        let l = 0.4 / 48.5;
        assert!((net.nodes()[0].x + 0.5 * l).abs() < 1e-15);
        assert!((net.nodes()[49].x - 0.4).abs() < 1e-12);
    }

    #[test]
    fn resample_keeps_endpoints_and_spacing() {
        let pts = vec![Vec3::zeros(), Vec3::new(0.0, 0.0, 0.3), Vec3::new(0.2, 0.0, 0.3)];
        let out = resample(&pts, 0.07);
        assert_eq!(out[0], pts[0]);
        assert_eq!(*out.last().unwrap(), pts[2]);
        assert_eq!(out.len(), 9);
        for w in out.windows(2) {
            assert!((w[1] - w[0]).norm() <= 0.07 + 1e-12);
        }
    }
}
