//! Weighted KNN graphs over skeleton voxels and their minimum spanning trees.

use std::collections::BTreeSet;

use serde::Deserialize;

use super::grid::{DistanceField, VoxelGrid};
use super::SkeletonError;
use crate::geometry::Vec3;
use crate::registry::{parse_params, Registry};

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonVertex {
    pub voxel: [usize; 3],
    pub position: Vec3,
    /// EDT value times the grid resolution (m).
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    pub vertices: Vec<SkeletonVertex>,
    /// Undirected, `a < b`, sorted by `(a, b)`.
    pub edges: Vec<SkeletonEdge>,
    pub resolution: f64,
}

/// Cost of joining two skeleton voxels. Positions and radii are in voxel units.
pub trait EdgeCost: Send + Sync {
    fn name(&self) -> &'static str;
    fn weight(&self, pi: &Vec3, ri: f64, pj: &Vec3, rj: f64) -> f64;
}

/// `d / ((min(ri, rj) + eps)^beta * (1 + gamma * |dz| / d))`: cheap between
/// thick voxels and along vertical runs.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThickVertical {
    pub eps: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ThickVertical {
    fn default() -> Self {
        Self {
            eps: 0.5,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl EdgeCost for ThickVertical {
    fn name(&self) -> &'static str {
        "thick-vertical"
    }

    fn weight(&self, pi: &Vec3, ri: f64, pj: &Vec3, rj: f64) -> f64 {
        let d = (pj - pi).norm();
        if d == 0.0 {
            return 0.0;
        }
        let thick = (ri.min(rj) + self.eps).powf(self.beta);
        let vertical = 1.0 + self.gamma * (pj.z - pi.z).abs() / d;
        d / (thick * vertical)
    }
}

/// Plain Euclidean length.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl EdgeCost for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn weight(&self, pi: &Vec3, _ri: f64, pj: &Vec3, _rj: f64) -> f64 {
        (pj - pi).norm()
    }
}

pub fn edge_cost_registry() -> Registry<dyn EdgeCost> {
    let mut r: Registry<dyn EdgeCost> = Registry::new("edge cost");
    r.register("thick-vertical", |p| {
        let c: ThickVertical = parse_params(p)?;
        if !(c.eps >= 0.0 && c.beta >= 0.0 && c.gamma >= 0.0) {
            return Err("eps, beta and gamma must be >= 0".into());
        }
        Ok(Box::new(c))
    })
    .expect("fresh registry");
    r.register("euclidean", |p| {
        let _: EmptyParams = parse_params(p)?;
        Ok(Box::new(Euclidean))
    })
    .expect("fresh registry");
    r
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyParams {}

/// One vertex per skeleton voxel (index order) joined to its `k` nearest
/// neighbours; distance ties go to the lower vertex index.
pub fn build_graph(skel: &VoxelGrid, dist: &DistanceField, k: usize, cost: &dyn EdgeCost) -> Result<SkeletonGraph, SkeletonError> {
    if k < 2 {
        return Err(SkeletonError::InvalidParameter(format!("KNN k must be >= 2, got {k}")));
    }
    if dist.dims() != skel.dims() {
        return Err(SkeletonError::InvalidParameter("distance field does not match skeleton grid".into()));
    }
    let occupied = skel.occupied_indices();
    if occupied.is_empty() {
        return Err(SkeletonError::EmptySkeleton);
    }
    let res = skel.resolution();
    let lattice: Vec<Vec3> = occupied
        .iter()
        .map(|&i| {
            let c = skel.coords(i);
            Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)
        })
        .collect();
    let radii_vox: Vec<f64> = occupied.iter().map(|&i| dist.at_index(i)).collect();
    let vertices: Vec<SkeletonVertex> = occupied
        .iter()
        .zip(&radii_vox)
        .map(|(&i, &r)| {
            let voxel = skel.coords(i);
            SkeletonVertex {
                voxel,
                position: skel.center(voxel),
                radius: r * res,
            }
        })
        .collect();

    let n = vertices.len();
    let mut pairs = BTreeSet::new();
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| ((lattice[j] - lattice[i]).norm_squared(), j)));
        let take = k.min(cand.len());
        if take == 0 {
            continue;
        }
        cand.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &cand[..take] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| SkeletonEdge {
            a,
            b,
            weight: cost.weight(&lattice[a], radii_vox[a], &lattice[b], radii_vox[b]),
        })
        .collect();
    Ok(SkeletonGraph {
        vertices,
        edges,
        resolution: res,
    })
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal's minimum spanning forest on `n` vertices. Returns the chosen edge
/// indices; ties are broken by `(weight, min id, max id)`.
pub fn spanning_forest(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let key = |e: &(usize, usize, f64)| (e.0.min(e.1), e.0.max(e.1));
    order.sort_by(|&x, &y| {
        edges[x]
            .2
            .total_cmp(&edges[y].2)
            .then_with(|| key(&edges[x]).cmp(&key(&edges[y])))
            .then(x.cmp(&y))
    });
    let mut ds = DisjointSet::new(n);
    order
        .into_iter()
        .filter(|&e| edges[e].0 != edges[e].1 && ds.union(edges[e].0, edges[e].1))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MstOutcome {
    pub tree: SkeletonGraph,
    /// Connected components of the input graph; above 1 only the largest was kept.
    pub components: usize,
}

/// Minimum spanning tree. On a disconnected graph the tree of the largest
/// component (ties: lowest vertex id) is returned with vertices renumbered in
/// their original order.
pub fn mst(graph: &SkeletonGraph) -> Result<MstOutcome, SkeletonError> {
    let n = graph.vertices.len();
    if n == 0 {
        return Err(SkeletonError::EmptySkeleton);
    }
    let raw: Vec<(usize, usize, f64)> = graph.edges.iter().map(|e| (e.a, e.b, e.weight)).collect();
    let chosen = spanning_forest(n, &raw);

    let mut ds = DisjointSet::new(n);
    for &e in &chosen {
        ds.union(raw[e].0, raw[e].1);
    }
    let roots: Vec<usize> = (0..n).map(|v| ds.find(v)).collect();
    let mut size = vec![0usize; n];
    for &r in &roots {
        size[r] += 1;
    }
    let components = size.iter().filter(|&&s| s > 0).count();
    // first vertex of the biggest component wins ties
    let keep_root = roots[(0..n).max_by(|&a, &b| size[roots[a]].cmp(&size[roots[b]]).then(b.cmp(&a))).unwrap()];
    if components > 1 {
        log::warn!(
            "skeleton graph has {components} components; keeping the largest ({} of {n} vertices)",
            size[keep_root]
        );
    }
    let mut new_id = vec![usize::MAX; n];
    let mut vertices = Vec::new();
    for v in 0..n {
        if roots[v] == keep_root {
            new_id[v] = vertices.len();
            vertices.push(graph.vertices[v].clone());
        }
    }
    let mut edges: Vec<SkeletonEdge> = chosen
        .iter()
        .filter(|&&e| roots[raw[e].0] == keep_root)
        .map(|&e| {
            let (a, b) = (new_id[raw[e].0], new_id[raw[e].1]);
            SkeletonEdge {
                a: a.min(b),
                b: a.max(b),
                weight: raw[e].2,
            }
        })
        .collect();
    edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
    Ok(MstOutcome {
        tree: SkeletonGraph {
            vertices,
            edges,
            resolution: graph.resolution,
        },
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::StrategySpec;

    fn line_grid(n: usize) -> (VoxelGrid, DistanceField) {
        let mut g = VoxelGrid::empty(Vec3::zeros(), 0.01, [3, 3, n + 2]);
        for z in 1..=n {
            g.set(1, 1, z, true);
        }
        let d = super::super::edt(&g);
        (g, d)
    }

    #[test]
    fn two_voxels_give_one_edge() {
        let (g, d) = line_grid(2);
        let graph = build_graph(&g, &d, 2, &ThickVertical::default()).unwrap();
        assert_eq!(graph.vertices.len(), 2);
        assert_eq!(graph.edges.len(), 1);
    }

    #[test]
    fn thickness_halves_weight() {
        let c = ThickVertical {
            eps: 0.0,
            beta: 1.0,
            gamma: 0.0,
        };
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        let thick = c.weight(&a, 2.0, &b, 2.0);
        let thin = c.weight(&a, 1.0, &b, 1.0);
        assert!((thick - 0.5 * thin).abs() < 1e-15);
    }

    #[test]
    fn vertical_halves_weight() {
        let c = ThickVertical::default();
        let o = Vec3::zeros();
        let v = c.weight(&o, 1.0, &Vec3::z(), 1.0);
        let h = c.weight(&o, 1.0, &Vec3::x(), 1.0);
        assert!((v - h / 2.0).abs() < 1e-15);
    }

    #[test]
    fn registry_builds_costs() {
        let r = edge_cost_registry();
        assert_eq!(r.build_named("euclidean").unwrap().name(), "euclidean");
        let spec = StrategySpec::with_params("thick-vertical", serde_json::json!({"beta": 2.0}));
        let c = r.build(&spec).unwrap();
        assert_eq!(c.name(), "thick-vertical");
        let spec = StrategySpec::with_params("thick-vertical", serde_json::json!({"gamma": -1.0}));
        assert!(r.build(&spec).is_err());
    }

    fn toy(edges: &[(usize, usize, f64)], n: usize) -> SkeletonGraph {
        SkeletonGraph {
            vertices: (0..n)
                .map(|i| SkeletonVertex {
                    voxel: [i, 0, 0],
                    position: Vec3::new(i as f64, 0.0, 0.0),
                    radius: 1.0,
                })
                .collect(),
            edges: edges.iter().map(|&(a, b, weight)| SkeletonEdge { a, b, weight }).collect(),
            resolution: 1.0,
        }
    }

    #[test]
    fn triangle_drops_heaviest() {
        let g = toy(&[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)], 3);
        let t = mst(&g).unwrap();
        let w: Vec<f64> = t.tree.edges.iter().map(|e| e.weight).collect();
        assert_eq!(w, vec![1.0, 2.0]);
        assert_eq!(t.components, 1);
    }

    #[test]
    fn path_is_unchanged() {
        let g = toy(&[(0, 1, 5.0), (1, 2, 1.0), (2, 3, 2.0)], 4);
        assert_eq!(mst(&g).unwrap().tree, g);
    }

    #[test]
    fn disconnected_keeps_largest() {
        let g = toy(&[(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0)], 5);
        let t = mst(&g).unwrap();
        assert_eq!(t.components, 2);
        assert_eq!(t.tree.vertices.len(), 3);
        assert_eq!(t.tree.vertices[0].voxel, [2, 0, 0]);
        assert_eq!(t.tree.edges.len(), 2);
    }
}
