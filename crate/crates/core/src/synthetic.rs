//! Procedural test plants built from capsules, with ground-truth skeletons,
//! sampled clouds and rendered depth views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{CameraIntrinsics, DepthView, PointCloud};
use crate::geometry::{any_perpendicular, point_segment_distance, RigidTransform, Vec3};
use crate::registry::{parse_params, Registry};
use crate::skeleton::{SimplifiedSkeleton, SkeletonNode, SkeletonSegment};

/// A straight capsule from node `a` (parent side) to node `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub a: usize,
    pub b: usize,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlant {
    pub name: String,
    /// Node 0 is the base of the plant.
    pub nodes: Vec<Vec3>,
    pub branches: Vec<Branch>,
    /// Ground-truth main stem as branch indices from the base upwards.
    pub main_stem: Vec<usize>,
}

impl SyntheticPlant {
    pub fn flower_node(&self) -> usize {
        self.branches[*self.main_stem.last().expect("non-empty stem")].b
    }

    /// Straight-segment skeleton of the capsule axes.
    pub fn ground_truth(&self) -> SimplifiedSkeleton {
        SimplifiedSkeleton {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, p)| {
                    let radius_m = self
                        .branches
                        .iter()
                        .filter(|b| b.a == id || b.b == id)
                        .map(|b| b.radius_m)
                        .fold(0.0, f64::max);
                    SkeletonNode {
                        id,
                        xyz_m: (*p).into(),
                        radius_m,
                    }
                })
                .collect(),
            segments: self
                .branches
                .iter()
                .map(|br| {
                    let (pa, pb) = (self.nodes[br.a], self.nodes[br.b]);
                    SkeletonSegment {
                        a: br.a,
                        b: br.b,
                        polyline: vec![pa.into(), pb.into()],
                        length_m: (pb - pa).norm(),
                        mean_radius_m: br.radius_m,
                        dz_m: pb.z - pa.z,
                    }
                })
                .collect(),
            root: 0,
        }
    }

    /// Main-stem axis as a list of straight pieces.
    pub fn main_stem_axis(&self) -> Vec<(Vec3, Vec3)> {
        self.main_stem
            .iter()
            .map(|&k| (self.nodes[self.branches[k].a], self.nodes[self.branches[k].b]))
            .collect()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.branches
            .iter()
            .any(|b| point_segment_distance(p, &self.nodes[b.a], &self.nodes[b.b]) <= b.radius_m)
    }

    /// Index of the branch whose axis is nearest to `p`.
    pub fn nearest_branch(&self, p: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, b) in self.branches.iter().enumerate() {
            let d = point_segment_distance(p, &self.nodes[b.a], &self.nodes[b.b]);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    /// Lattice points with spacing `spacing` that fall inside the plant.
    pub fn volume_cloud(&self, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for (k, br) in self.branches.iter().enumerate() {
            let (pa, pb) = (self.nodes[br.a], self.nodes[br.b]);
            let lo = pa.inf(&pb).add_scalar(-br.radius_m);
            let hi = pa.sup(&pb).add_scalar(br.radius_m);
            let i0 = (lo / spacing).map(|c| c.floor() as i64);
            let i1 = (hi / spacing).map(|c| c.ceil() as i64);
            for iz in i0.z..=i1.z {
                for iy in i0.y..=i1.y {
                    for ix in i0.x..=i1.x {
                        let p = Vec3::new(ix as f64, iy as f64, iz as f64) * spacing;
                        if point_segment_distance(&p, &pa, &pb) > br.radius_m {
                            continue;
                        }
                        let earlier = self.branches[..k]
                            .iter()
                            .any(|o| point_segment_distance(&p, &self.nodes[o.a], &self.nodes[o.b]) <= o.radius_m);
                        if !earlier {
                            pts.push(p);
                        }
                    }
                }
            }
        }
        PointCloud::new(pts).expect("lattice points are finite")
    }

    /// `n` points on the cylindrical surfaces, chosen by area, from a seeded generator.
    pub fn surface_cloud(&self, n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let areas: Vec<f64> = self
            .branches
            .iter()
            .map(|b| b.radius_m * (self.nodes[b.b] - self.nodes[b.a]).norm())
            .collect();
        let total: f64 = areas.iter().sum();
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let mut pick = rng.gen_range(0.0..total);
            let mut k = 0;
            while k + 1 < areas.len() && pick >= areas[k] {
                pick -= areas[k];
                k += 1;
            }
            let br = self.branches[k];
            let (pa, pb) = (self.nodes[br.a], self.nodes[br.b]);
            let axis = (pb - pa).normalize();
            let u = any_perpendicular(&axis);
            let w = axis.cross(&u);
            let s: f64 = rng.gen_range(0.0..1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = pa + (pb - pa) * s + (u * phi.cos() + w * phi.sin()) * br.radius_m;
            let hidden = self
                .branches
                .iter()
                .enumerate()
                .any(|(j, o)| j != k && point_segment_distance(&p, &self.nodes[o.a], &self.nodes[o.b]) < o.radius_m);
            if !hidden {
                pts.push(p);
            }
        }
        PointCloud::new(pts).expect("finite samples")
    }

    /// Distance along a world ray to the first plant surface.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        self.branches
            .iter()
            .filter_map(|b| ray_capsule(origin, dir, &self.nodes[b.a], &self.nodes[b.b], b.radius_m))
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    }

    /// Masked depth image of the plant seen from `pose` (camera to world).
    pub fn render_view(&self, intrinsics: CameraIntrinsics, pose: RigidTransform, width: usize, height: usize) -> DepthView {
        let mut depth = vec![0u16; width * height];
        let mut mask = vec![false; width * height];
        let origin = *pose.translation();
        for v in 0..height {
            for u in 0..width {
                let ray_c = intrinsics.unproject(u as f64, v as f64, 1.0);
                let dir_w = pose.apply_vector(&ray_c.normalize());
                if let Some(t) = self.ray_hit(&origin, &dir_w) {
                    let z = t * ray_c.normalize().z;
                    let raw = (z / intrinsics.depth_scale).round();
                    if raw >= 1.0 && raw <= u16::MAX as f64 {
                        depth[v * width + u] = raw as u16;
                        mask[v * width + u] = true;
                    }
                }
            }
        }
        DepthView::new(width, height, depth, mask, intrinsics, pose).expect("consistent image sizes")
    }

    /// Views from `count` cameras evenly spaced on a horizontal circle around the plant.
    pub fn ring_views(&self, count: usize, distance: f64, width: usize, height: usize) -> Vec<DepthView> {
        let (lo, hi) = self.bounds();
        let centre = (lo + hi) * 0.5;
        let f = 1.2 * width.max(height) as f64;
        let intr = CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, 1e-4).expect("valid intrinsics");
        (0..count)
            .map(|k| {
                let az = std::f64::consts::TAU * k as f64 / count as f64;
                let eye = centre + Vec3::new(az.cos(), az.sin(), 0.0) * distance;
                self.render_view(intr, look_at(&eye, &centre), width, height)
            })
            .collect()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for b in &self.branches {
            for p in [self.nodes[b.a], self.nodes[b.b]] {
                lo = lo.inf(&p.add_scalar(-b.radius_m));
                hi = hi.sup(&p.add_scalar(b.radius_m));
            }
        }
        (lo, hi)
    }
}

/// Camera-to-world pose at `eye` whose optical axis points at `target`.
pub fn look_at(eye: &Vec3, target: &Vec3) -> RigidTransform {
    let z = (target - eye).normalize();
    let x = Vec3::z().cross(&z).try_normalize(1e-12).unwrap_or_else(|| any_perpendicular(&z));
    let y = z.cross(&x);
    RigidTransform::new(nalgebra::Matrix3::from_columns(&[x, y, z]), *eye).expect("orthonormal by construction")
}

/// First positive intersection of a unit-direction ray with a capsule.
pub fn ray_capsule(ro: &Vec3, rd: &Vec3, pa: &Vec3, pb: &Vec3, r: f64) -> Option<f64> {
    let ba = pb - pa;
    let oa = ro - pa;
    let baba = ba.dot(&ba);
    let bard = ba.dot(rd);
    let baoa = ba.dot(&oa);
    let rdoa = rd.dot(&oa);
    let oaoa = oa.dot(&oa);
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    if a > 1e-15 * baba {
        let h = b * b - a * c;
        if h < 0.0 {
            return None;
        }
        let t = (-b - h.sqrt()) / a;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return (t > 0.0).then_some(t);
        }
    }
    let mut best: Option<f64> = None;
    for centre in [pa, pb] {
        let oc = ro - centre;
        let b = rd.dot(&oc);
        let c = oc.dot(&oc) - r * r;
        let h = b * b - c;
        if h > 0.0 {
            let t = -b - h.sqrt();
            if t > 0.0 {
                best = Some(best.map_or(t, |x: f64| x.min(t)));
            }
        }
    }
    best
}

/// A procedural plant family.
pub trait PlantGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self) -> SyntheticPlant;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StraightStem {
    pub height_m: f64,
    pub radius_m: f64,
}

impl Default for StraightStem {
    fn default() -> Self {
        Self {
            height_m: 0.3,
            radius_m: 0.004,
        }
    }
}

impl PlantGenerator for StraightStem {
    fn name(&self) -> &str {
        "straight"
    }

    fn generate(&self) -> SyntheticPlant {
        SyntheticPlant {
            name: self.name().into(),
            nodes: vec![Vec3::zeros(), Vec3::new(0.0, 0.0, self.height_m)],
            branches: vec![Branch {
                a: 0,
                b: 1,
                radius_m: self.radius_m,
            }],
            main_stem: vec![0],
        }
    }
}

/// Trunk splitting into a near-vertical leader and a lateral branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YPlant {
    pub trunk_height_m: f64,
}

impl Default for YPlant {
    fn default() -> Self {
        Self { trunk_height_m: 0.17 }
    }
}

impl PlantGenerator for YPlant {
    fn name(&self) -> &str {
        "y-plant"
    }

    fn generate(&self) -> SyntheticPlant {
        let h = self.trunk_height_m;
        SyntheticPlant {
            name: self.name().into(),
            nodes: vec![
                Vec3::zeros(),
                Vec3::new(0.0, 0.0, h),
                Vec3::new(0.02, 0.0, h + 0.14),
                Vec3::new(0.1, 0.05, h + 0.03),
            ],
            branches: vec![
                Branch { a: 0, b: 1, radius_m: 0.004 },
                Branch { a: 1, b: 2, radius_m: 0.003 },
                Branch { a: 1, b: 3, radius_m: 0.0025 },
            ],
            main_stem: vec![0, 1],
        }
    }
}

/// Three levels of branching: trunk, side shoots, and a shoot on a side shoot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branched3;

impl PlantGenerator for Branched3 {
    fn name(&self) -> &str {
        "branched3"
    }

    fn generate(&self) -> SyntheticPlant {
        SyntheticPlant {
            name: self.name().into(),
            nodes: vec![
                Vec3::zeros(),
                Vec3::new(0.0, 0.0, 0.15),
                Vec3::new(-0.01, 0.0, 0.27),
                Vec3::new(-0.005, 0.01, 0.37),
                Vec3::new(0.09, 0.02, 0.2),
                Vec3::new(0.13, 0.03, 0.28),
                Vec3::new(0.15, -0.03, 0.22),
                Vec3::new(-0.09, -0.04, 0.31),
            ],
            branches: vec![
                Branch { a: 0, b: 1, radius_m: 0.005 },
                Branch { a: 1, b: 2, radius_m: 0.004 },
                Branch { a: 2, b: 3, radius_m: 0.003 },
                Branch { a: 1, b: 4, radius_m: 0.003 },
                Branch { a: 4, b: 5, radius_m: 0.0025 },
                Branch { a: 4, b: 6, radius_m: 0.002 },
                Branch { a: 2, b: 7, radius_m: 0.0025 },
            ],
            main_stem: vec![0, 1, 2],
        }
    }
}

pub fn plant_registry() -> Registry<dyn PlantGenerator> {
    let mut reg: Registry<dyn PlantGenerator> = Registry::new("synthetic plant");
    reg.register("straight", |p| Ok(Box::new(parse_params::<StraightStem>(p)?) as Box<dyn PlantGenerator>))
        .expect("fresh registry");
    reg.register("y-plant", |p| Ok(Box::new(parse_params::<YPlant>(p)?) as Box<dyn PlantGenerator>))
        .expect("fresh registry");
    reg.register("branched3", |_| Ok(Box::new(Branched3) as Box<dyn PlantGenerator>))
        .expect("fresh registry");
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graspplan::{find_main_stem, ScoreParams};

    #[test]
    fn ground_truth_main_stems_follow_the_score() {
        let reg = plant_registry();
        for name in reg.names() {
            let plant = reg.build_named(name).unwrap().generate();
            let gt = plant.ground_truth();
            gt.validate().unwrap();
            let stem = find_main_stem(&gt, &ScoreParams::default()).unwrap();
            assert_eq!(stem.segments, plant.main_stem, "{name}");
        }
    }

    #[test]
    fn volume_cloud_is_inside_and_unique() {
        let plant = YPlant::default().generate();
        let cloud = plant.volume_cloud(0.001);
        assert!(cloud.points().iter().all(|p| plant.contains(p)));
        let mut keys: Vec<_> = cloud.points().iter().map(|p| (p / 0.001).map(|c| c.round() as i64)).map(|v| (v.x, v.y, v.z)).collect();
        let n = keys.len();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }

    #[test]
    fn surface_points_lie_on_the_surface() {
        let plant = Branched3.generate();
        let cloud = plant.surface_cloud(500, 3);
        assert_eq!(cloud.len(), 500);
        for p in cloud.points() {
            let gap = plant
                .branches
                .iter()
                .map(|b| point_segment_distance(p, &plant.nodes[b.a], &plant.nodes[b.b]) - b.radius_m)
                .fold(f64::INFINITY, f64::min);
            assert!(gap.abs() < 1e-12, "{gap}");
        }
    }

    #[test]
    fn ray_capsule_cases() {
        let (a, b) = (Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0));
        let t = ray_capsule(&Vec3::new(-2.0, 0.0, 0.5), &Vec3::x(), &a, &b, 0.1).unwrap();
        assert!((t - 1.9).abs() < 1e-12);
        let cap = ray_capsule(&Vec3::new(0.0, 0.0, 3.0), &-Vec3::z(), &a, &b, 0.1).unwrap();
        assert!((cap - 1.9).abs() < 1e-12);
        assert!(ray_capsule(&Vec3::new(-2.0, 0.5, 0.5), &Vec3::x(), &a, &b, 0.1).is_none());
        assert!(ray_capsule(&Vec3::new(2.0, 0.0, 0.5), &Vec3::x(), &a, &b, 0.1).is_none());
    }

    #[test]
    fn rendered_points_lie_on_the_plant() {
        let plant = StraightStem::default().generate();
        let views = plant.ring_views(2, 0.5, 64, 96);
        for view in &views {
            let cloud = crate::fusion::backproject(view).unwrap();
            for p in cloud.points() {
                let d = point_segment_distance(p, &plant.nodes[0], &plant.nodes[1]);
                assert!((d - 0.004).abs() < 2e-4, "{d}");
            }
        }
    }
}
