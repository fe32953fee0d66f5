//! Main-stem selection and collision-aware grasp pose construction.
//!
//! Every root-to-leaf path of the simplified skeleton is scored, the best one
//! is truncated where it stops growing upward, the midpoint of its longest
//! remaining segment becomes the grasp point, and the approach direction is the
//! horizontal-ish direction perpendicular to the stem that is least aligned
//! with nearby branches.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_polyline_distance, rotation_to_quaternion_wxyz, Vec3};
use crate::skeleton::SimplifiedSkeleton;

/// Relative tolerance under which two path scores count as equal.
const SCORE_TIE_REL: f64 = 1e-12;
/// Absolute tolerance under which two obstruction objectives count as equal.
const OBJECTIVE_TIE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("skeleton has no segments")]
    EmptySkeleton,
    #[error("segment {0} has zero length")]
    ZeroLengthSegment(usize),
    #[error("invalid stem path: {0}")]
    InvalidPath(String),
    #[error("approach and stem directions are not perpendicular (|n·v| = {0:.3e})")]
    DegenerateFrame(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreParams {
    pub alpha: f64,
    pub v_bias: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { alpha: 1.0, v_bias: 1.0 }
    }
}

impl ScoreParams {
    fn validate(&self) -> Result<(), GraspError> {
        if !(self.alpha >= 0.0 && self.v_bias >= 0.0 && self.alpha.is_finite() && self.v_bias.is_finite()) {
            return Err(GraspError::InvalidParameter(format!(
                "alpha and v_bias must be finite and >= 0 (alpha={}, v_bias={})",
                self.alpha, self.v_bias
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraspParams {
    pub score: ScoreParams,
    pub max_angle_deg: f64,
    pub obstruction_radius_m: f64,
    pub n_dirs: usize,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self {
            score: ScoreParams::default(),
            max_angle_deg: 60.0,
            obstruction_radius_m: 0.10,
            n_dirs: 360,
        }
    }
}

impl GraspParams {
    pub fn validate(&self) -> Result<(), GraspError> {
        self.score.validate()?;
        if !(0.0..=180.0).contains(&self.max_angle_deg) {
            return Err(GraspError::InvalidParameter(format!("max_angle_deg {} not in [0, 180]", self.max_angle_deg)));
        }
        if !(self.obstruction_radius_m >= 0.0) {
            return Err(GraspError::InvalidParameter("obstruction_radius_m must be >= 0".into()));
        }
        if self.n_dirs < 8 {
            return Err(GraspError::InvalidParameter(format!("n_dirs must be >= 8, got {}", self.n_dirs)));
        }
        Ok(())
    }
}

/// Root-to-leaf segment ids with per-segment pruning flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemPath {
    pub segments: Vec<usize>,
    pub score: f64,
    pub pruned: Vec<bool>,
}

impl StemPath {
    /// Segment ids that survived pruning, in root-to-leaf order.
    pub fn retained(&self) -> Vec<usize> {
        self.segments
            .iter()
            .zip(&self.pruned)
            .filter(|(_, &p)| !p)
            .map(|(&s, _)| s)
            .collect()
    }
}

fn check_path(segments: &[usize], skel: &SimplifiedSkeleton) -> Result<(), GraspError> {
    let first = *segments.first().ok_or_else(|| GraspError::InvalidPath("empty path".into()))?;
    let seg = |k: usize| skel.segments.get(k).ok_or_else(|| GraspError::InvalidPath(format!("segment {k} does not exist")));
    if seg(first)?.a != skel.root {
        return Err(GraspError::InvalidPath("path does not start at the root".into()));
    }
    for w in segments.windows(2) {
        if seg(w[0])?.b != seg(w[1])?.a {
            return Err(GraspError::InvalidPath(format!("segments {} and {} are not contiguous", w[0], w[1])));
        }
    }
    seg(*segments.last().unwrap())?;
    Ok(())
}

/// `Σ L·r̄^α·(1 + v_bias·|dz|/L)` over the given segments.
pub fn score_path(segments: &[usize], skel: &SimplifiedSkeleton, params: &ScoreParams) -> Result<f64, GraspError> {
    check_path(segments, skel)?;
    let mut total = 0.0;
    for &k in segments {
        let s = &skel.segments[k];
        if !(s.length_m > 0.0) {
            return Err(GraspError::ZeroLengthSegment(k));
        }
        total += s.length_m * s.mean_radius_m.powf(params.alpha) * (1.0 + params.v_bias * s.dz_m.abs() / s.length_m);
    }
    Ok(total)
}

/// Best-scoring root-to-leaf path. Near-equal scores fall back to the larger
/// total |dz|, then to the smaller leaf id.
pub fn find_main_stem(skel: &SimplifiedSkeleton, params: &ScoreParams) -> Result<StemPath, GraspError> {
    params.validate()?;
    if skel.segments.is_empty() {
        return Err(GraspError::EmptySkeleton);
    }
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for leaf in skel.leaves() {
        let path = skel.path_to(leaf);
        let score = score_path(&path, skel, params)?;
        let rise: f64 = path.iter().map(|&k| skel.segments[k].dz_m.abs()).sum();
        let better = match &best {
            None => true,
            Some((bs, brise, _)) => {
                let tol = SCORE_TIE_REL * score.abs().max(bs.abs());
                if (score - bs).abs() <= tol {
                    rise > *brise
                } else {
                    score > *bs
                }
            }
        };
        if better {
            best = Some((score, rise, path));
        }
    }
    let (score, _, segments) = best.ok_or(GraspError::EmptySkeleton)?;
    let pruned = vec![false; segments.len()];
    Ok(StemPath { segments, score, pruned })
}

/// Angle in degrees between a segment chord and the vertical axis, ignoring sign.
pub fn segment_tilt_deg(skel: &SimplifiedSkeleton, k: usize) -> f64 {
    let chord = skel.segments[k].chord();
    let len = chord.norm();
    if len == 0.0 {
        return 90.0;
    }
    (chord.z.abs() / len).min(1.0).acos().to_degrees()
}

/// Marks everything from the first segment tilted more than `max_angle_deg`
/// onward as pruned. The first segment is always kept.
pub fn prune_stem(path: &StemPath, skel: &SimplifiedSkeleton, max_angle_deg: f64) -> StemPath {
    let mut pruned = vec![false; path.segments.len()];
    if let Some(cut) = path
        .segments
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &k)| segment_tilt_deg(skel, k) > max_angle_deg)
        .map(|(i, _)| i)
    {
        pruned[cut..].iter_mut().for_each(|p| *p = true);
    }
    StemPath {
        segments: path.segments.clone(),
        score: path.score,
        pruned,
    }
}

/// Point at arc length `s` along a polyline (clamped to its ends).
pub fn polyline_point_at(points: &[Vec3], s: f64) -> Vec3 {
    let mut remaining = s.max(0.0);
    for w in points.windows(2) {
        let piece = (w[1] - w[0]).norm();
        if remaining <= piece && piece > 0.0 {
            return w[0] + (w[1] - w[0]) * (remaining / piece);
        }
        remaining -= piece;
    }
    *points.last().expect("non-empty polyline")
}

/// Arc-length midpoint and unit tangent of a polyline. The tangent is a central
/// difference whose half-width is the mean piece length.
pub fn polyline_midpoint(points: &[Vec3]) -> (Vec3, Vec3) {
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    let length: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let mid = 0.5 * length;
    let h = length / pieces;
    let p = polyline_point_at(points, mid);
    let ahead = polyline_point_at(points, (mid + h).min(length));
    let behind = polyline_point_at(points, (mid - h).max(0.0));
    let d = ahead - behind;
    let tangent = if d.norm() > 0.0 {
        d.normalize()
    } else {
        (points[points.len() - 1] - points[0]).try_normalize(0.0).unwrap_or_else(Vec3::z)
    };
    (p, tangent)
}

/// Grasp point, stem direction and grasped segment id for a pruned stem.
pub fn select_grasp_point(core: &StemPath, skel: &SimplifiedSkeleton) -> Result<(Vec3, Vec3, usize), GraspError> {
    let retained = core.retained();
    let mut best: Option<usize> = None;
    for &k in &retained {
        match best {
            Some(b) if skel.segments[k].length_m <= skel.segments[b].length_m => {}
            _ => best = Some(k),
        }
    }
    let k = best.ok_or_else(|| GraspError::InvalidPath("no retained segments".into()))?;
    let (p, v) = polyline_midpoint(&skel.segments[k].points());
    Ok((p, v, k))
}

/// Orthonormal pair spanning the plane perpendicular to `v`.
pub fn perpendicular_basis(v: &Vec3) -> (Vec3, Vec3) {
    let seed = if Vec3::x().dot(v).abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = (seed - v * seed.dot(v)).normalize();
    let w = v.cross(&u);
    (u, w)
}

/// Candidate approach direction `k` of `n_dirs` around `v`.
pub fn approach_candidate(v: &Vec3, k: usize, n_dirs: usize) -> Vec3 {
    let (u, w) = perpendicular_basis(v);
    let th = 2.0 * PI * k as f64 / n_dirs as f64;
    u * th.cos() + w * th.sin()
}

/// Unit chords of segments passing within `radius` of `p`, except `exclude`.
pub fn nearby_branch_directions(p: &Vec3, skel: &SimplifiedSkeleton, exclude: Option<usize>, radius: f64) -> Vec<Vec3> {
    skel.segments
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != exclude)
        .filter(|(_, s)| point_polyline_distance(p, &s.points()) <= radius)
        .filter_map(|(_, s)| s.chord().try_normalize(0.0))
        .collect()
}

/// `max_j |n·b_j|`, zero when there are no branches.
pub fn obstruction(n: &Vec3, branches: &[Vec3]) -> f64 {
    branches.iter().map(|b| n.dot(b).abs()).fold(0.0, f64::max)
}

/// Directions around `v` where one branch term vanishes or two terms have
/// equal magnitude. Every local minimum of [`obstruction`] on the circle is one of them.
pub fn kink_directions(v: &Vec3, branches: &[Vec3]) -> Vec<Vec3> {
    let (u, w) = perpendicular_basis(v);
    let mut normals = Vec::new();
    for (j, bj) in branches.iter().enumerate() {
        normals.push(*bj);
        for bi in &branches[..j] {
            normals.push(bi - bj);
            normals.push(bi + bj);
        }
    }
    let mut out = Vec::new();
    for c in normals {
        let (g, d) = (c.dot(&u), c.dot(&w));
        if g.hypot(d) < 1e-12 {
            continue;
        }
        let th = (-g).atan2(d);
        let n = u * th.cos() + w * th.sin();
        out.push(n);
        out.push(-n);
    }
    out
}

/// Index and value of the least obstructed direction around `v`. Candidates
/// are the `n_dirs` uniform directions (indices below `n_dirs`) followed by
/// the [`kink_directions`]. Ties prefer the direction closest to horizontal,
/// then the lowest index.
pub fn best_approach(v: &Vec3, branches: &[Vec3], n_dirs: usize) -> (usize, Vec3, f64) {
    let down = -Vec3::z();
    let candidates = (0..n_dirs)
        .map(|k| approach_candidate(v, k, n_dirs))
        .chain(kink_directions(v, branches));
    let mut best: Option<(usize, Vec3, f64, f64)> = None;
    for (k, n) in candidates.enumerate() {
        let f = obstruction(&n, branches);
        let g = n.dot(&down).abs();
        let better = match &best {
            None => true,
            Some((_, _, bf, bg)) => {
                if (f - bf).abs() <= OBJECTIVE_TIE {
                    g < bg - OBJECTIVE_TIE
                } else {
                    f < *bf
                }
            }
        };
        if better {
            best = Some((k, n, f, g));
        }
    }
    let (k, n, f, _) = best.expect("n_dirs >= 1");
    (k, n, f)
}

/// Least-obstructed approach direction perpendicular to `v` and its objective.
pub fn approach_vector(
    p: &Vec3,
    v: &Vec3,
    skel: &SimplifiedSkeleton,
    grasp_segment: Option<usize>,
    radius: f64,
    n_dirs: usize,
) -> Result<(Vec3, f64), GraspError> {
    if n_dirs < 8 {
        return Err(GraspError::InvalidParameter(format!("n_dirs must be >= 8, got {n_dirs}")));
    }
    let branches = nearby_branch_directions(p, skel, grasp_segment, radius);
    let (_, n, f) = best_approach(v, &branches, n_dirs);
    Ok((n, f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspPose {
    pub position_m: [f64; 3],
    pub approach: [f64; 3],
    pub stem_dir: [f64; 3],
    pub quaternion_wxyz: [f64; 4],
    pub objective: f64,
    pub params: GraspParams,
}

impl GraspPose {
    /// Gripper frame columns `[approach, ŷ, ẑ]`.
    pub fn rotation(&self) -> Matrix3<f64> {
        crate::geometry::quaternion_wxyz_to_rotation(self.quaternion_wxyz)
    }
}

/// Gripper frame with x̂ along the approach and ẑ along the stem.
pub fn build_pose(p: &Vec3, n: &Vec3, v: &Vec3, objective: f64, params: &GraspParams) -> Result<GraspPose, GraspError> {
    let x = n.try_normalize(0.0).ok_or(GraspError::DegenerateFrame(f64::NAN))?;
    let vz = v.try_normalize(0.0).ok_or(GraspError::DegenerateFrame(f64::NAN))?;
    let dot = x.dot(&vz);
    if dot.abs() > 1e-3 {
        return Err(GraspError::DegenerateFrame(dot.abs()));
    }
    let z = (vz - x * dot).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_columns(&[x, y, z]);
    Ok(GraspPose {
        position_m: (*p).into(),
        approach: x.into(),
        stem_dir: z.into(),
        quaternion_wxyz: rotation_to_quaternion_wxyz(&r),
        objective,
        params: *params,
    })
}

#[derive(Debug, Clone)]
pub struct GraspPlan {
    pub stem: StemPath,
    pub grasp_segment: usize,
    pub pose: GraspPose,
}

/// Main stem, pruning, grasp point, approach and pose in one call.
pub fn plan_grasp(skel: &SimplifiedSkeleton, params: &GraspParams) -> Result<GraspPlan, GraspError> {
    params.validate()?;
    let stem = find_main_stem(skel, &params.score)?;
    let core = prune_stem(&stem, skel, params.max_angle_deg);
    let (p, v, k) = select_grasp_point(&core, skel)?;
    let (n, f) = approach_vector(&p, &v, skel, Some(k), params.obstruction_radius_m, params.n_dirs)?;
    let pose = build_pose(&p, &n, &v, f, params)?;
    Ok(GraspPlan {
        stem: core,
        grasp_segment: k,
        pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{SkeletonNode, SkeletonSegment};

    /// Builds a skeleton from node positions and `(parent, child, radius)` edges
    /// with straight two-point polylines.
    fn skel(nodes: &[[f64; 3]], segs: &[(usize, usize, f64)]) -> SimplifiedSkeleton {
        SimplifiedSkeleton {
            nodes: nodes
                .iter()
                .enumerate()
                .map(|(id, &xyz_m)| SkeletonNode { id, xyz_m, radius_m: 0.01 })
                .collect(),
            segments: segs
                .iter()
                .map(|&(a, b, r)| {
                    let pa = Vec3::from(nodes[a]);
                    let pb = Vec3::from(nodes[b]);
                    SkeletonSegment {
                        a,
                        b,
                        polyline: vec![nodes[a], nodes[b]],
                        length_m: (pb - pa).norm(),
                        mean_radius_m: r,
                        dz_m: pb.z - pa.z,
                    }
                })
                .collect(),
            root: 0,
        }
    }

    #[test]
    fn unit_vertical_segment_scores_two() {
        let s = skel(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[(0, 1, 1.0)]);
        let v = score_path(&[0], &s, &ScoreParams { alpha: 1.0, v_bias: 1.0 }).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_params_score_length() {
        let s = skel(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [2.0, 0.0, 1.0]], &[(0, 1, 0.3), (1, 2, 0.1)]);
        let v = score_path(&[0, 1], &s, &ScoreParams { alpha: 0.0, v_bias: 0.0 }).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
        let h = score_path(&[0, 1], &s, &ScoreParams { alpha: 0.0, v_bias: 5.0 }).unwrap();
        assert!((h - (1.0 * 6.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_length_segment_rejected() {
        let s = skel(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], &[(0, 1, 0.1)]);
        assert!(matches!(
            score_path(&[0], &s, &ScoreParams::default()),
            Err(GraspError::ZeroLengthSegment(0))
        ));
    }

    #[test]
    fn vertical_branch_beats_horizontal() {
        // trunk (0,0,0)->(0,0,1), top branch vertical, side branch horizontal; all r = 1
        let s = skel(
            &[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 2.0], [1.0, 0.0, 1.0]],
            &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)],
        );
        let p = ScoreParams::default();
        assert_eq!(score_path(&[0, 1], &s, &p).unwrap(), 4.0);
        assert_eq!(score_path(&[0, 2], &s, &p).unwrap(), 3.0);
        assert_eq!(find_main_stem(&s, &p).unwrap().segments, vec![0, 1]);
    }

    #[test]
    fn thick_short_beats_thin_long_with_alpha_two() {
        let s = skel(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 3.0, 0.0]],
            &[(0, 1, 2.0), (0, 2, 1.0)],
        );
        let p = ScoreParams { alpha: 2.0, v_bias: 1.0 };
        assert_eq!(find_main_stem(&s, &p).unwrap().segments, vec![0]);
    }

    #[test]
    fn prune_lateral_suffix() {
        let tilt = 80f64.to_radians();
        let s = skel(
            &[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [tilt.sin(), 0.0, 1.0 + tilt.cos()], [tilt.sin(), 0.0, 2.0 + tilt.cos()]],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
        );
        let path = StemPath { segments: vec![0, 1, 2], score: 0.0, pruned: vec![false; 3] };
        let core = prune_stem(&path, &s, 60.0);
        assert_eq!(core.pruned, vec![false, true, true]);
        assert!((segment_tilt_deg(&s, 1) - 80.0).abs() < 1e-9);
    }

    #[test]
    fn tilted_first_segment_is_kept() {
        let s = skel(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.1], [1.0, 0.0, 1.1]], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let path = StemPath { segments: vec![0, 1], score: 0.0, pruned: vec![false; 2] };
        assert_eq!(prune_stem(&path, &s, 60.0).pruned, vec![false, false]);
        let s2 = skel(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.1], [2.0, 0.0, 0.1]], &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(prune_stem(&path, &s2, 60.0).pruned, vec![false, true]);
    }

    #[test]
    fn grasp_point_of_vertical_line() {
        let s = skel(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[(0, 1, 1.0)]);
        let core = StemPath { segments: vec![0], score: 0.0, pruned: vec![false] };
        let (p, v, k) = select_grasp_point(&core, &s).unwrap();
        assert_eq!(k, 0);
        assert!((p - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
        assert!((v - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn longest_segment_hosts_grasp() {
        let s = skel(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.3], [0.0, 0.0, 1.0]], &[(0, 1, 1.0), (1, 2, 1.0)]);
        let core = StemPath { segments: vec![0, 1], score: 0.0, pruned: vec![false; 2] };
        let (p, _, k) = select_grasp_point(&core, &s).unwrap();
        assert_eq!(k, 1);
        assert!((p.z - 0.65).abs() < 1e-12);
    }

    #[test]
    fn quarter_circle_midpoint_tangent() {
        let n = 40;
        let pts: Vec<Vec3> = (0..=n)
            .map(|i| {
                let t = 0.5 * PI * i as f64 / n as f64;
                Vec3::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        let (p, v) = polyline_midpoint(&pts);
        let angle = p.y.atan2(p.x).to_degrees();
        assert!((angle - 45.0).abs() < 0.1, "{angle}");
        let radial = p.normalize();
        assert!(v.dot(&radial).abs() < 0.02);
    }

    #[test]
    fn empty_obstruction_prefers_index_zero() {
        let (k, n, f) = best_approach(&Vec3::z(), &[], 360);
        assert_eq!(k, 0);
        assert_eq!(n, Vec3::x());
        assert_eq!(f, 0.0);
    }

    #[test]
    fn single_branch_gives_perpendicular() {
        let (_, n, f) = best_approach(&Vec3::z(), &[Vec3::x()], 360);
        assert!(f < 1e-12);
        assert!((n.y.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_branches_bisect() {
        let (_, n, f) = best_approach(&Vec3::z(), &[Vec3::x(), Vec3::y()], 360);
        assert!((f - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((n.x.abs() - n.y.abs()).abs() < 1e-12);
    }

    #[test]
    fn canonical_pose() {
        let pose = build_pose(&Vec3::zeros(), &Vec3::x(), &Vec3::z(), 0.0, &GraspParams::default()).unwrap();
        assert_eq!(pose.quaternion_wxyz, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn yaw_pose() {
        let pose = build_pose(&Vec3::zeros(), &Vec3::y(), &Vec3::z(), 0.0, &GraspParams::default()).unwrap();
        let h = 0.5f64.sqrt();
        let q = pose.quaternion_wxyz;
        assert!((q[0] - h).abs() < 1e-12 && q[1].abs() < 1e-12 && q[2].abs() < 1e-12 && (q[3] - h).abs() < 1e-12);
    }

    #[test]
    fn non_perpendicular_frame_rejected() {
        let n = Vec3::new(1.0, 0.0, 0.01).normalize();
        assert!(matches!(
            build_pose(&Vec3::zeros(), &n, &Vec3::z(), 0.0, &GraspParams::default()),
            Err(GraspError::DegenerateFrame(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit() -> impl Strategy<Value = Vec3> {
            prop::array::uniform3(-1.0f64..1.0)
                .prop_filter("non-zero", |a| Vec3::from(*a).norm() > 0.1)
                .prop_map(|a| Vec3::from(a).normalize())
        }

        proptest! {
            #[test]
            fn pose_frame_is_orthonormal(v in unit(), k in 0usize..360) {
                let n = approach_candidate(&v, k, 360);
                let pose = build_pose(&Vec3::zeros(), &n, &v, 0.0, &GraspParams::default()).unwrap();
                let r = pose.rotation();
                prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
                prop_assert!((r.column(0) - n).norm() < 1e-6);
                let q = pose.quaternion_wxyz;
                prop_assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(Vec3::from(pose.approach).dot(&Vec3::from(pose.stem_dir)).abs() < 1e-6);
            }

            #[test]
            fn approach_is_sample_optimal(v in unit(), bs in prop::collection::vec(unit(), 0..4)) {
                let (_, n, f) = best_approach(&v, &bs, 72);
                prop_assert!(n.dot(&v).abs() < 1e-12);
                for k in 0..72 {
                    prop_assert!(f <= obstruction(&approach_candidate(&v, k, 72), &bs) + 1e-12);
                }
            }

            #[test]
            fn approach_reaches_the_continuous_optimum(v in unit(), bs in prop::collection::vec(unit(), 1..4)) {
                let (_, n, f) = best_approach(&v, &bs, 360);
                let dense = (0..36000)
                    .map(|k| obstruction(&approach_candidate(&v, k, 36000), &bs))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(f <= dense + 1e-12);
                prop_assert!((n.norm() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn radius_scaling_keeps_argmax(c in 0.1f64..10.0, alpha in 0.0f64..3.0, r1 in 0.001f64..0.01, r2 in 0.001f64..0.01) {
                let base = skel(
                    &[[0.0, 0.0, 0.0], [0.0, 0.0, 0.1], [0.0, 0.0, 0.3], [0.2, 0.0, 0.15]],
                    &[(0, 1, 0.005), (1, 2, r1), (1, 3, r2)],
                );
                let mut scaled = base.clone();
                for s in &mut scaled.segments {
                    s.mean_radius_m *= c;
                }
                let p = ScoreParams { alpha, v_bias: 1.0 };
                let a = find_main_stem(&base, &p).unwrap();
                let b = find_main_stem(&scaled, &p).unwrap();
                prop_assert_eq!(&a.segments, &b.segments);
                prop_assert!((b.score - a.score * c.powf(alpha)).abs() <= 1e-9 * b.score.abs());
            }
        }
    }
}
