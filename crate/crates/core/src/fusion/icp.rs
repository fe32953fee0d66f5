//! Point-to-point ICP with a closed-form SVD (Kabsch) update.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::spatial::GridIndex;
use super::{FusionError, PointCloud};
use crate::geometry::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop once the mean correspondence distance improves by less than this (m).
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpOutcome {
    /// Best transform seen (lowest nearest-neighbour RMSE), already composed with `init`.
    pub transform: RigidTransform,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpOutcome {
    /// Turns a run that hit `max_iter` into [`FusionError::NoConvergence`].
    pub fn into_result(self) -> Result<RigidTransform, FusionError> {
        if self.converged {
            Ok(self.transform)
        } else {
            Err(FusionError::NoConvergence {
                best: self.transform,
                rmse: self.rmse,
                iterations: self.iterations,
            })
        }
    }
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
///
/// When the cross-covariance has rank ≤ 1 (a single point, or collinear
/// points) the rotation is not determined and identity is used.
pub fn procrustes(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    assert_eq!(src.len(), dst.len());
    assert!(!src.is_empty());
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let scale = sv[0].max(f64::MIN_POSITIVE);
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * scale {
        return RigidTransform::from_translation(cd - cs);
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("three singular values");
        d[(min_idx, min_idx)] = -1.0;
    }
    let r = v * d * u.transpose();
    let rotation = RigidTransform::new(r, Vec3::zeros())
        .map(|t| *t.rotation())
        .unwrap_or_else(|_| Matrix3::identity());
    let t = cd - rotation * cs;
    RigidTransform::new(rotation, t).unwrap_or_else(|_| RigidTransform::from_translation(cd - cs))
}

struct Matches {
    mean: f64,
    rmse: f64,
    targets: Vec<Vec3>,
}

fn correspond(moved: &[Vec3], index: &GridIndex, target: &[Vec3]) -> Matches {
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut targets = Vec::with_capacity(moved.len());
    for p in moved {
        let (j, d) = index.nearest(p).expect("non-empty target");
        sum += d;
        sum2 += d * d;
        targets.push(target[j]);
    }
    let n = moved.len() as f64;
    Matches {
        mean: sum / n,
        rmse: (sum2 / n).sqrt(),
        targets,
    }
}

/// Nearest-neighbour RMSE of `t·source` against `target`.
pub fn nn_rmse(source: &PointCloud, target: &PointCloud, t: &RigidTransform) -> f64 {
    let index = GridIndex::with_auto_cell(target.points());
    let moved: Vec<Vec3> = source.points().iter().map(|p| t.apply(p)).collect();
    correspond(&moved, &index, target.points()).rmse
}

/// Refines `init` so that `transform · source` best overlays `target`.
pub fn icp_refine(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpOutcome, FusionError> {
    if source.is_empty() || target.is_empty() {
        return Err(FusionError::EmptyCloud);
    }
    if !(params.tol >= 0.0) {
        return Err(FusionError::InvalidParameter(format!("ICP tol must be >= 0, got {}", params.tol)));
    }
    let index = GridIndex::with_auto_cell(target.points());
    let src = source.points();
    let mut current = *init;
    let mut moved: Vec<Vec3> = src.iter().map(|p| current.apply(p)).collect();
    let mut matches = correspond(&moved, &index, target.points());
    let mut best = (current, matches.rmse);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let delta = procrustes(&moved, &matches.targets);
        current = delta.compose(&current);
        iterations += 1;
        moved = src.iter().map(|p| current.apply(p)).collect();
        let next = correspond(&moved, &index, target.points());
        if next.rmse < best.1 {
            best = (current, next.rmse);
        }
        let improvement = matches.mean - next.mean;
        matches = next;
        if improvement < params.tol {
            converged = true;
            break;
        }
    }
    Ok(IcpOutcome {
        transform: best.0,
        rmse: best.1,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn helix(n: usize) -> PointCloud {
        let pts = (0..n)
            .map(|i| {
                let s = i as f64 / n as f64;
                Vec3::new(0.05 * (12.0 * s).cos(), 0.03 * (9.0 * s).sin(), 0.3 * s)
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn aligned_clouds_stay_put() {
        let c = helix(300);
        let out = icp_refine(&c, &c, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert!(out.converged);
        let err = (out.transform.to_homogeneous() - nalgebra::Matrix4::identity()).abs().max();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn recovers_known_perturbation() {
        let src = helix(800);
        let pert = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 5f64.to_radians(), Vec3::new(0.02, -0.01, 0.005));
        let tgt = src.transformed(&pert);
        let out = icp_refine(&src, &tgt, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert!(out.rmse < 1e-3, "rmse {}", out.rmse);
        assert!(out.transform.rotation_angle_to(&pert) < 1e-3);
    }

    #[test]
    fn single_point_aligns_by_translation() {
        let src = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let tgt = PointCloud::new(vec![Vec3::new(0.5, 0.0, -1.0)]).unwrap();
        let out = icp_refine(&src, &tgt, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert_eq!(*out.transform.rotation(), Matrix3::identity());
        assert!((out.transform.apply(&src.points()[0]) - tgt.points()[0]).norm() < 1e-12);
    }

    #[test]
    fn procrustes_exact_on_noise_free_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src: Vec<Vec3> = (0..20)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let t = RigidTransform::from_axis_angle(Vec3::new(0.3, -0.2, 1.0), 2.5, Vec3::new(1.0, 0.0, -2.0));
        let dst: Vec<Vec3> = src.iter().map(|p| t.apply(p)).collect();
        let est = procrustes(&src, &dst);
        assert!((est.to_homogeneous() - t.to_homogeneous()).abs().max() < 1e-12);
    }

    #[test]
    fn procrustes_planar_points_are_not_degenerate() {
        let src = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 0.0)];
        let t = RigidTransform::from_axis_angle(Vec3::z(), 0.4, Vec3::zeros());
        let dst: Vec<Vec3> = src.iter().map(|p| t.apply(p)).collect();
        assert!(procrustes(&src, &dst).rotation_angle_to(&t) < 1e-12);
    }

    #[test]
    fn max_iter_zero_reports_no_convergence() {
        let c = helix(50);
        let p = IcpParams { max_iter: 0, tol: 1e-9 };
        let moved = c.transformed(&RigidTransform::from_translation(Vec3::new(0.01, 0.0, 0.0)));
        let out = icp_refine(&c, &moved, &RigidTransform::identity(), &p).unwrap();
        assert!(matches!(out.into_result(), Err(FusionError::NoConvergence { .. })));
    }

    #[test]
    fn never_worse_than_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let src = helix(200);
            let pert = RigidTransform::from_axis_angle(
                Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                rng.gen_range(0.0..1.0),
                Vec3::new(rng.gen_range(-0.1..0.1), 0.0, rng.gen_range(-0.1..0.1)),
            );
            let tgt = src.transformed(&pert);
            let init = RigidTransform::identity();
            let before = nn_rmse(&src, &tgt, &init);
            let out = icp_refine(&src, &tgt, &init, &IcpParams { max_iter: 5, tol: 0.0 }).unwrap();
            assert!(out.rmse <= before);
        }
    }
}
