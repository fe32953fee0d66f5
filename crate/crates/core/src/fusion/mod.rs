//! Multi-view depth fusion and point-cloud cleanup.
//!
//! Masked depth maps are back-projected through a pinhole model into the world
//! frame, optionally registered against the running fused model with
//! point-to-point ICP, then downsampled, reduced to the dominant DBSCAN cluster
//! and rasterized into an occupancy grid.

mod icp;
pub mod io;
pub mod spatial;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};
use crate::skeleton::VoxelGrid;

pub use icp::{icp_refine, nn_rmse, procrustes, IcpOutcome, IcpParams};
use spatial::GridIndex;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("every point was classified as noise")]
    NoClusters,
    #[error("voxel grid {dims:?} exceeds the cap of {cap} voxels per axis")]
    GridTooLarge { dims: [usize; 3], cap: usize },
    #[error("ICP did not converge after {iterations} iterations (rmse {rmse:.3e} m)")]
    NoConvergence {
        best: RigidTransform,
        rmse: f64,
        iterations: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("depth ({depth_w}x{depth_h}) and mask ({mask_w}x{mask_h}) dimensions differ")]
    DimensionMismatch {
        depth_w: usize,
        depth_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
}

/// Pinhole intrinsics plus the metric scale of raw depth units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self, FusionError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            depth_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.depth_scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.depth_scale <= 0.0 {
            return Err(FusionError::InvalidParameter(format!(
                "intrinsics must be finite with fx, fy, depth_scale > 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Camera-frame point for pixel `(u, v)` at metric depth `z`.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Pixel coordinates of a camera-frame point (z > 0).
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// One masked depth capture with its camera-to-world pose.
#[derive(Debug, Clone)]
pub struct DepthView {
    width: usize,
    height: usize,
    depth: Vec<u16>,
    mask: Vec<bool>,
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidTransform,
}

impl DepthView {
    /// `depth` and `mask` are row-major `height × width`.
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<u16>,
        mask: Vec<bool>,
        intrinsics: CameraIntrinsics,
        pose: RigidTransform,
    ) -> Result<Self, FusionError> {
        if depth.len() != width * height || mask.len() != width * height {
            let mask_h = if width == 0 { 0 } else { mask.len() / width };
            return Err(FusionError::DimensionMismatch {
                depth_w: width,
                depth_h: height,
                mask_w: width,
                mask_h,
            });
        }
        intrinsics.validate()?;
        Ok(Self {
            width,
            height,
            depth,
            mask,
            intrinsics,
            pose,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[u16] {
        &self.depth
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// A list of finite 3-D points in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, FusionError> {
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(FusionError::InvalidParameter(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
        }
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vec3>() / self.points.len() as f64)
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }
}

/// Back-projects every masked-in pixel with positive depth into the world frame.
pub fn backproject(view: &DepthView) -> Result<PointCloud, FusionError> {
    let k = &view.intrinsics;
    let mut points = Vec::new();
    for v in 0..view.height {
        for u in 0..view.width {
            let idx = v * view.width + u;
            let raw = view.depth[idx];
            if !view.mask[idx] || raw == 0 {
                continue;
            }
            let z = raw as f64 * k.depth_scale;
            points.push(view.pose.apply(&k.unproject(u as f64, v as f64, z)));
        }
    }
    if points.is_empty() {
        return Err(FusionError::EmptyCloud);
    }
    Ok(PointCloud { points })
}

/// Concatenates the back-projected views in input order. With `icp` set, each
/// view is first registered against the union of the views before it.
pub fn fuse_views(views: &[DepthView], icp: Option<&IcpParams>) -> Result<PointCloud, FusionError> {
    if views.is_empty() {
        return Err(FusionError::InvalidParameter("no views given".into()));
    }
    let mut fused = PointCloud::default();
    for (i, view) in views.iter().enumerate() {
        let cloud = match backproject(view) {
            Ok(c) => c,
            Err(FusionError::EmptyCloud) => {
                log::warn!("view {i} has no valid pixels; skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        let cloud = match icp {
            Some(params) if !fused.is_empty() => {
                let outcome = icp_refine(&cloud, &fused, &RigidTransform::identity(), params)?;
                if !outcome.converged {
                    log::warn!(
                        "view {i}: ICP stopped after {} iterations without converging",
                        outcome.iterations
                    );
                }
                cloud.transformed(&outcome.transform)
            }
            _ => cloud,
        };
        fused.extend(&cloud);
    }
    if fused.is_empty() {
        return Err(FusionError::EmptyCloud);
    }
    Ok(fused)
}

fn cell_key(p: &Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Replaces the points of each occupied cell by their centroid (cells in
/// lexicographic index order).
pub fn voxel_downsample(cloud: &PointCloud, cell: f64) -> Result<PointCloud, FusionError> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(FusionError::InvalidParameter(format!(
            "downsample cell must be > 0, got {cell}"
        )));
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let entry = cells.entry(cell_key(p, cell)).or_insert((Vec3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    Ok(PointCloud {
        points: cells.into_values().map(|(sum, n)| sum / n as f64).collect(),
    })
}

/// DBSCAN cluster labels: `Some(cluster)` or `None` for noise. Clusters are
/// numbered in order of their first core point.
pub fn dbscan_labels(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    if n == 0 {
        return labels;
    }
    let index = GridIndex::new(points, eps);
    let neighbours: Vec<Vec<usize>> = points.iter().map(|p| index.within(p, eps)).collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut visited = vec![false; n];
    let mut next = 0;
    for seed in 0..n {
        if visited[seed] || !is_core[seed] {
            continue;
        }
        let cluster = next;
        next += 1;
        let mut stack = vec![seed];
        visited[seed] = true;
        labels[seed] = Some(cluster);
        while let Some(q) = stack.pop() {
            if !is_core[q] {
                continue;
            }
            for &r in &neighbours[q] {
                if labels[r].is_none() {
                    labels[r] = Some(cluster);
                }
                if !visited[r] {
                    visited[r] = true;
                    stack.push(r);
                }
            }
        }
    }
    labels
}

/// Points of the largest DBSCAN cluster, in input order. Ties go to the
/// cluster with the lower centroid z, then to the one seen first.
pub fn largest_cluster(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<PointCloud, FusionError> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(FusionError::InvalidParameter(format!(
            "DBSCAN needs eps > 0 and min_pts >= 1 (eps={eps}, min_pts={min_pts})"
        )));
    }
    let labels = dbscan_labels(&cloud.points, eps, min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    if n_clusters == 0 {
        return Err(FusionError::NoClusters);
    }
    let mut count = vec![0usize; n_clusters];
    let mut zsum = vec![0.0f64; n_clusters];
    for (p, l) in cloud.points.iter().zip(&labels) {
        if let Some(c) = *l {
            count[c] += 1;
            zsum[c] += p.z;
        }
    }
    let best = (0..n_clusters)
        .min_by(|&a, &b| {
            count[b].cmp(&count[a]).then_with(|| {
                let za = zsum[a] / count[a] as f64;
                let zb = zsum[b] / count[b] as f64;
                za.total_cmp(&zb).then(a.cmp(&b))
            })
        })
        .expect("at least one cluster");
    Ok(PointCloud {
        points: cloud
            .points
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == Some(best))
            .map(|(p, _)| *p)
            .collect(),
    })
}

/// Default per-axis voxel cap.
pub const DEFAULT_MAX_GRID_DIM: usize = 512;

/// Rasterizes a cloud into an occupancy grid whose origin is one cell below the
/// per-axis minimum, so the outermost layer of voxels is always empty.
pub fn voxelize(cloud: &PointCloud, resolution: f64, max_dim: usize) -> Result<VoxelGrid, FusionError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(FusionError::InvalidParameter(format!(
            "voxel resolution must be > 0, got {resolution}"
        )));
    }
    let first = cloud.points.first().ok_or(FusionError::EmptyCloud)?;
    let (mut lo, mut hi) = (*first, *first);
    for p in &cloud.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut interior = [0usize; 3];
    for k in 0..3 {
        let span = (hi[k] - lo[k]) / resolution;
        interior[k] = ((span - 1e-9).ceil().max(1.0)) as usize;
    }
    let dims = [interior[0] + 2, interior[1] + 2, interior[2] + 2];
    if dims.iter().any(|&d| d > max_dim) {
        return Err(FusionError::GridTooLarge { dims, cap: max_dim });
    }
    let origin = lo - Vec3::repeat(resolution);
    let mut grid = VoxelGrid::empty(origin, resolution, dims);
    for p in &cloud.points {
        let [x, y, z] = grid.interior_voxel_of(p);
        grid.set(x, y, z, true);
    }
    Ok(grid)
}

/// RMS distance of the points to their least-squares plane.
pub fn plane_fit_residual(points: &[Vec3]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let min = eig.eigenvalues.min().max(0.0);
    (min / points.len() as f64).sqrt()
}
