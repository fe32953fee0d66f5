//! End-to-end wiring of the modules with a single error type.

use thiserror::Error;

use crate::bench::BenchError;
use crate::config::{ConfigError, FusionConfig, PipelineConfig, SkeletonConfig};
use crate::dersim::{Actuation, DerError, NetworkFile, RodNetwork, SimConfig, SkeletonRodMap};
use crate::files::FileError;
use crate::fusion::{self, DepthView, FusionError, PointCloud};
use crate::geometry::Vec3;
use crate::graspplan::{plan_grasp, GraspError, GraspPlan};
use crate::registry::RegistryError;
use crate::skeleton::{edge_cost_registry, skeletonize_grid, MstOutcome, SimplifiedSkeleton, SkeletonError};
use crate::synthetic::{PlantGenerator, SyntheticPlant, YPlant};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Grasp(#[from] GraspError),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Input(String),
}

/// Process exit codes shared by every command.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION_FAILED: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const EMPTY: i32 = 3;
    pub const RESOURCE_CAP: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
}

fn der_exit_code(e: &DerError) -> i32 {
    match e {
        DerError::NewtonDivergence { .. } | DerError::SingularSystem { .. } => exit::DIVERGENCE,
        _ => exit::INPUT,
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Fusion(FusionError::EmptyCloud | FusionError::NoClusters) => exit::EMPTY,
            PipelineError::Fusion(FusionError::GridTooLarge { .. }) => exit::RESOURCE_CAP,
            PipelineError::Skeleton(SkeletonError::EmptySkeleton) => exit::EMPTY,
            PipelineError::Grasp(GraspError::EmptySkeleton) => exit::INPUT,
            PipelineError::Der(e) => der_exit_code(e),
            PipelineError::Bench(BenchError::Der(e)) => der_exit_code(e),
            PipelineError::Bench(BenchError::Simulation { source, .. }) => der_exit_code(source),
            _ => exit::INPUT,
        }
    }

    /// Newton residual history when the error is a divergence.
    pub fn residuals(&self) -> Option<&[f64]> {
        let der = match self {
            PipelineError::Der(e) | PipelineError::Bench(BenchError::Der(e)) => e,
            PipelineError::Bench(BenchError::Simulation { source, .. }) => source,
            _ => return None,
        };
        match der {
            DerError::NewtonDivergence { residuals, .. } => Some(residuals),
            _ => None,
        }
    }
}

pub fn fuse(views: &[DepthView], cfg: &FusionConfig) -> Result<PointCloud, PipelineError> {
    let icp = cfg.icp.then_some(&cfg.icp_params);
    Ok(fusion::fuse_views(views, icp)?)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub skeleton: SimplifiedSkeleton,
    pub mst: MstOutcome,
    pub downsampled_points: usize,
    pub cluster_points: usize,
    pub grid_dims: [usize; 3],
    pub occupied_voxels: usize,
}

/// Downsampling, dominant cluster, voxelization and skeleton extraction.
pub fn reconstruct(cloud: &PointCloud, fusion_cfg: &FusionConfig, skel_cfg: &SkeletonConfig) -> Result<Reconstruction, PipelineError> {
    let cost = edge_cost_registry().build(&skel_cfg.edge_cost)?;
    let down = fusion::voxel_downsample(cloud, fusion_cfg.downsample_cell_m)?;
    let cluster = fusion::largest_cluster(&down, fusion_cfg.dbscan_eps(), fusion_cfg.dbscan_min_pts)?;
    let grid = fusion::voxelize(&cluster, skel_cfg.resolution_m, skel_cfg.max_grid_dim)?;
    let (skeleton, mst) = skeletonize_grid(&grid, skel_cfg.knn_k, cost.as_ref())?;
    Ok(Reconstruction {
        skeleton,
        mst,
        downsampled_points: down.len(),
        cluster_points: cluster.len(),
        grid_dims: grid.dims(),
        occupied_voxels: grid.count(),
    })
}

pub fn plan(skeleton: &SimplifiedSkeleton, cfg: &PipelineConfig) -> Result<GraspPlan, PipelineError> {
    if skeleton.segments.is_empty() {
        return Err(GraspError::EmptySkeleton.into());
    }
    Ok(plan_grasp(skeleton, &cfg.grasp)?)
}

pub fn rod_network(skeleton: &SimplifiedSkeleton, cfg: &PipelineConfig) -> Result<(RodNetwork, SkeletonRodMap), PipelineError> {
    Ok(RodNetwork::from_skeleton_mapped(skeleton, cfg.material, cfg.rod.max_edge_m)?)
}

/// A rod network with the grasp node, approach direction and flower node
/// taken from a skeleton's grasp plan.
#[derive(Debug, Clone)]
pub struct PlantRig {
    pub network: RodNetwork,
    pub map: SkeletonRodMap,
    pub grasp: GraspPlan,
    pub grasp_node: usize,
    pub approach: Vec3,
    pub flower_node: usize,
}

/// `flower` is a skeleton node id; it becomes the matching rod node.
pub fn plant_rig(skeleton: &SimplifiedSkeleton, flower: usize, cfg: &PipelineConfig) -> Result<PlantRig, PipelineError> {
    if flower >= skeleton.nodes.len() {
        return Err(PipelineError::Input(format!("flower node {flower} is not a skeleton node")));
    }
    let grasp = plan(skeleton, cfg)?;
    let (network, map) = rod_network(skeleton, cfg)?;
    let grasp_node = network.nearest_node(&Vec3::from(grasp.pose.position_m));
    let flower_node = map.node_of[flower];
    Ok(PlantRig {
        approach: Vec3::from(grasp.pose.approach),
        network,
        map,
        grasp,
        grasp_node,
        flower_node,
    })
}

pub const DEMO_AMPLITUDE_M: f64 = 0.003;
pub const DEMO_FREQUENCY_HZ: f64 = 5.0;
pub const DEMO_DURATION_S: f64 = 0.5;

/// A short run shaking `plant` at its planned grasp and recording the grasp and flower nodes.
pub fn plant_demo(plant: &SyntheticPlant, cfg: &PipelineConfig) -> Result<(NetworkFile, SimConfig), PipelineError> {
    let rig = plant_rig(&plant.ground_truth(), plant.flower_node(), cfg)?;
    let sim = SimConfig {
        duration_s: DEMO_DURATION_S,
        actuation: Some(Actuation::new(rig.grasp_node, rig.approach, DEMO_AMPLITUDE_M, DEMO_FREQUENCY_HZ)),
        record: vec![rig.grasp_node, rig.flower_node],
        ..cfg.sim.clone()
    };
    Ok((rig.network.to_file(), sim))
}

/// The documented demo run: the synthetic Y-plant with default settings.
pub fn demo_setup() -> Result<(NetworkFile, SimConfig), PipelineError> {
    plant_demo(&YPlant::default().generate(), &PipelineConfig::default())
}
