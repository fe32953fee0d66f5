//! Curve skeletons of voxelized plants.
//!
//! The occupancy grid is thinned to a one-voxel-wide skeleton, every skeleton
//! voxel gets a radius from the Euclidean distance transform, a weighted KNN
//! graph is reduced to its minimum spanning tree, and the tree is collapsed into
//! junctions, endpoints and polyline segments.

mod edt;
pub mod graph;
mod grid;
mod simplify;
mod thin;

use thiserror::Error;

pub use edt::edt;
pub use graph::{
    build_graph, edge_cost_registry, mst, spanning_forest, EdgeCost, Euclidean, MstOutcome, SkeletonEdge, SkeletonGraph,
    SkeletonVertex, ThickVertical,
};
pub use grid::{DistanceField, VoxelGrid};
pub use simplify::{simplify, SimplifiedSkeleton, SkeletonNode, SkeletonSegment};
pub use thin::{is_removable, is_simple, max_neighbour_count, removable_voxels, thin};

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not a tree: {0}")]
    NotATree(String),
}

/// Runs thinning through simplification on an occupancy grid.
pub fn skeletonize_grid(grid: &VoxelGrid, k: usize, cost: &dyn EdgeCost) -> Result<(SimplifiedSkeleton, MstOutcome), SkeletonError> {
    grid.validate()?;
    let dist = edt(grid);
    let skel = thin(grid);
    let graph = build_graph(&skel, &dist, k, cost)?;
    let tree = mst(&graph)?;
    let simplified = simplify(&tree.tree)?;
    Ok((simplified, tree))
}
