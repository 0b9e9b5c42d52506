//! Multi-level graph machinery: farthest-point coarsening, exact
//! nearest-neighbour maps between levels, learnable transfer operators,
//! and the U-shaped forward pass that runs processor layers on the finest
//! and coarsest graphs.

pub mod coarsen;
pub mod forward;
pub mod knn;
pub mod transfer;

pub use coarsen::{
    build_hierarchy, build_knn_map, coarse_edge_descriptors, farthest_point_sample, GraphHierarchy,
    GraphLevel, InterLevelMap, TransferMap, MIN_LEVEL_VERTICES,
};
pub use forward::hierarchical_forward;
pub use knn::{brute_force_knn, KdTree};
pub use transfer::{
    downsample, downsample_linear, init_hierarchical_params, init_transfer_params, upsample,
    upsample_linear,
};
