//! Bipartite graph representation of blank states.
//!
//! Mesh nodes and membrane elements form the two vertex families; each
//! element exchanges messages with its four corner nodes along shared
//! directed edges. Features carry the most recent displacement increments,
//! boundary flags, per-tool contact geometry, element thinning, relative
//! edge geometry in both the reference and current configuration, and the
//! punch stroke as a global. A dataset-wide [`FeatureScaler`] standardises
//! every channel except flags and unit normals.

pub mod features;
pub mod scaler;

pub use features::{
    assemble_graph, build_graph, element_centers, BipartiteGraph, ContactConfig, GraphTargets,
};
pub use scaler::{FeatureScaler, GroupStats};
