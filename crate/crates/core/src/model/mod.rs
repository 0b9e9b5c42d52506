//! Bipartite graph network: configuration, parameter construction, and the
//! encode/process/decode forward pass.

pub mod build;
pub mod config;
pub mod forward;

pub use build::{init_model_params, ATTENTION_INIT_SCALE};
pub use config::{AggregatorKind, HierarchyConfig, ModelConfig};
pub use forward::{
    decode, encode, model_forward, processor_layer, EncodedLatents, GraphTensors, LatentState,
    LayerOutput, LayerTopology, ModelOutput,
};
