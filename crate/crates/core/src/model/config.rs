//! Model architecture configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ContactConfig;
use crate::nn::MlpSpec;

/// How messages are weighted when aggregating edges at a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    /// Unweighted mean, `alpha = 1 / indegree`; no learned parameters.
    MeanVanilla,
    /// Score from an affine map of the concatenated receiver and source
    /// vertex latents with leaky rectification, then per-receiver softmax.
    GatStyle,
    /// Scaled dot-product attention whose key comes from the source vertex
    /// latent.
    CrossAttSourceKey,
    /// Scaled dot-product attention whose key comes from the directed edge
    /// latent entering the layer (the pre-update state).
    CrossAttEdgeKey,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [
        AggregatorKind::MeanVanilla,
        AggregatorKind::GatStyle,
        AggregatorKind::CrossAttSourceKey,
        AggregatorKind::CrossAttEdgeKey,
    ];

    /// Stable lowercase name used in CSV reports and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::MeanVanilla => "mean_vanilla",
            AggregatorKind::GatStyle => "gat_style",
            AggregatorKind::CrossAttSourceKey => "cross_att_source_key",
            AggregatorKind::CrossAttEdgeKey => "cross_att_edge_key",
        }
    }

    /// Whether the aggregator carries learned attention parameters.
    pub fn has_attention(&self) -> bool {
        !matches!(self, AggregatorKind::MeanVanilla)
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown aggregator `{s}`")))
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// U-shaped multi-level configuration; absent means a flat processor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    /// Number of coarse levels below the input graph; zero degenerates to
    /// the flat model with `fine_layers + coarse_layers` layers.
    pub levels: usize,
    /// Vertex-count ratio kept per coarsening step.
    pub ratio: f64,
    /// Processor layers applied on the input-resolution graph.
    pub fine_layers: usize,
    /// Processor layers applied on the coarsest graph.
    pub coarse_layers: usize,
    /// Nearest coarse neighbours each fine vertex maps to between levels.
    pub k_nn: usize,
    /// Coarse elements connect to this many nearest coarse nodes.
    pub k_elem: usize,
    /// One transfer matrix per level instead of one per inter-level edge.
    pub shared_transfer: bool,
    /// Seed of the farthest-point coarsening.
    pub seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            levels: 1,
            ratio: 0.25,
            fine_layers: 2,
            coarse_layers: 10,
            k_nn: 3,
            k_elem: 4,
            shared_transfer: false,
            seed: 0,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Parameter(format!(
                "coarsening ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.k_nn == 0 || self.k_elem == 0 {
            return Err(Error::Parameter(
                "inter-level and element neighbour counts must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Architecture of the surrogate network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent width shared by every encoder, update MLP, and attention
    /// projection.
    pub hidden: usize,
    /// Processor layers of the flat model; ignored when `hierarchy` is set.
    pub layers: usize,
    pub aggregator: AggregatorKind,
    /// Contact-feature layout the model was built for.
    pub contact: ContactConfig,
    /// Reuse one set of layer parameters for every processor layer.
    pub shared_layers: bool,
    pub hierarchy: Option<HierarchyConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            layers: 20,
            aggregator: AggregatorKind::CrossAttEdgeKey,
            contact: ContactConfig::default(),
            shared_layers: false,
            hierarchy: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Parameter("latent width must be at least 1".to_string()));
        }
        if let Some(h) = &self.hierarchy {
            h.validate()?;
        }
        Ok(())
    }

    /// Total processor layers executed in one forward pass.
    pub fn total_layers(&self) -> usize {
        match &self.hierarchy {
            Some(h) => h.fine_layers + h.coarse_layers,
            None => self.layers,
        }
    }

    /// Number of distinct layer-parameter groups to register.
    pub fn distinct_layers(&self) -> usize {
        let total = self.total_layers();
        if self.shared_layers {
            total.min(1)
        } else {
            total
        }
    }

    /// Parameter prefix of the `l`-th executed processor layer.
    pub fn layer_prefix(&self, l: usize) -> String {
        if self.shared_layers {
            "proc0".to_string()
        } else {
            format!("proc{l}")
        }
    }

    pub fn node_enc_spec(&self) -> MlpSpec {
        MlpSpec::standard(crate::graph::features::NODE_CHANNELS, self.hidden, self.hidden, true)
    }

    pub fn contact_enc_spec(&self) -> MlpSpec {
        MlpSpec::standard(self.contact.block_channels(), self.hidden, self.hidden, true)
    }

    pub fn elem_enc_spec(&self) -> MlpSpec {
        MlpSpec::standard(crate::graph::features::ELEMENT_CHANNELS, self.hidden, self.hidden, true)
    }

    pub fn edge_enc_spec(&self) -> MlpSpec {
        MlpSpec::standard(crate::graph::features::EDGE_CHANNELS, self.hidden, self.hidden, true)
    }

    pub fn global_enc_spec(&self) -> MlpSpec {
        MlpSpec::standard(crate::graph::features::GLOBAL_CHANNELS, self.hidden, self.hidden, true)
    }

    /// Node-to-element edge update: source node latent, the source node's
    /// contact latents, and the edge latent itself.
    pub fn edge_vi_spec(&self) -> MlpSpec {
        let inputs = (2 + self.contact.num_blocks()) * self.hidden;
        MlpSpec::standard(inputs, self.hidden, self.hidden, true)
    }

    /// Element update: element latent and the aggregated edge message.
    pub fn elem_update_spec(&self) -> MlpSpec {
        MlpSpec::standard(2 * self.hidden, self.hidden, self.hidden, true)
    }

    /// Element-to-node edge update: updated element latent, receiver node
    /// latent, and the edge latent itself.
    pub fn edge_iv_spec(&self) -> MlpSpec {
        MlpSpec::standard(3 * self.hidden, self.hidden, self.hidden, true)
    }

    /// Node update: node latent, aggregated edge message, global latent.
    pub fn node_update_spec(&self) -> MlpSpec {
        MlpSpec::standard(3 * self.hidden, self.hidden, self.hidden, true)
    }

    /// Node decoder input: final and encoded node latents plus the
    /// contact latents, in that order.
    pub fn node_dec_spec(&self) -> MlpSpec {
        let inputs = (2 + self.contact.num_blocks()) * self.hidden;
        MlpSpec::standard(inputs, self.hidden, 3, false)
    }

    /// Element decoder input: final and encoded element latents.
    pub fn elem_dec_spec(&self) -> MlpSpec {
        MlpSpec::standard(2 * self.hidden, self.hidden, 1, false)
    }
}
