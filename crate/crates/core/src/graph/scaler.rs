//! Dataset-wide channel standardisation.
//!
//! Every feature channel is shifted and scaled to zero mean and unit
//! variance over the training transitions, except flag channels (clamp
//! indicators) and unit normals, which pass through unchanged. Targets are
//! standardised with their own statistics so losses live in a comparable
//! space; predictions are mapped back through the same statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::features::{BipartiteGraph, ContactConfig, GraphTargets};
use crate::nn::Mat;

/// Smallest standard deviation used for scaling; constant channels map
/// to zero instead of blowing up.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel statistics for one feature block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
    /// Channels forwarded unchanged (flags, unit normals).
    pub identity: Vec<bool>,
}

impl GroupStats {
    /// Fits statistics over the rows of a set of matrices that all share
    /// the channel layout. Identity channels keep mean 0 and std 1.
    pub fn fit(mats: &[&Mat<f64>], identity: &[bool]) -> Result<GroupStats> {
        let channels = identity.len();
        let mut sum = vec![0.0; channels];
        let mut sum_sq = vec![0.0; channels];
        let mut count = 0u64;
        for m in mats {
            if m.cols() != channels {
                return Err(Error::shape(
                    "GroupStats::fit",
                    format!("expected {channels} channels, got {}", m.cols()),
                ));
            }
            for r in 0..m.rows() {
                for (c, &x) in m.row(r).iter().enumerate() {
                    sum[c] += x;
                    sum_sq[c] += x * x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Contract("cannot fit a scaler on zero rows".to_string()));
        }
        let n = count as f64;
        let mut mean = vec![0.0; channels];
        let mut std = vec![1.0; channels];
        for c in 0..channels {
            if identity[c] {
                continue;
            }
            mean[c] = sum[c] / n;
            let var = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            std[c] = var.sqrt().max(STD_FLOOR);
        }
        Ok(GroupStats { mean, std, identity: identity.to_vec() })
    }

    pub fn channels(&self) -> usize {
        self.identity.len()
    }

    /// `(x - mean) / std` per channel; identity channels pass through.
    pub fn standardize(&self, m: &Mat<f64>) -> Result<Mat<f64>> {
        self.apply(m, |x, mean, std| (x - mean) / std)
    }

    /// Inverse map back to physical units.
    pub fn unstandardize(&self, m: &Mat<f64>) -> Result<Mat<f64>> {
        self.apply(m, |x, mean, std| x * std + mean)
    }

    fn apply(&self, m: &Mat<f64>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Mat<f64>> {
        if m.cols() != self.channels() {
            return Err(Error::shape(
                "GroupStats::apply",
                format!("expected {} channels, got {}", self.channels(), m.cols()),
            ));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..self.mean.len() {
                if !self.identity[c] {
                    row[c] = f(row[c], self.mean[c], self.std[c]);
                }
            }
        }
        Ok(out)
    }
}

/// Standardisation statistics for every feature block of a graph sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    /// Contact layout the statistics were fitted for.
    pub contact_config: ContactConfig,
    pub node: GroupStats,
    pub contact: Vec<GroupStats>,
    pub element: GroupStats,
    pub edge: GroupStats,
    pub global: GroupStats,
    pub target_node: GroupStats,
    pub target_element: GroupStats,
}

impl FeatureScaler {
    /// Fits all statistics over a set of training samples.
    ///
    /// Identity channels: the three clamp flags of the node block and the
    /// unit-normal components of each contact block.
    pub fn fit(
        samples: &[(BipartiteGraph, GraphTargets)],
        contact_config: ContactConfig,
    ) -> Result<FeatureScaler> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Contract("cannot fit a scaler on zero samples".to_string()))?;
        let blocks = first.0.contact_feats.len();
        if blocks != contact_config.num_blocks() {
            return Err(Error::Contract(format!(
                "graphs carry {blocks} contact blocks but the layout expects {}",
                contact_config.num_blocks()
            )));
        }

        let node_mats: Vec<&Mat<f64>> = samples.iter().map(|(g, _)| &g.node_feats).collect();
        let node_identity = [false, false, false, true, true, true];
        let node = GroupStats::fit(&node_mats, &node_identity)?;

        let mut contact_identity = vec![false; contact_config.block_channels()];
        contact_identity[1..4].fill(true);
        let mut contact = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let mats: Vec<&Mat<f64>> = samples.iter().map(|(g, _)| &g.contact_feats[b]).collect();
            contact.push(GroupStats::fit(&mats, &contact_identity)?);
        }

        let elem_mats: Vec<&Mat<f64>> = samples.iter().map(|(g, _)| &g.elem_feats).collect();
        let element = GroupStats::fit(&elem_mats, &[false])?;

        let edge_mats: Vec<&Mat<f64>> = samples.iter().map(|(g, _)| &g.edge_feats).collect();
        let edge = GroupStats::fit(&edge_mats, &[false; 8])?;

        let global_mats: Vec<&Mat<f64>> = samples.iter().map(|(g, _)| &g.global_feats).collect();
        let global = GroupStats::fit(&global_mats, &[false])?;

        let tn_mats: Vec<&Mat<f64>> = samples.iter().map(|(_, t)| &t.node_increments).collect();
        let target_node = GroupStats::fit(&tn_mats, &[false; 3])?;

        let te_mats: Vec<&Mat<f64>> = samples.iter().map(|(_, t)| &t.elem_thinning).collect();
        let target_element = GroupStats::fit(&te_mats, &[false])?;

        Ok(FeatureScaler {
            contact_config,
            node,
            contact,
            element,
            edge,
            global,
            target_node,
            target_element,
        })
    }

    /// Standardises every input block of a graph.
    pub fn transform_graph(&self, graph: &BipartiteGraph) -> Result<BipartiteGraph> {
        if graph.contact_feats.len() != self.contact.len() {
            return Err(Error::Contract(format!(
                "graph carries {} contact blocks, scaler was fitted on {}",
                graph.contact_feats.len(),
                self.contact.len()
            )));
        }
        let mut out = graph.clone();
        out.node_feats = self.node.standardize(&graph.node_feats)?;
        for (b, stats) in self.contact.iter().enumerate() {
            out.contact_feats[b] = stats.standardize(&graph.contact_feats[b])?;
        }
        out.elem_feats = self.element.standardize(&graph.elem_feats)?;
        out.edge_feats = self.edge.standardize(&graph.edge_feats)?;
        out.global_feats = self.global.standardize(&graph.global_feats)?;
        Ok(out)
    }

    /// Standardises a target pair.
    pub fn transform_targets(&self, targets: &GraphTargets) -> Result<GraphTargets> {
        Ok(GraphTargets {
            node_increments: self.target_node.standardize(&targets.node_increments)?,
            elem_thinning: self.target_element.standardize(&targets.elem_thinning)?,
        })
    }

    /// Maps standardised predictions back to physical units.
    pub fn untransform_predictions(
        &self,
        node_increments: &Mat<f64>,
        elem_thinning: &Mat<f64>,
    ) -> Result<(Mat<f64>, Mat<f64>)> {
        Ok((
            self.target_node.unstandardize(node_increments)?,
            self.target_element.unstandardize(elem_thinning)?,
        ))
    }
}
