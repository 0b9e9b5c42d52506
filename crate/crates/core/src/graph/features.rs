//! Assembly of bipartite graph features from blank states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::geom::{norm, sub, V3};
use crate::fe::{BlankMesh, ToolSet, Trajectory, NUM_TOOLS, NUM_TRANSITIONS};
use crate::nn::Mat;

/// Channels of the node feature block: displacement increment plus
/// per-axis clamp flags.
pub const NODE_CHANNELS: usize = 6;
/// Channels of the element feature block: thinning.
pub const ELEMENT_CHANNELS: usize = 1;
/// Channels of the shared directed edge features: reference and current
/// relative geometry, each a distance plus an offset vector.
pub const EDGE_CHANNELS: usize = 8;
/// Channels of the global feature block: total punch stroke.
pub const GLOBAL_CHANNELS: usize = 1;

/// How node-tool contact geometry enters the node-side features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactConfig {
    /// One feature block per tool when set; otherwise a single block
    /// describing the nearest tool only.
    pub split_tools: bool,
    /// Append a bounded inverse-distance channel `1 / (max(d, 0) + eps)`
    /// to each block.
    pub inverse_gap: bool,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig { split_tools: true, inverse_gap: true }
    }
}

impl ContactConfig {
    /// Number of contact feature blocks on each node.
    pub fn num_blocks(&self) -> usize {
        if self.split_tools {
            NUM_TOOLS
        } else {
            1
        }
    }

    /// Channels per contact block: signed gap, unit normal, and optionally
    /// the inverse-gap channel.
    pub fn block_channels(&self) -> usize {
        4 + usize::from(self.inverse_gap)
    }

    /// Softening length of the inverse-gap channel, tied to the blank size
    /// so the channel stays bounded as contact closes.
    pub fn gap_epsilon(&self, blank_side: f64) -> f64 {
        1e-3 * blank_side
    }
}

/// One blank state encoded as a bipartite graph.
///
/// Mesh nodes and elements are the two vertex families. Every element is
/// connected to its four corner nodes; edge `4 * e + a` joins element `e`
/// and the node at its corner `a`. The same edge feature row serves both
/// message directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub num_nodes: usize,
    pub num_elements: usize,
    /// `[num_nodes, 6]`: displacement increment, then clamp flags.
    pub node_feats: Mat<f64>,
    /// Per-block `[num_nodes, 4]` or `[num_nodes, 5]` contact features in
    /// tool order, or a single nearest-tool block.
    pub contact_feats: Vec<Mat<f64>>,
    /// `[num_elements, 1]`: thinning.
    pub elem_feats: Mat<f64>,
    /// `[4 * num_elements, 8]` shared directed edge features.
    pub edge_feats: Mat<f64>,
    /// Node endpoint of each edge.
    pub edge_nodes: Vec<usize>,
    /// Element endpoint of each edge.
    pub edge_elems: Vec<usize>,
    /// Number of incident edges per node (elements touching it).
    pub node_degree: Vec<usize>,
    /// `[1, 1]`: total punch stroke of the case.
    pub global_feats: Mat<f64>,
}

/// Ground-truth outputs paired with a graph: what the blank does next.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTargets {
    /// `[num_nodes, 3]` nodal displacement increments to the next state.
    pub node_increments: Mat<f64>,
    /// `[num_elements, 1]` thinning at the next state.
    pub elem_thinning: Mat<f64>,
}

/// Centroid of each quad, the element-side anchor for edge geometry.
pub fn element_centers(positions: &[V3], quads: &[[usize; 4]]) -> Vec<V3> {
    quads
        .iter()
        .map(|q| {
            let mut c = [0.0; 3];
            for &n in q {
                for k in 0..3 {
                    c[k] += positions[n][k];
                }
            }
            [c[0] / 4.0, c[1] / 4.0, c[2] / 4.0]
        })
        .collect()
}

/// Builds the graph for one blank state.
///
/// `increments` is the displacement applied by the step that produced
/// `positions` (zero at the initial state), `thinning` the current
/// per-element thinning, and `stroke_fraction` the punch travel fraction
/// used to evaluate contact gaps and normals. Edge geometry compares the
/// reference mesh against `positions`.
#[allow(clippy::too_many_arguments)]
pub fn build_graph(
    mesh: &BlankMesh,
    tools: &ToolSet,
    positions: &[V3],
    increments: &[V3],
    thinning: &[f64],
    stroke_fraction: f64,
    config: ContactConfig,
) -> Result<BipartiteGraph> {
    let num_nodes = mesh.positions.len();
    let num_elements = mesh.quads.len();
    if positions.len() != num_nodes || increments.len() != num_nodes {
        return Err(Error::Contract(format!(
            "graph state arrays must cover {num_nodes} nodes, got {} positions and {} increments",
            positions.len(),
            increments.len()
        )));
    }
    if thinning.len() != num_elements {
        return Err(Error::Contract(format!(
            "thinning must cover {num_elements} elements, got {}",
            thinning.len()
        )));
    }

    let mut node_feats = Mat::zeros(num_nodes, NODE_CHANNELS);
    for n in 0..num_nodes {
        let row = node_feats.row_mut(n);
        for k in 0..3 {
            row[k] = increments[n][k];
            row[3 + k] = if mesh.boundary[n][k] { 1.0 } else { 0.0 };
        }
    }

    let snapshot = tools.contact_snapshot(positions, stroke_fraction)?;
    let contact_feats = contact_blocks(&snapshot.gap, &snapshot.normal, mesh.side, config);

    let mut elem_feats = Mat::zeros(num_elements, ELEMENT_CHANNELS);
    for e in 0..num_elements {
        elem_feats.row_mut(e)[0] = thinning[e];
    }

    let ref_centers = element_centers(&mesh.positions, &mesh.quads);
    let cur_centers = element_centers(positions, &mesh.quads);
    let num_edges = 4 * num_elements;
    let mut edge_feats = Mat::zeros(num_edges, EDGE_CHANNELS);
    let mut edge_nodes = Vec::with_capacity(num_edges);
    let mut edge_elems = Vec::with_capacity(num_edges);
    let mut node_degree = vec![0usize; num_nodes];
    for (e, quad) in mesh.quads.iter().enumerate() {
        for (a, &n) in quad.iter().enumerate() {
            let row = edge_feats.row_mut(4 * e + a);
            let d0 = sub(mesh.positions[n], ref_centers[e]);
            let dc = sub(positions[n], cur_centers[e]);
            row[0] = norm(d0);
            row[1..4].copy_from_slice(&d0);
            row[4] = norm(dc);
            row[5..8].copy_from_slice(&dc);
            edge_nodes.push(n);
            edge_elems.push(e);
            node_degree[n] += 1;
        }
    }

    let mut global_feats = Mat::zeros(1, GLOBAL_CHANNELS);
    global_feats.row_mut(0)[0] = tools.punch.stroke;

    Ok(BipartiteGraph {
        num_nodes,
        num_elements,
        node_feats,
        contact_feats,
        elem_feats,
        edge_feats,
        edge_nodes,
        edge_elems,
        node_degree,
        global_feats,
    })
}

/// Encodes per-node contact geometry into feature blocks.
fn contact_blocks(
    gap: &[[f64; NUM_TOOLS]],
    normal: &[[V3; NUM_TOOLS]],
    blank_side: f64,
    config: ContactConfig,
) -> Vec<Mat<f64>> {
    let eps = config.gap_epsilon(blank_side);
    let channels = config.block_channels();
    let num_nodes = gap.len();
    let fill = |block: &mut Mat<f64>, n: usize, d: f64, nrm: V3| {
        let row = block.row_mut(n);
        row[0] = d;
        row[1..4].copy_from_slice(&nrm);
        if config.inverse_gap {
            row[4] = 1.0 / (d.max(0.0) + eps);
        }
    };
    if config.split_tools {
        let mut blocks: Vec<Mat<f64>> =
            (0..NUM_TOOLS).map(|_| Mat::zeros(num_nodes, channels)).collect();
        for n in 0..num_nodes {
            for t in 0..NUM_TOOLS {
                fill(&mut blocks[t], n, gap[n][t], normal[n][t]);
            }
        }
        blocks
    } else {
        // Single block: keep only the tool the node is closest to.
        let mut block = Mat::zeros(num_nodes, channels);
        for n in 0..num_nodes {
            let mut best = 0;
            for t in 1..NUM_TOOLS {
                if gap[n][t] < gap[n][best] {
                    best = t;
                }
            }
            fill(&mut block, n, gap[n][best], normal[n][best]);
        }
        vec![block]
    }
}

/// Builds the training pair for transition `k -> k + 1` of a recorded
/// trajectory: the graph at snapshot `k` plus the increments and thinning
/// observed at `k + 1`.
pub fn assemble_graph(
    traj: &Trajectory,
    k: usize,
    config: ContactConfig,
) -> Result<(BipartiteGraph, GraphTargets)> {
    if k >= NUM_TRANSITIONS {
        return Err(Error::Contract(format!(
            "transition index {k} out of range, trajectories have {NUM_TRANSITIONS} transitions"
        )));
    }
    traj.validate()?;
    let graph = build_graph(
        &traj.mesh,
        &traj.tools,
        &traj.positions[k],
        &traj.increments[k],
        &traj.thinning[k],
        k as f64 / NUM_TRANSITIONS as f64,
        config,
    )?;
    let num_nodes = graph.num_nodes;
    let num_elements = graph.num_elements;
    let mut node_increments = Mat::zeros(num_nodes, 3);
    for n in 0..num_nodes {
        node_increments.row_mut(n).copy_from_slice(&traj.increments[k + 1][n]);
    }
    let mut elem_thinning = Mat::zeros(num_elements, 1);
    for e in 0..num_elements {
        elem_thinning.row_mut(e)[0] = traj.thinning[k + 1][e];
    }
    Ok((graph, GraphTargets { node_increments, elem_thinning }))
}
