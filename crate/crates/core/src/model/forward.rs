//! Forward evaluation: encode, residual message passing, decode.

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::model::config::{AggregatorKind, ModelConfig};
use crate::nn::{affine_forward, mlp_forward, Mat, ParamSet, Scalar, Tape, Var, LEAKY_SLOPE};

/// Graph feature blocks cast to the working precision, ready for the tape.
#[derive(Debug, Clone)]
pub struct GraphTensors<F> {
    pub num_nodes: usize,
    pub num_elements: usize,
    pub node: Mat<F>,
    pub contact: Vec<Mat<F>>,
    pub elem: Mat<F>,
    pub edge: Mat<F>,
    pub global: Mat<F>,
    pub edge_nodes: Vec<usize>,
    pub edge_elems: Vec<usize>,
    /// Standardised descriptors of the coarsest level's bipartite edges;
    /// required by the multi-level forward pass, ignored by the flat one.
    pub coarse_edge: Option<Mat<F>>,
}

impl<F: Scalar> GraphTensors<F> {
    /// Casts an (already standardised) graph into the working precision.
    pub fn from_graph(g: &BipartiteGraph) -> GraphTensors<F> {
        GraphTensors {
            num_nodes: g.num_nodes,
            num_elements: g.num_elements,
            node: g.node_feats.cast(),
            contact: g.contact_feats.iter().map(Mat::cast).collect(),
            elem: g.elem_feats.cast(),
            edge: g.edge_feats.cast(),
            global: g.global_feats.cast(),
            edge_nodes: g.edge_nodes.clone(),
            edge_elems: g.edge_elems.clone(),
            coarse_edge: None,
        }
    }

    /// Attaches coarsest-level edge descriptors for a multi-level forward.
    pub fn with_coarse_edges(mut self, edge: Mat<F>) -> GraphTensors<F> {
        self.coarse_edge = Some(edge);
        self
    }
}

/// Connectivity view a processor layer runs over; the hierarchy substitutes
/// coarse-level index lists here.
#[derive(Debug, Clone, Copy)]
pub struct LayerTopology<'a> {
    pub edge_nodes: &'a [usize],
    pub edge_elems: &'a [usize],
    pub num_nodes: usize,
    pub num_elements: usize,
}

impl<'a, F: Scalar> From<&'a GraphTensors<F>> for LayerTopology<'a> {
    fn from(t: &'a GraphTensors<F>) -> Self {
        LayerTopology {
            edge_nodes: &t.edge_nodes,
            edge_elems: &t.edge_elems,
            num_nodes: t.num_nodes,
            num_elements: t.num_elements,
        }
    }
}

/// Latents produced by the encoders, kept for decoder skip connections.
#[derive(Debug, Clone)]
pub struct EncodedLatents {
    pub node: Var,
    pub contact: Vec<Var>,
    pub elem: Var,
    pub edge: Var,
    pub global: Var,
}

/// Latents threaded through the processor layers.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub node: Var,
    pub elem: Var,
    /// Node-to-element directed edge latents.
    pub edge_vi: Var,
    /// Element-to-node directed edge latents.
    pub edge_iv: Var,
}

/// One processor layer's result plus its aggregation weights.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub state: LatentState,
    /// Per-edge weights used when aggregating onto elements, `[4E, 1]`.
    pub elem_attention: Var,
    /// Per-edge weights used when aggregating onto nodes, `[4E, 1]`.
    pub node_attention: Var,
}

/// Full forward result in standardised output space.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// Predicted displacement increments, `[V, 3]`.
    pub node_out: Var,
    /// Predicted thinning, `[E, 1]`.
    pub elem_out: Var,
    pub encoded: EncodedLatents,
    pub final_state: LatentState,
    /// Element-side aggregation weights of the last executed layer
    /// (uniform when no layer ran).
    pub elem_attention: Var,
    /// Original element index behind each row of `elem_attention`.
    pub attention_elems: Vec<usize>,
    /// Original node index behind each row of `elem_attention`.
    pub attention_nodes: Vec<usize>,
}

/// Applies the seven feature encoders.
pub fn encode<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    t: &GraphTensors<F>,
) -> Result<EncodedLatents> {
    if t.contact.len() != config.contact.num_blocks() {
        return Err(Error::Contract(format!(
            "graph carries {} contact blocks, model expects {}",
            t.contact.len(),
            config.contact.num_blocks()
        )));
    }
    let node_in = tape.constant(t.node.clone())?;
    let node = mlp_forward(tape, params, "enc.node", &config.node_enc_spec(), node_in)?;
    let mut contact = Vec::with_capacity(t.contact.len());
    for (i, block) in t.contact.iter().enumerate() {
        let c_in = tape.constant(block.clone())?;
        contact.push(mlp_forward(
            tape,
            params,
            &format!("enc.contact{i}"),
            &config.contact_enc_spec(),
            c_in,
        )?);
    }
    let elem_in = tape.constant(t.elem.clone())?;
    let elem = mlp_forward(tape, params, "enc.elem", &config.elem_enc_spec(), elem_in)?;
    // One edge encoder: both directed edge sets share descriptors, so they
    // also share this single encoded latent as their starting state.
    let edge_in = tape.constant(t.edge.clone())?;
    let edge = mlp_forward(tape, params, "enc.edge", &config.edge_enc_spec(), edge_in)?;
    let global_in = tape.constant(t.global.clone())?;
    let global = mlp_forward(tape, params, "enc.global", &config.global_enc_spec(), global_in)?;
    Ok(EncodedLatents { node, contact, elem, edge, global })
}

/// Incoming-edge counts per receiver, used by the unweighted mean.
fn receiver_degrees(edge_recv: &[usize], num_receivers: usize) -> Vec<usize> {
    let mut deg = vec![0usize; num_receivers];
    for &r in edge_recv {
        deg[r] += 1;
    }
    deg
}

/// Computes per-edge aggregation weights for one site.
///
/// `recv_latent` belongs to the receivers (they supply the query),
/// `src_latent` to the sources, and `key_edge` is the directed edge latent
/// as it entered the layer (the pre-update state).
#[allow(clippy::too_many_arguments)]
fn aggregation_weights<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    att_prefix: &str,
    recv_latent: Var,
    src_latent: Var,
    key_edge: Var,
    edge_src: &[usize],
    edge_recv: &[usize],
    num_receivers: usize,
) -> Result<Var> {
    match config.aggregator {
        AggregatorKind::MeanVanilla => {
            let deg = receiver_degrees(edge_recv, num_receivers);
            let mut alpha = Mat::zeros(edge_recv.len(), 1);
            for (e, &r) in edge_recv.iter().enumerate() {
                alpha.set(e, 0, F::ONE / F::from_f64(deg[r] as f64));
            }
            tape.constant(alpha)
        }
        AggregatorKind::GatStyle => {
            let recv_g = tape.gather_rows(recv_latent, edge_recv)?;
            let src_g = tape.gather_rows(src_latent, edge_src)?;
            let cat = tape.concat_cols(&[recv_g, src_g])?;
            let score = affine_forward(tape, params, &format!("{att_prefix}.a"), cat)?;
            let score = tape.leaky_relu(score, F::from_f64(LEAKY_SLOPE))?;
            tape.segment_softmax(score, edge_recv)
        }
        AggregatorKind::CrossAttSourceKey | AggregatorKind::CrossAttEdgeKey => {
            let q = affine_forward(tape, params, &format!("{att_prefix}.q"), recv_latent)?;
            let q_g = tape.gather_rows(q, edge_recv)?;
            let key_in = match config.aggregator {
                AggregatorKind::CrossAttEdgeKey => key_edge,
                _ => {
                    let k_src = affine_forward(
                        tape,
                        params,
                        &format!("{att_prefix}.k"),
                        src_latent,
                    )?;
                    return finish_dot_attention(tape, q_g, k_src, Some(edge_src), edge_recv, config.hidden);
                }
            };
            let k = affine_forward(tape, params, &format!("{att_prefix}.k"), key_in)?;
            finish_dot_attention(tape, q_g, k, None, edge_recv, config.hidden)
        }
    }
}

/// Scaled dot-product scores and per-receiver softmax. `gather_src` is set
/// when the keys live on sources and must be expanded to edges first.
fn finish_dot_attention<F: Scalar>(
    tape: &mut Tape<F>,
    q_gathered: Var,
    keys: Var,
    gather_src: Option<&[usize]>,
    edge_recv: &[usize],
    hidden: usize,
) -> Result<Var> {
    let k_edges = match gather_src {
        Some(src) => tape.gather_rows(keys, src)?,
        None => keys,
    };
    let dot = tape.row_dot(q_gathered, k_edges)?;
    let scaled = tape.scale(dot, F::from_f64(1.0 / (hidden as f64).sqrt()))?;
    tape.segment_softmax(scaled, edge_recv)
}

/// Weighted sum of per-edge values onto receivers.
fn aggregate<F: Scalar>(
    tape: &mut Tape<F>,
    values: Var,
    alpha: Var,
    edge_recv: &[usize],
    num_receivers: usize,
) -> Result<Var> {
    let weighted = tape.mul_col_broadcast(values, alpha)?;
    tape.scatter_add_rows(weighted, edge_recv, num_receivers)
}

/// One residual message-passing layer (four substeps).
///
/// `contact` holds the contact latents of the nodes this topology indexes,
/// and `global` the `[1, H]` global latent; both come from the encoders.
#[allow(clippy::too_many_arguments)]
pub fn processor_layer<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    prefix: &str,
    topo: LayerTopology<'_>,
    contact: &[Var],
    global: Var,
    state: &LatentState,
) -> Result<LayerOutput> {
    // Step 1: node-to-element edge update from the source node latent, its
    // contact latents, and the edge's own latent.
    let src_node = tape.gather_rows(state.node, topo.edge_nodes)?;
    let mut parts = vec![src_node];
    for &c in contact {
        parts.push(tape.gather_rows(c, topo.edge_nodes)?);
    }
    parts.push(state.edge_vi);
    let vi_in = tape.concat_cols(&parts)?;
    let vi_msg = mlp_forward(tape, params, &format!("{prefix}.edge_vi"), &config.edge_vi_spec(), vi_in)?;
    let edge_vi = tape.add(state.edge_vi, vi_msg)?;

    // Step 2: aggregate updated edge latents onto elements; the query comes
    // from the receiving element, the key from the pre-update edge state or
    // the source node depending on the aggregator.
    let elem_attention = aggregation_weights(
        tape,
        params,
        config,
        &format!("{prefix}.att_elem"),
        state.elem,
        state.node,
        state.edge_vi,
        topo.edge_nodes,
        topo.edge_elems,
        topo.num_elements,
    )?;
    let elem_msg = aggregate(tape, edge_vi, elem_attention, topo.edge_elems, topo.num_elements)?;
    let elem_in = tape.concat_cols(&[state.elem, elem_msg])?;
    let elem_upd =
        mlp_forward(tape, params, &format!("{prefix}.elem"), &config.elem_update_spec(), elem_in)?;
    let elem = tape.add(state.elem, elem_upd)?;

    // Step 3: element-to-node edge update from the just-updated element
    // latent, the receiving node latent, and the edge's own latent.
    let src_elem = tape.gather_rows(elem, topo.edge_elems)?;
    let recv_node = tape.gather_rows(state.node, topo.edge_nodes)?;
    let iv_in = tape.concat_cols(&[src_elem, recv_node, state.edge_iv])?;
    let iv_msg = mlp_forward(tape, params, &format!("{prefix}.edge_iv"), &config.edge_iv_spec(), iv_in)?;
    let edge_iv = tape.add(state.edge_iv, iv_msg)?;

    // Step 4: aggregate onto nodes and update them together with the
    // global latent.
    let node_attention = aggregation_weights(
        tape,
        params,
        config,
        &format!("{prefix}.att_node"),
        state.node,
        elem,
        state.edge_iv,
        topo.edge_elems,
        topo.edge_nodes,
        topo.num_nodes,
    )?;
    let node_msg = aggregate(tape, edge_iv, node_attention, topo.edge_nodes, topo.num_nodes)?;
    let global_rep = tape.repeat_rows(global, topo.num_nodes)?;
    let node_in = tape.concat_cols(&[state.node, node_msg, global_rep])?;
    let node_upd =
        mlp_forward(tape, params, &format!("{prefix}.node"), &config.node_update_spec(), node_in)?;
    let node = tape.add(state.node, node_upd)?;

    Ok(LayerOutput {
        state: LatentState { node, elem, edge_vi, edge_iv },
        elem_attention,
        node_attention,
    })
}

/// Applies the two decoders: nodes see their final and encoded latents plus
/// the contact latents; elements see their final and encoded latents. No
/// output normalisation.
pub fn decode<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    encoded: &EncodedLatents,
    state: &LatentState,
) -> Result<(Var, Var)> {
    let mut parts = vec![state.node, encoded.node];
    parts.extend_from_slice(&encoded.contact);
    let node_in = tape.concat_cols(&parts)?;
    let node_out = mlp_forward(tape, params, "dec.node", &config.node_dec_spec(), node_in)?;
    let elem_in = tape.concat_cols(&[state.elem, encoded.elem])?;
    let elem_out = mlp_forward(tape, params, "dec.elem", &config.elem_dec_spec(), elem_in)?;
    Ok((node_out, elem_out))
}

/// Full flat forward pass: encode, `total_layers` processor layers on the
/// input graph, decode.
pub fn model_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    tensors: &GraphTensors<F>,
) -> Result<ModelOutput> {
    let encoded = encode(tape, params, config, tensors)?;
    let topo = LayerTopology::from(tensors);
    let mut state = LatentState {
        node: encoded.node,
        elem: encoded.elem,
        edge_vi: encoded.edge,
        edge_iv: encoded.edge,
    };
    // With no layers the attention probe is the uniform weight per edge.
    let deg = receiver_degrees(topo.edge_elems, topo.num_elements);
    let mut uniform = Mat::zeros(topo.edge_elems.len(), 1);
    for (e, &r) in topo.edge_elems.iter().enumerate() {
        uniform.set(e, 0, F::ONE / F::from_f64(deg[r] as f64));
    }
    let mut elem_attention = tape.constant(uniform)?;
    for l in 0..config.total_layers() {
        let out = processor_layer(
            tape,
            params,
            config,
            &config.layer_prefix(l),
            topo,
            &encoded.contact,
            encoded.global,
            &state,
        )?;
        state = out.state;
        elem_attention = out.elem_attention;
    }
    let (node_out, elem_out) = decode(tape, params, config, &encoded, &state)?;
    Ok(ModelOutput {
        node_out,
        elem_out,
        encoded,
        final_state: state,
        elem_attention,
        attention_elems: tensors.edge_elems.clone(),
        attention_nodes: tensors.edge_nodes.clone(),
    })
}
