//! Multi-level forward pass: fine processor layers, learnable descent to
//! the coarsest graph, coarse processor layers, skip-joined ascent, decode.

use crate::error::{Error, Result};
use crate::hier::coarsen::GraphHierarchy;
use crate::hier::transfer::{downsample, upsample};
use crate::model::forward::{
    decode, encode, processor_layer, GraphTensors, LatentState, LayerTopology, ModelOutput,
};
use crate::model::ModelConfig;
use crate::nn::{mlp_forward, Mat, ParamSet, Scalar, Tape, Var};

/// Runs the U-shaped forward pass over a prebuilt hierarchy.
///
/// With zero coarse levels this executes the flat forward with
/// `fine_layers + coarse_layers` processor layers on the input graph and
/// produces bit-identical outputs to it. Otherwise the processor runs
/// `fine_layers` times on the input graph, node and element latents descend
/// through every level (storing skip latents), `coarse_layers` processor
/// layers run on the coarsest graph, and the updated latents ascend with
/// skip concatenation before decoding on the fine graph.
pub fn hierarchical_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    config: &ModelConfig,
    hierarchy: &GraphHierarchy,
    tensors: &GraphTensors<F>,
) -> Result<ModelOutput> {
    let hcfg = config.hierarchy.as_ref().ok_or_else(|| {
        Error::Contract("multi-level forward requires a hierarchy section in the model config".to_string())
    })?;
    if hierarchy.num_coarse_levels() != hcfg.levels {
        return Err(Error::Contract(format!(
            "hierarchy has {} coarse levels, config expects {}",
            hierarchy.num_coarse_levels(),
            hcfg.levels
        )));
    }
    let fine = &hierarchy.levels[0];
    if fine.num_nodes() != tensors.num_nodes || fine.num_elements() != tensors.num_elements {
        return Err(Error::Contract(format!(
            "hierarchy was built for {}x{} vertices, graph has {}x{}",
            fine.num_nodes(),
            fine.num_elements(),
            tensors.num_nodes,
            tensors.num_elements
        )));
    }

    let encoded = encode(tape, params, config, tensors)?;
    let fine_topo = LayerTopology::from(tensors);
    let mut state = LatentState {
        node: encoded.node,
        elem: encoded.elem,
        edge_vi: encoded.edge,
        edge_iv: encoded.edge,
    };
    let mut layer = 0;
    let mut last_attention: Option<Var> = None;
    let mut attention_at_coarsest = false;
    for _ in 0..hcfg.fine_layers {
        let out = processor_layer(
            tape,
            params,
            config,
            &config.layer_prefix(layer),
            fine_topo,
            &encoded.contact,
            encoded.global,
            &state,
        )?;
        state = out.state;
        last_attention = Some(out.elem_attention);
        layer += 1;
    }

    let levels = hcfg.levels;
    let final_state = if levels == 0 {
        for _ in 0..hcfg.coarse_layers {
            let out = processor_layer(
                tape,
                params,
                config,
                &config.layer_prefix(layer),
                fine_topo,
                &encoded.contact,
                encoded.global,
                &state,
            )?;
            state = out.state;
            last_attention = Some(out.elem_attention);
            layer += 1;
        }
        state
    } else {
        // Descend, storing the post-transfer latents of every coarse level
        // as the skip inputs of the matching ascent step.
        let mut node_lat = state.node;
        let mut elem_lat = state.elem;
        let mut skips: Vec<(Var, Var)> = Vec::with_capacity(levels);
        for (l, map) in hierarchy.maps.iter().enumerate() {
            node_lat = downsample(tape, params, &format!("hier{l}.down.node"), node_lat, &map.node)?;
            elem_lat = downsample(tape, params, &format!("hier{l}.down.elem"), elem_lat, &map.elem)?;
            skips.push((node_lat, elem_lat));
        }

        let coarsest = hierarchy.coarsest();
        let coarse_feats = tensors.coarse_edge.as_ref().ok_or_else(|| {
            Error::Contract("graph tensors carry no coarsest-level edge descriptors".to_string())
        })?;
        if coarse_feats.rows() != coarsest.edge_nodes.len() {
            return Err(Error::shape(
                "hierarchical_forward",
                format!(
                    "{} coarse edge rows for {} coarsest-level edges",
                    coarse_feats.rows(),
                    coarsest.edge_nodes.len()
                ),
            ));
        }
        let coarse_in = tape.constant(coarse_feats.clone())?;
        let coarse_edge = mlp_forward(tape, params, "enc.edge", &config.edge_enc_spec(), coarse_in)?;
        // A coarse node vertex is an original node, so it keeps that node's
        // encoded contact latents.
        let mut coarse_contact = Vec::with_capacity(encoded.contact.len());
        for &c in &encoded.contact {
            coarse_contact.push(tape.gather_rows(c, &coarsest.node_orig)?);
        }
        let coarse_topo = LayerTopology {
            edge_nodes: &coarsest.edge_nodes,
            edge_elems: &coarsest.edge_elems,
            num_nodes: coarsest.num_nodes(),
            num_elements: coarsest.num_elements(),
        };
        let mut coarse_state = LatentState {
            node: node_lat,
            elem: elem_lat,
            edge_vi: coarse_edge,
            edge_iv: coarse_edge,
        };
        for _ in 0..hcfg.coarse_layers {
            let out = processor_layer(
                tape,
                params,
                config,
                &config.layer_prefix(layer),
                coarse_topo,
                &coarse_contact,
                encoded.global,
                &coarse_state,
            )?;
            coarse_state = out.state;
            last_attention = Some(out.elem_attention);
            attention_at_coarsest = true;
            layer += 1;
        }

        let mut up_node = coarse_state.node;
        let mut up_elem = coarse_state.elem;
        for l in (0..levels).rev() {
            let (skip_node, skip_elem) = skips[l];
            let map = &hierarchy.maps[l];
            up_node =
                upsample(tape, params, &format!("hier{l}.up.node"), up_node, skip_node, &map.node)?;
            up_elem =
                upsample(tape, params, &format!("hier{l}.up.elem"), up_elem, skip_elem, &map.elem)?;
        }
        LatentState { node: up_node, elem: up_elem, edge_vi: state.edge_vi, edge_iv: state.edge_iv }
    };

    let (node_out, elem_out) = decode(tape, params, config, &encoded, &final_state)?;
    // Endpoint lists of the reported attention, in original mesh ids.
    let (elem_attention, attention_elems, attention_nodes) = match last_attention {
        Some(att) if attention_at_coarsest => {
            let c = hierarchy.coarsest();
            (
                att,
                c.edge_elems.iter().map(|&e| c.elem_orig[e]).collect(),
                c.edge_nodes.iter().map(|&v| c.node_orig[v]).collect(),
            )
        }
        Some(att) => (att, tensors.edge_elems.clone(), tensors.edge_nodes.clone()),
        None => {
            // No processor layer ran; report the uniform weights of the
            // fine graph.
            let mut deg = vec![0usize; tensors.num_elements];
            for &e in &tensors.edge_elems {
                deg[e] += 1;
            }
            let mut uniform = Mat::zeros(tensors.edge_elems.len(), 1);
            for (row, &e) in tensors.edge_elems.iter().enumerate() {
                uniform.set(row, 0, F::ONE / F::from_f64(deg[e] as f64));
            }
            (tape.constant(uniform)?, tensors.edge_elems.clone(), tensors.edge_nodes.clone())
        }
    };
    Ok(ModelOutput {
        node_out,
        elem_out,
        encoded,
        final_state,
        elem_attention,
        attention_elems,
        attention_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::simulate;
    use crate::graph::{assemble_graph, ContactConfig};
    use crate::hier::coarsen::{build_hierarchy, coarse_edge_descriptors};
    use crate::hier::transfer::init_hierarchical_params;
    use crate::model::build::init_model_params;
    use crate::model::forward::model_forward;
    use crate::model::{AggregatorKind, HierarchyConfig};
    use crate::nn::check_gradients;
    use crate::testutil::toy_case;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hier_config(levels: usize, ratio: f64) -> (ModelConfig, HierarchyConfig) {
        let hcfg = HierarchyConfig {
            levels,
            ratio,
            fine_layers: 1,
            coarse_layers: 2,
            k_nn: 3,
            k_elem: 4,
            ..HierarchyConfig::default()
        };
        let config = ModelConfig {
            hidden: 8,
            aggregator: AggregatorKind::CrossAttEdgeKey,
            hierarchy: Some(hcfg.clone()),
            ..ModelConfig::default()
        };
        (config, hcfg)
    }

    fn case_tensors(nx: usize) -> (crate::fe::CaseSetup, GraphTensors<f64>) {
        let case = toy_case(nx, 24.0, 10.0);
        let traj = simulate(&case).unwrap();
        let (graph, _) = assemble_graph(&traj, 4, ContactConfig::default()).unwrap();
        (case, GraphTensors::from_graph(&graph))
    }

    #[test]
    fn zero_coarse_levels_degenerate_to_the_flat_model() {
        let (case, tensors) = case_tensors(4);
        let (config, hcfg) = hier_config(0, 0.5);
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let flat_config = ModelConfig {
            layers: hcfg.fine_layers + hcfg.coarse_layers,
            hierarchy: None,
            ..config.clone()
        };
        let mut rng_h = ChaCha8Rng::seed_from_u64(42);
        let params_h: ParamSet<f64> = init_hierarchical_params(&config, &hier, &mut rng_h).unwrap();
        let mut rng_f = ChaCha8Rng::seed_from_u64(42);
        let params_f: ParamSet<f64> = init_model_params(&flat_config, &mut rng_f).unwrap();
        assert_eq!(params_h.len(), params_f.len());
        for i in 0..params_h.len() {
            assert_eq!(params_h.name(i), params_f.name(i));
            assert_eq!(params_h.mat(i), params_f.mat(i), "{}", params_h.name(i));
        }
        let mut tape_h = Tape::new();
        let out_h = hierarchical_forward(&mut tape_h, &params_h, &config, &hier, &tensors).unwrap();
        let mut tape_f = Tape::new();
        let out_f = model_forward(&mut tape_f, &params_f, &flat_config, &tensors).unwrap();
        assert_eq!(tape_h.value(out_h.node_out), tape_f.value(out_f.node_out));
        assert_eq!(tape_h.value(out_h.elem_out), tape_f.value(out_f.elem_out));
        assert_eq!(tape_h.value(out_h.elem_attention), tape_f.value(out_f.elem_attention));
    }

    #[test]
    fn outputs_keep_fine_shapes_with_coarsening() {
        let (case, tensors) = case_tensors(5);
        let (config, hcfg) = hier_config(1, 0.4);
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let coarse = coarse_edge_descriptors(hier.coarsest());
        let tensors = tensors.with_coarse_edges(coarse.cast());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params: ParamSet<f64> = init_hierarchical_params(&config, &hier, &mut rng).unwrap();
        let mut tape = Tape::new();
        let out = hierarchical_forward(&mut tape, &params, &config, &hier, &tensors).unwrap();
        assert_eq!(tape.value(out.node_out).shape(), (tensors.num_nodes, 3));
        assert_eq!(tape.value(out.elem_out).shape(), (tensors.num_elements, 1));
        // Attention lives on the coarsest level: k_elem edges per coarse
        // element, endpoints reported as original mesh ids.
        let coarsest = hier.coarsest();
        assert_eq!(
            tape.value(out.elem_attention).rows(),
            coarsest.num_elements() * hcfg.k_elem
        );
        assert!(out.attention_nodes.iter().all(|&v| v < tensors.num_nodes));
        assert!(out.attention_elems.iter().all(|&e| e < tensors.num_elements));
    }

    #[test]
    fn coarse_attention_is_normalised_per_receiver() {
        let (case, tensors) = case_tensors(5);
        let (config, hcfg) = hier_config(1, 0.4);
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let tensors = tensors.with_coarse_edges(coarse_edge_descriptors(hier.coarsest()).cast());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params: ParamSet<f64> = init_hierarchical_params(&config, &hier, &mut rng).unwrap();
        let mut tape = Tape::new();
        let out = hierarchical_forward(&mut tape, &params, &config, &hier, &tensors).unwrap();
        let alpha = tape.value(out.elem_attention);
        let coarsest = hier.coarsest();
        let mut sums = vec![0.0; coarsest.num_elements()];
        for (row, &e) in coarsest.edge_elems.iter().enumerate() {
            sums[e] += alpha.get(row, 0);
        }
        for s in sums {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_coarse_edge_features_are_a_contract_error() {
        let (case, tensors) = case_tensors(5);
        let (config, hcfg) = hier_config(1, 0.4);
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params: ParamSet<f64> = init_hierarchical_params(&config, &hier, &mut rng).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(
            hierarchical_forward(&mut tape, &params, &config, &hier, &tensors),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mismatched_level_count_is_a_contract_error() {
        let (case, tensors) = case_tensors(5);
        let (config, _) = hier_config(1, 0.4);
        let wrong = build_hierarchy(&case.mesh, &HierarchyConfig { levels: 0, ..HierarchyConfig::default() })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params: ParamSet<f64> = init_model_params(&config, &mut rng).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(
            hierarchical_forward(&mut tape, &params, &config, &wrong, &tensors),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn forward_is_deterministic_and_works_with_shared_transfers() {
        let (case, tensors) = case_tensors(5);
        let (mut config, mut hcfg) = hier_config(1, 0.4);
        hcfg.shared_transfer = true;
        config.hierarchy = Some(hcfg.clone());
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let tensors = tensors.with_coarse_edges(coarse_edge_descriptors(hier.coarsest()).cast());
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let params: ParamSet<f64> =
                init_hierarchical_params(&config, &hier, &mut rng).unwrap();
            let mut tape = Tape::new();
            let out = hierarchical_forward(&mut tape, &params, &config, &hier, &tensors).unwrap();
            (tape.value(out.node_out).clone(), tape.value(out.elem_out).clone())
        };
        let (n1, e1) = run();
        let (n2, e2) = run();
        assert_eq!(n1, n2);
        assert_eq!(e1, e2);
    }

    #[test]
    fn gradients_match_finite_differences_through_the_full_path() {
        // 3x3-node mesh: 9 nodes, 4 elements; one coarse level at a ratio
        // keeping at least four element vertices. Features are standardised
        // as in training; raw millimetre magnitudes saturate the encoders
        // and spoil finite-difference conditioning.
        use crate::graph::FeatureScaler;
        let case = toy_case(3, 24.0, 10.0);
        let traj = simulate(&case).unwrap();
        let samples: Vec<_> =
            (0..10).map(|k| assemble_graph(&traj, k, ContactConfig::default()).unwrap()).collect();
        let scaler = FeatureScaler::fit(&samples, ContactConfig::default()).unwrap();
        let graph = scaler.transform_graph(&samples[4].0).unwrap();
        let tensors = GraphTensors::<f64>::from_graph(&graph);
        let hcfg = HierarchyConfig {
            levels: 1,
            ratio: 0.8,
            fine_layers: 1,
            coarse_layers: 1,
            k_nn: 3,
            k_elem: 4,
            ..HierarchyConfig::default()
        };
        let config = ModelConfig {
            hidden: 8,
            aggregator: AggregatorKind::CrossAttEdgeKey,
            hierarchy: Some(hcfg.clone()),
            ..ModelConfig::default()
        };
        let hier = build_hierarchy(&case.mesh, &hcfg).unwrap();
        let coarse_raw = coarse_edge_descriptors(hier.coarsest());
        let tensors =
            tensors.with_coarse_edges(scaler.edge.standardize(&coarse_raw).unwrap().cast());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params: ParamSet<f64> = init_hierarchical_params(&config, &hier, &mut rng).unwrap();
        // The probe scalar is scaled down so that the absolute truncation
        // error of central differences stays below the floored tolerance on
        // near-zero gradient entries.
        let report = check_gradients(&params, 1e-5, 1e-8, &|tape, p| {
            let out = hierarchical_forward(tape, p, &config, &hier, &tensors)?;
            let ln = tape.mean_sq(out.node_out)?;
            let le = tape.mean_sq(out.elem_out)?;
            let sum = tape.add(ln, le)?;
            tape.scale(sum, 1e-2)
        })
        .unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "worst {} at {} entry {}",
            report.max_rel_error,
            report.worst_param,
            report.worst_entry
        );
    }
}
