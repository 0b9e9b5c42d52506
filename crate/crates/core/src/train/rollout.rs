//! Autoregressive replay of a forming process with a trained surrogate.

use crate::error::{Error, Result};
use crate::fe::{Trajectory, NUM_TRANSITIONS};
use crate::graph::{build_graph, BipartiteGraph, ContactConfig, FeatureScaler};
use crate::hier::{coarse_edge_descriptors, hierarchical_forward, GraphHierarchy};
use crate::io::Checkpoint;
use crate::model::{model_forward, GraphTensors, ModelConfig};
use crate::nn::{Mat, ParamSet, Tape};

/// Element-side aggregation weights of the final processor layer, one row
/// per node-to-element edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAttention {
    pub elems: Vec<usize>,
    pub nodes: Vec<usize>,
    pub alpha: Vec<f64>,
}

/// One-step prediction in physical units.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Displacement increments `[V, 3]` in millimetres.
    pub node_increments: Mat<f64>,
    /// Absolute thinning `[E, 1]`.
    pub elem_thinning: Mat<f64>,
    /// Final-layer attention, when the model computes any.
    pub attention: Option<EdgeAttention>,
}

/// Anything that can advance a blank state by one stroke increment.
pub trait Predictor {
    /// Predicts the next increments and thinning from a raw
    /// (physical-unit) graph.
    fn predict(&self, graph: &BipartiteGraph) -> Result<Prediction>;

    /// Contact-feature layout expected by [`Predictor::predict`].
    fn contact_config(&self) -> ContactConfig;
}

/// Stub that predicts no motion and no thinning; replaying it reproduces
/// the initial snapshot forever.
#[derive(Debug, Clone, Default)]
pub struct ZeroPredictor {
    pub contact: ContactConfig,
}

impl Predictor for ZeroPredictor {
    fn predict(&self, graph: &BipartiteGraph) -> Result<Prediction> {
        Ok(Prediction {
            node_increments: Mat::zeros(graph.num_nodes, 3),
            elem_thinning: Mat::zeros(graph.num_elements, 1),
            attention: None,
        })
    }

    fn contact_config(&self) -> ContactConfig {
        self.contact
    }
}

/// A trained network plus everything needed to run it: configuration,
/// scaling statistics, the frozen hierarchy, and parameters in the 32-bit
/// training precision.
#[derive(Debug, Clone)]
pub struct NetPredictor {
    model: ModelConfig,
    scaler: FeatureScaler,
    hierarchy: Option<GraphHierarchy>,
    params: ParamSet<f32>,
    /// Standardised static descriptors of the coarsest level's edges,
    /// precomputed once.
    coarse_edge: Option<Mat<f32>>,
}

impl NetPredictor {
    pub fn new(
        model: ModelConfig,
        scaler: FeatureScaler,
        hierarchy: Option<GraphHierarchy>,
        params: ParamSet<f32>,
    ) -> Result<NetPredictor> {
        model.validate()?;
        if model.hierarchy.is_some() != hierarchy.is_some() {
            return Err(Error::Contract(
                "hierarchical configuration requires a coarsening hierarchy and vice versa"
                    .to_string(),
            ));
        }
        let coarse_edge = match &hierarchy {
            Some(h) => {
                let raw = coarse_edge_descriptors(h.coarsest());
                Some(scaler.edge.standardize(&raw)?.cast())
            }
            None => None,
        };
        Ok(NetPredictor { model, scaler, hierarchy, params, coarse_edge })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<NetPredictor> {
        NetPredictor::new(
            ckpt.model.clone(),
            ckpt.scaler.clone(),
            ckpt.hierarchy.clone(),
            ckpt.params.clone(),
        )
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }
}

impl Predictor for NetPredictor {
    fn predict(&self, graph: &BipartiteGraph) -> Result<Prediction> {
        let standardised = self.scaler.transform_graph(graph)?;
        let mut tensors = GraphTensors::<f32>::from_graph(&standardised);
        let mut tape = Tape::new();
        let out = match &self.hierarchy {
            Some(h) => {
                tensors = tensors.with_coarse_edges(
                    self.coarse_edge.clone().expect("coarse edges precomputed with hierarchy"),
                );
                hierarchical_forward(&mut tape, &self.params, &self.model, h, &tensors)?
            }
            None => model_forward(&mut tape, &self.params, &self.model, &tensors)?,
        };
        let node_std = tape.value(out.node_out).cast::<f64>();
        let elem_std = tape.value(out.elem_out).cast::<f64>();
        let (node_increments, elem_thinning) =
            self.scaler.untransform_predictions(&node_std, &elem_std)?;
        let attention = if self.model.aggregator.has_attention() {
            let alpha = tape.value(out.elem_attention);
            Some(EdgeAttention {
                elems: out.attention_elems.clone(),
                nodes: out.attention_nodes.clone(),
                alpha: alpha.data().iter().map(|&x| x as f64).collect(),
            })
        } else {
            None
        };
        Ok(Prediction { node_increments, elem_thinning, attention })
    }

    fn contact_config(&self) -> ContactConfig {
        self.scaler.contact_config
    }
}

/// A replayed forming process plus the final step's attention map.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trajectory: Trajectory,
    /// Attention of the last transition's forward pass, if any.
    pub attention: Option<EdgeAttention>,
}

/// Replays a forming process from the reference case's initial state.
///
/// Starting from the undeformed blank (zero increments, zero thinning), each
/// of the ten transitions builds a graph from the current predicted state
/// and the tool pose at the current stroke fraction, asks the predictor for
/// the next increments and thinning, zeroes increments on clamped degrees of
/// freedom, and applies the update. Contact descriptors for the next step
/// come from the predicted geometry, never from the reference. The
/// predictor consumes no randomness.
pub fn rollout(predictor: &dyn Predictor, reference: &Trajectory) -> Result<RolloutResult> {
    reference.validate()?;
    let mesh = &reference.mesh;
    let tools = &reference.tools;
    let v = mesh.num_nodes();
    let e = mesh.num_elements();

    let mut positions = reference.positions[0].clone();
    let mut increments = vec![[0.0f64; 3]; v];
    let mut thinning = vec![0.0f64; e];

    let snap0 = tools.contact_snapshot(&positions, 0.0)?;
    let mut traj = Trajectory {
        case_id: reference.case_id.clone(),
        mesh: mesh.clone(),
        tools: tools.clone(),
        total_time: reference.total_time,
        positions: vec![positions.clone()],
        increments: vec![increments.clone()],
        thinning: vec![thinning.clone()],
        contact_gap: vec![snap0.gap],
        contact_normal: vec![snap0.normal],
        stroke: vec![0.0],
    };
    let mut attention = None;

    for k in 0..NUM_TRANSITIONS {
        let fraction = k as f64 / NUM_TRANSITIONS as f64;
        let graph = build_graph(
            mesh,
            tools,
            &positions,
            &increments,
            &thinning,
            fraction,
            predictor.contact_config(),
        )?;
        let pred = predictor.predict(&graph)?;
        if pred.node_increments.shape() != (v, 3) || pred.elem_thinning.shape() != (e, 1) {
            return Err(Error::Contract(format!(
                "predictor returned shapes {:?} and {:?}, expected ({v}, 3) and ({e}, 1)",
                pred.node_increments.shape(),
                pred.elem_thinning.shape()
            )));
        }
        if !pred.node_increments.all_finite() || !pred.elem_thinning.all_finite() {
            return Err(Error::Numerical(format!(
                "rollout diverged at transition {k}: non-finite prediction"
            )));
        }

        let mut du = pred.node_increments;
        for n in 0..v {
            for c in 0..3 {
                if mesh.boundary[n][c] {
                    du.set(n, c, 0.0);
                }
            }
        }
        for n in 0..v {
            for c in 0..3 {
                positions[n][c] += du.get(n, c);
                increments[n][c] = du.get(n, c);
            }
        }
        for i in 0..e {
            thinning[i] = pred.elem_thinning.get(i, 0);
        }
        attention = pred.attention;

        let next_fraction = (k + 1) as f64 / NUM_TRANSITIONS as f64;
        let snap = tools.contact_snapshot(&positions, next_fraction)?;
        traj.positions.push(positions.clone());
        traj.increments.push(increments.clone());
        traj.thinning.push(thinning.clone());
        traj.contact_gap.push(snap.gap);
        traj.contact_normal.push(snap.normal);
        traj.stroke.push(tools.punch.stroke * next_fraction);
    }
    debug_assert_eq!(traj.num_snapshots(), NUM_TRANSITIONS + 1);
    traj.validate()?;
    Ok(RolloutResult { trajectory: traj, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::{simulate, NUM_TOOLS};
    use crate::graph::assemble_graph;
    use crate::model::init_model_params;
    use crate::testutil::toy_case;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> Trajectory {
        simulate(&toy_case(3, 24.0, 10.0)).unwrap()
    }

    fn toy_net(reference: &Trajectory) -> NetPredictor {
        let samples: Vec<_> = (0..NUM_TRANSITIONS)
            .map(|k| assemble_graph(reference, k, ContactConfig::default()).unwrap())
            .collect();
        let scaler = FeatureScaler::fit(&samples, ContactConfig::default()).unwrap();
        let model = ModelConfig { hidden: 8, layers: 2, ..ModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params: ParamSet<f32> = init_model_params(&model, &mut rng).unwrap();
        NetPredictor::new(model, scaler, None, params).unwrap()
    }

    #[test]
    fn zero_stub_reproduces_the_initial_snapshot_everywhere() {
        let reference = reference();
        let result = rollout(&ZeroPredictor::default(), &reference).unwrap();
        let traj = result.trajectory;
        assert_eq!(traj.num_snapshots(), 11);
        for k in 0..11 {
            assert_eq!(traj.positions[k], reference.positions[0]);
            assert!(traj.increments[k].iter().all(|d| *d == [0.0; 3]));
            assert!(traj.thinning[k].iter().all(|&t| t == 0.0));
        }
        assert!(result.attention.is_none());
    }

    #[test]
    fn stored_positions_equal_previous_plus_increment_bitwise() {
        let reference = reference();
        let net = toy_net(&reference);
        let traj = rollout(&net, &reference).unwrap().trajectory;
        for k in 0..NUM_TRANSITIONS {
            for n in 0..traj.num_nodes() {
                for c in 0..3 {
                    let expected = traj.positions[k][n][c] + traj.increments[k + 1][n][c];
                    assert_eq!(
                        traj.positions[k + 1][n][c], expected,
                        "snapshot {} node {n} axis {c}",
                        k + 1
                    );
                }
            }
        }
    }

    #[test]
    fn clamped_nodes_never_move() {
        let reference = reference();
        let net = toy_net(&reference);
        let traj = rollout(&net, &reference).unwrap().trajectory;
        for k in 0..11 {
            for n in 0..traj.num_nodes() {
                if traj.mesh.is_clamped(n) {
                    assert_eq!(traj.positions[k][n], traj.positions[0][n]);
                    assert_eq!(traj.increments[k][n], [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn rollout_is_deterministic_and_attention_rows_cover_all_edges() {
        let reference = reference();
        let net = toy_net(&reference);
        let a = rollout(&net, &reference).unwrap();
        let b = rollout(&net, &reference).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        let att = a.attention.expect("edge-keyed aggregator exports attention");
        assert_eq!(att.alpha.len(), 4 * reference.num_elements());
        assert_eq!(att.elems.len(), att.alpha.len());
        assert_eq!(att.nodes.len(), att.alpha.len());
        // Per-receiver normalisation survives the trip through the rollout.
        let mut sums = vec![0.0; reference.num_elements()];
        for (i, &e) in att.elems.iter().enumerate() {
            sums[e] += att.alpha[i];
        }
        for s in sums {
            assert!((s - 1.0).abs() < 1e-5, "attention row sums to {s}");
        }
    }

    #[test]
    fn non_finite_predictions_are_reported_as_divergence() {
        struct BadPredictor;
        impl Predictor for BadPredictor {
            fn predict(&self, graph: &BipartiteGraph) -> Result<Prediction> {
                let mut du = Mat::zeros(graph.num_nodes, 3);
                du.set(0, 0, f64::NAN);
                Ok(Prediction {
                    node_increments: du,
                    elem_thinning: Mat::zeros(graph.num_elements, 1),
                    attention: None,
                })
            }
            fn contact_config(&self) -> ContactConfig {
                ContactConfig::default()
            }
        }
        let err = rollout(&BadPredictor, &reference()).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "got {err}");
        assert!(err.to_string().contains("transition 0"));
    }

    #[test]
    fn predicted_contact_fields_follow_the_predicted_geometry() {
        // With the zero stub the blank never moves, so recorded gaps against
        // the descending punch must match a direct contact evaluation at
        // each stroke fraction.
        let reference = reference();
        let traj = rollout(&ZeroPredictor::default(), &reference).unwrap().trajectory;
        for k in 0..11 {
            let frac = k as f64 / 10.0;
            let snap = reference.tools.contact_snapshot(&reference.positions[0], frac).unwrap();
            for n in 0..traj.num_nodes() {
                for t in 0..NUM_TOOLS {
                    assert_eq!(traj.contact_gap[k][n][t], snap.gap[n][t]);
                }
            }
        }
    }
}
