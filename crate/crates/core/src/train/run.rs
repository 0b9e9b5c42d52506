//! The teacher-forced training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fe::{Trajectory, NUM_TRANSITIONS};
use crate::graph::{assemble_graph, BipartiteGraph, ContactConfig, FeatureScaler, GraphTargets};
use crate::hier::{
    build_hierarchy, coarse_edge_descriptors, hierarchical_forward, init_hierarchical_params,
};
use crate::io::Checkpoint;
use crate::model::{init_model_params, model_forward, GraphTensors, ModelConfig};
use crate::nn::{lr_between, AdamState, Mat, ParamSet, Tape};
use crate::train::config::TrainConfig;
use crate::train::loss::loss_terms;
use crate::train::noise::perturb_increments;

/// Per-epoch averages written to the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub lr: f64,
    pub l_disp: f64,
    pub l_thin: f64,
    pub l_total: f64,
}

/// Result of a training call.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// One point per epoch executed by this call (resumes start mid-way).
    pub curve: Vec<CurvePoint>,
}

/// Per-epoch randomness: one dedicated stream per epoch keeps interrupted
/// and straight-through runs drawing identical shuffles and noise.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 is used by parameter initialisation.
    rng.set_stream(1 + epoch as u64);
    rng
}

/// Trains a surrogate on every transition of every trajectory.
///
/// Each optimiser step consumes a single graph; transitions are reshuffled
/// every epoch; the learning rate decays geometrically from `lr_start` to
/// `lr_end` across `epochs`. Passing `resume` continues a previous run from
/// its recorded epoch counter with its parameters, scaler, and hierarchy
/// (optimiser moments restart at zero).
pub fn train(
    model: &ModelConfig,
    config: &TrainConfig,
    dataset: &[Trajectory],
    contact: ContactConfig,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    model.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Parameter("training dataset is empty".to_string()));
    }
    for traj in &dataset[1..] {
        if traj.mesh != dataset[0].mesh {
            return Err(Error::Contract(format!(
                "all training trajectories must share one mesh; `{}` differs from `{}`",
                traj.case_id, dataset[0].case_id
            )));
        }
    }

    let mut samples: Vec<(BipartiteGraph, GraphTargets)> =
        Vec::with_capacity(dataset.len() * NUM_TRANSITIONS);
    for traj in dataset {
        for k in 0..NUM_TRANSITIONS {
            samples.push(assemble_graph(traj, k, contact)?);
        }
    }

    let (scaler, hierarchy, mut params, start_epoch) = match resume {
        Some(ckpt) => {
            if ckpt.model != *model {
                return Err(Error::Contract(
                    "resume checkpoint was trained with a different model configuration"
                        .to_string(),
                ));
            }
            if ckpt.epochs_completed >= config.epochs {
                return Err(Error::Parameter(format!(
                    "checkpoint already covers {} epochs, nothing left below {}",
                    ckpt.epochs_completed, config.epochs
                )));
            }
            (ckpt.scaler, ckpt.hierarchy, ckpt.params, ckpt.epochs_completed)
        }
        None => {
            let scaler = FeatureScaler::fit(&samples, contact)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let (hierarchy, params) = match &model.hierarchy {
                Some(hcfg) => {
                    let h = build_hierarchy(&dataset[0].mesh, hcfg)?;
                    let p: ParamSet<f32> = init_hierarchical_params(model, &h, &mut rng)?;
                    (Some(h), p)
                }
                None => (None, init_model_params(model, &mut rng)?),
            };
            (scaler, hierarchy, params, 0)
        }
    };

    let coarse_edge: Option<Mat<f32>> = match &hierarchy {
        Some(h) => Some(scaler.edge.standardize(&coarse_edge_descriptors(h.coarsest()))?.cast()),
        None => None,
    };

    let mut adam: AdamState<f32> = AdamState::new(&params);
    let mut curve = Vec::with_capacity(config.epochs - start_epoch);

    for epoch in start_epoch..config.epochs {
        let lr = lr_between(config.lr_start, config.lr_end, epoch, config.epochs);
        let mut rng = epoch_rng(config.seed, epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);

        let (mut sum_disp, mut sum_thin) = (0.0, 0.0);
        for &idx in &order {
            let (graph, targets) = &samples[idx];
            let mut step = |params: &ParamSet<f32>| -> Result<(f64, f64, Vec<Option<Mat<f32>>>)> {
                let (noisy, _) =
                    perturb_increments(graph, config.noise, config.lambda_noise, &mut rng)?;
                let std_graph = scaler.transform_graph(&noisy)?;
                let std_targets = scaler.transform_targets(targets)?;
                let mut tensors = GraphTensors::<f32>::from_graph(&std_graph);
                let mut tape = Tape::new();
                let out = match &hierarchy {
                    Some(h) => {
                        tensors = tensors
                            .with_coarse_edges(coarse_edge.clone().expect("set with hierarchy"));
                        hierarchical_forward(&mut tape, params, model, h, &tensors)?
                    }
                    None => model_forward(&mut tape, params, model, &tensors)?,
                };
                let terms = loss_terms(
                    &mut tape,
                    out.node_out,
                    &std_targets.node_increments.cast(),
                    out.elem_out,
                    &std_targets.elem_thinning.cast(),
                )?;
                let l_disp = tape.value(terms.disp).get(0, 0) as f64;
                let l_thin = tape.value(terms.thin).get(0, 0) as f64;
                if !(l_disp.is_finite() && l_thin.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "loss became non-finite (disp {l_disp}, thin {l_thin})"
                    )));
                }
                let grads = tape.backward(terms.total)?;
                Ok((l_disp, l_thin, params.gather_grads(&tape, &grads)))
            };
            let (l_disp, l_thin, grads) = step(&params).map_err(|e| {
                Error::Numerical(format!("training aborted at epoch {epoch}, sample {idx}: {e}"))
            })?;
            adam.step(&mut params, &grads, lr)?;
            sum_disp += l_disp;
            sum_thin += l_thin;
        }

        let n = samples.len() as f64;
        curve.push(CurvePoint {
            epoch,
            lr,
            l_disp: sum_disp / n,
            l_thin: sum_thin / n,
            l_total: (sum_disp + sum_thin) / n,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model: model.clone(),
            train: config.clone(),
            epochs_completed: config.epochs,
            scaler,
            hierarchy,
            params,
        },
        curve,
    })
}
