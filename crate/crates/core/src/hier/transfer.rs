//! Learnable inter-level transfer: downsampling pools fine latents onto
//! coarse vertices, upsampling pushes processed coarse latents (joined with
//! the stored skip latents) back down.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::hier::coarsen::{GraphHierarchy, TransferMap};
use crate::model::build::init_model_params;
use crate::model::ModelConfig;
use crate::nn::{Mat, ParamSet, Scalar, Tape, Var};

/// Registers one transfer weight of `blocks` stacked `[fan_in, fan_out]`
/// matrices (one per inter-level edge; `blocks = 1` shares the matrix) and
/// a zero bias row, mirroring the affine initialisation: entries uniform in
/// `±1/sqrt(fan_in)`.
fn init_transfer<F: Scalar>(
    params: &mut ParamSet<F>,
    prefix: &str,
    blocks: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut w = Mat::zeros(blocks * fan_in, fan_out);
    for x in w.data_mut() {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        *x = F::from_f64((2.0 * u - 1.0) * bound);
    }
    params.insert(format!("{prefix}.w"), w)?;
    params.insert(format!("{prefix}.b"), Mat::zeros(1, fan_out))?;
    Ok(())
}

/// Registers the transfer weights for every adjacent level pair, after the
/// rest of the model so a hierarchy with zero coarse levels registers the
/// exact same parameters as the flat model.
pub fn init_transfer_params<F: Scalar>(
    params: &mut ParamSet<F>,
    config: &ModelConfig,
    hierarchy: &GraphHierarchy,
    rng: &mut dyn RngCore,
) -> Result<()> {
    if hierarchy.num_coarse_levels() == 0 {
        return Ok(());
    }
    let hcfg = config.hierarchy.as_ref().ok_or_else(|| {
        Error::Contract("hierarchy structure given but the model is configured flat".to_string())
    })?;
    let h = config.hidden;
    for (l, map) in hierarchy.maps.iter().enumerate() {
        let blocks = |edges: usize| if hcfg.shared_transfer { 1 } else { edges };
        init_transfer(params, &format!("hier{l}.down.node"), blocks(map.node.num_edges()), h, h, rng)?;
        init_transfer(params, &format!("hier{l}.down.elem"), blocks(map.elem.num_edges()), h, h, rng)?;
        init_transfer(params, &format!("hier{l}.up.node"), blocks(map.node.num_edges()), 2 * h, h, rng)?;
        init_transfer(params, &format!("hier{l}.up.elem"), blocks(map.elem.num_edges()), 2 * h, h, rng)?;
    }
    Ok(())
}

/// Builds processor plus transfer parameters for a hierarchical model in
/// one deterministic pass.
pub fn init_hierarchical_params<F: Scalar>(
    config: &ModelConfig,
    hierarchy: &GraphHierarchy,
    rng: &mut dyn RngCore,
) -> Result<ParamSet<F>> {
    let mut params = init_model_params(config, rng)?;
    init_transfer_params(&mut params, config, hierarchy, rng)?;
    Ok(params)
}

/// Applies the edge transforms and pools them at the receivers; shared
/// plumbing of both transfer directions.
fn pool<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    x: Var,
    src: &[usize],
    recv: &[usize],
    num_recv: usize,
) -> Result<Var> {
    let w = tape.bind(params, &format!("{prefix}.w"))?;
    let b = tape.bind(params, &format!("{prefix}.b"))?;
    let (_, in_dim) = tape.value(x).shape();
    let (w_rows, _) = tape.value(w).shape();
    let transformed = if w_rows == in_dim {
        let gathered = tape.gather_rows(x, src)?;
        tape.matmul(gathered, w)?
    } else if w_rows == src.len() * in_dim {
        tape.block_matmul(x, w, src)?
    } else {
        return Err(Error::shape(
            "transfer pool",
            format!("weight has {w_rows} rows; expected {in_dim} (shared) or {}", src.len() * in_dim),
        ));
    };
    let pooled = tape.scatter_add_rows(transformed, recv, num_recv)?;
    tape.add_bias(pooled, b)
}

/// Pre-activation downsampling: per-edge transforms of the fine latents
/// summed at each coarse vertex, plus the level bias.
pub fn downsample_linear<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    fine: Var,
    map: &TransferMap,
) -> Result<Var> {
    let (rows, _) = tape.value(fine).shape();
    if rows != map.num_fine {
        return Err(Error::shape(
            "downsample",
            format!("{rows} latent rows for {} fine vertices", map.num_fine),
        ));
    }
    pool(tape, params, prefix, fine, &map.fine_idx, &map.coarse_idx, map.num_coarse)
}

/// Downsampling with the smooth activation applied.
pub fn downsample<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    fine: Var,
    map: &TransferMap,
) -> Result<Var> {
    let pre = downsample_linear(tape, params, prefix, fine, map)?;
    tape.tanh(pre)
}

/// Pre-activation upsampling: each up-edge transforms the concatenated
/// (updated, skip) coarse latents and the results are summed at each fine
/// vertex, plus the level bias.
pub fn upsample_linear<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    up: Var,
    skip: Var,
    map: &TransferMap,
) -> Result<Var> {
    let (up_rows, _) = tape.value(up).shape();
    let (skip_rows, _) = tape.value(skip).shape();
    if up_rows != map.num_coarse || skip_rows != map.num_coarse {
        return Err(Error::shape(
            "upsample",
            format!("{up_rows}/{skip_rows} latent rows for {} coarse vertices", map.num_coarse),
        ));
    }
    let joined = tape.concat_cols(&[up, skip])?;
    pool(tape, params, prefix, joined, &map.coarse_idx, &map.fine_idx, map.num_fine)
}

/// Upsampling with the smooth activation applied.
pub fn upsample<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    up: Var,
    skip: Var,
    map: &TransferMap,
) -> Result<Var> {
    let pre = upsample_linear(tape, params, prefix, up, skip, map)?;
    tape.tanh(pre)
}
