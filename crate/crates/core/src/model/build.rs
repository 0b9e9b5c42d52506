//! Parameter registration for the surrogate network.

use rand::RngCore;

use crate::error::Result;
use crate::model::config::{AggregatorKind, ModelConfig};
use crate::nn::{init_affine, init_mlp, ParamSet, Scalar};

/// Attention projections start at a tenth of the usual weight scale so the
/// softmax begins close to uniform and the model can depart from mean
/// aggregation gradually.
pub const ATTENTION_INIT_SCALE: f64 = 0.1;

/// Registers the attention parameters of one aggregation site (element- or
/// node-side) under `prefix`.
fn init_aggregator<F: Scalar>(
    params: &mut ParamSet<F>,
    prefix: &str,
    config: &ModelConfig,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let h = config.hidden;
    match config.aggregator {
        AggregatorKind::MeanVanilla => {}
        AggregatorKind::GatStyle => {
            init_affine(params, &format!("{prefix}.a"), 2 * h, 1, ATTENTION_INIT_SCALE, rng)?;
        }
        AggregatorKind::CrossAttSourceKey | AggregatorKind::CrossAttEdgeKey => {
            init_affine(params, &format!("{prefix}.q"), h, h, ATTENTION_INIT_SCALE, rng)?;
            init_affine(params, &format!("{prefix}.k"), h, h, ATTENTION_INIT_SCALE, rng)?;
        }
    }
    Ok(())
}

/// Registers every parameter of the model in a deterministic order:
/// encoders, processor layers, decoders. Hierarchical transfer weights are
/// mesh-dependent and registered separately once the hierarchy is built.
pub fn init_model_params<F: Scalar>(
    config: &ModelConfig,
    rng: &mut dyn RngCore,
) -> Result<ParamSet<F>> {
    config.validate()?;
    let mut params = ParamSet::new();
    init_mlp(&mut params, "enc.node", &config.node_enc_spec(), rng)?;
    for t in 0..config.contact.num_blocks() {
        init_mlp(&mut params, &format!("enc.contact{t}"), &config.contact_enc_spec(), rng)?;
    }
    init_mlp(&mut params, "enc.elem", &config.elem_enc_spec(), rng)?;
    init_mlp(&mut params, "enc.edge", &config.edge_enc_spec(), rng)?;
    init_mlp(&mut params, "enc.global", &config.global_enc_spec(), rng)?;

    for l in 0..config.distinct_layers() {
        let pre = format!("proc{l}");
        init_mlp(&mut params, &format!("{pre}.edge_vi"), &config.edge_vi_spec(), rng)?;
        init_mlp(&mut params, &format!("{pre}.elem"), &config.elem_update_spec(), rng)?;
        init_mlp(&mut params, &format!("{pre}.edge_iv"), &config.edge_iv_spec(), rng)?;
        init_mlp(&mut params, &format!("{pre}.node"), &config.node_update_spec(), rng)?;
        init_aggregator(&mut params, &format!("{pre}.att_elem"), config, rng)?;
        init_aggregator(&mut params, &format!("{pre}.att_node"), config, rng)?;
    }

    init_mlp(&mut params, "dec.node", &config.node_dec_spec(), rng)?;
    init_mlp(&mut params, "dec.elem", &config.elem_dec_spec(), rng)?;
    Ok(params)
}
