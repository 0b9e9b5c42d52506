//! Multilayer perceptrons on the tape.
//!
//! Every learned mapping in the surrogate (feature encoders, message
//! updates, decoders, hierarchy transfers) is a small MLP: a stack of
//! affine layers with a smooth activation between them, optionally
//! finished by layer normalisation with a learned affine rescale.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::mat::{Mat, Scalar};
use crate::nn::params::ParamSet;
use crate::nn::tape::{Tape, Var};

/// Stabiliser inside layer normalisation.
///
/// Sits under the square root: `1/sqrt(var + eps)`. The value bounds the
/// curvature of the normalisation near zero-variance rows, which keeps
/// central finite differences at moderate step sizes well conditioned.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Negative-side slope used wherever a leaky rectifier appears.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Smooth default used by the surrogate.
    Tanh,
    /// Rectifier with slope [`LEAKY_SLOPE`] on the negative side.
    LeakyRelu,
}

/// Shape of one MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Number of hidden affine+activation pairs before the output layer.
    pub hidden_layers: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// Layer normalisation (with learned gain and bias) on the output.
    pub final_layer_norm: bool,
}

impl MlpSpec {
    /// Conventional two-hidden-layer block used throughout the model.
    pub fn standard(input_dim: usize, hidden_dim: usize, output_dim: usize, norm: bool) -> Self {
        MlpSpec {
            input_dim,
            hidden_dim,
            hidden_layers: 2,
            output_dim,
            activation: Activation::Tanh,
            final_layer_norm: norm,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut cur = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((cur, self.hidden_dim));
            cur = self.hidden_dim;
        }
        dims.push((cur, self.output_dim));
        dims
    }
}

/// Draws an affine layer with fan-in-scaled uniform weights,
/// `U(-scale/sqrt(fan_in), +scale/sqrt(fan_in))`, and zero bias.
pub fn init_affine<F: Scalar>(
    params: &mut ParamSet<F>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    scale: f64,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let bound = scale / (fan_in as f64).sqrt();
    let mut w = Mat::zeros(fan_in, fan_out);
    for x in w.data_mut() {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64; // [0,1)
        *x = F::from_f64((2.0 * u - 1.0) * bound);
    }
    params.insert(format!("{prefix}.w"), w)?;
    params.insert(format!("{prefix}.b"), Mat::zeros(1, fan_out))?;
    Ok(())
}

/// Registers all parameters of one MLP under `prefix`.
pub fn init_mlp<F: Scalar>(
    params: &mut ParamSet<F>,
    prefix: &str,
    spec: &MlpSpec,
    rng: &mut dyn RngCore,
) -> Result<()> {
    for (k, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        init_affine(params, &format!("{prefix}.l{k}"), fan_in, fan_out, 1.0, rng)?;
    }
    if spec.final_layer_norm {
        params.insert(format!("{prefix}.ln_g"), Mat::filled(1, spec.output_dim, F::ONE))?;
        params.insert(format!("{prefix}.ln_b"), Mat::zeros(1, spec.output_dim))?;
    }
    Ok(())
}

/// Applies an affine layer registered under `prefix`.
pub fn affine_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    input: Var,
) -> Result<Var> {
    let w = tape.bind(params, &format!("{prefix}.w"))?;
    let b = tape.bind(params, &format!("{prefix}.b"))?;
    let y = tape.matmul(input, w)?;
    tape.add_bias(y, b)
}

/// Runs one MLP registered under `prefix` on the tape.
pub fn mlp_forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    prefix: &str,
    spec: &MlpSpec,
    input: Var,
) -> Result<Var> {
    let mut x = input;
    for k in 0..=spec.hidden_layers {
        x = affine_forward(tape, params, &format!("{prefix}.l{k}"), x)?;
        if k < spec.hidden_layers {
            x = match spec.activation {
                Activation::Tanh => tape.tanh(x)?,
                Activation::LeakyRelu => tape.leaky_relu(x, F::from_f64(LEAKY_SLOPE))?,
            };
        }
    }
    if spec.final_layer_norm {
        x = tape.layer_norm_rows(x, F::from_f64(LAYER_NORM_EPS))?;
        let gain = tape.bind(params, &format!("{prefix}.ln_g"))?;
        let bias = tape.bind(params, &format!("{prefix}.ln_b"))?;
        let n = tape.value(x).rows();
        let gain_rep = tape.repeat_rows(gain, n)?;
        x = tape.mul(x, gain_rep)?;
        x = tape.add_bias(x, bias)?;
    }
    Ok(x)
}
