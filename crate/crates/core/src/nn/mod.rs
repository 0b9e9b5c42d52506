//! Minimal neural-network engine: dense matrices, a reverse-mode tape,
//! multilayer perceptrons, Adam, and a finite-difference gradient checker.
//!
//! The engine is generic over the scalar type. Training runs in `f32`;
//! gradient verification instantiates the same code in `f64` so that
//! central-difference comparisons are not drowned in rounding noise.

pub mod adam;
pub mod gradcheck;
pub mod mat;
pub mod mlp;
pub mod params;
pub mod schedule;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use mat::{Mat, Scalar};
pub use mlp::{
    affine_forward, init_affine, init_mlp, mlp_forward, Activation, MlpSpec, LAYER_NORM_EPS,
    LEAKY_SLOPE,
};
pub use params::ParamSet;
pub use schedule::{lr_between, lr_schedule};
pub use tape::{Grads, Tape, Var};
