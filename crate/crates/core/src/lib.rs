//! Surrogate-modelling toolkit for desk-scale sheet forming.
//!
//! The crate has two halves. The first is a small explicit-dynamics membrane
//! finite-element solver ([`fe`]) that generates ground-truth forming
//! trajectories: a square blank clamped at its rim is pressed by a spherical
//! punch through a filleted die opening while a holder restrains the flange.
//! The second half is a graph-network surrogate ([`graph`], [`model`],
//! [`hier`], [`train`], [`eval`]) that learns per-step nodal displacement
//! increments and per-element thinning from those trajectories and replays
//! whole forming processes autoregressively.
//!
//! Neural-network plumbing (dense matrices, reverse-mode differentiation,
//! Adam) lives in [`nn`] and is deliberately minimal: everything the
//! surrogate needs and nothing more. Experiment orchestration used by the
//! command-line front end lives in [`exp`]; binary file formats in [`io`].
//!
//! All geometric quantities are expressed in millimetres; masses, forces and
//! stiffnesses use a consistent abstract unit system chosen so the explicit
//! integrator takes a practical number of substeps at desk scale.

pub mod error;
pub mod eval;
pub mod exp;
pub mod fe;
pub mod graph;
pub mod hier;
pub mod io;
pub mod model;
pub mod nn;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use eval::MetricReport;
pub use exp::ExperimentConfig;
pub use fe::{BlankMesh, CaseSetup, Material, SimState, ToolSet, Trajectory};
pub use graph::{BipartiteGraph, ContactConfig, FeatureScaler, GraphTargets};
pub use io::Checkpoint;
pub use model::{AggregatorKind, HierarchyConfig, ModelConfig};
pub use nn::{Mat, ParamSet, Tape, Var};
pub use train::{NoiseMode, TrainConfig};
