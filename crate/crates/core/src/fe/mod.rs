//! Explicit-dynamics membrane finite elements for desk-scale sheet forming.
//!
//! The solver advances a clamped square blank through contact with three
//! analytic tools (spherical punch, filleted die opening, blank holder)
//! using central-difference time integration on a lumped-mass system.
//! Elements are four-node membrane quads with a single centroid integration
//! point evaluated in a corotational frame; the material is plane-stress
//! elastic with a through-thickness strain closure that yields per-element
//! thinning. Trajectories are recorded at eleven evenly spaced punch-stroke
//! fractions and feed the graph surrogate as ground truth.

pub mod contact;
pub mod element;
pub mod geom;
pub mod mesh;
pub mod sim;
pub mod state;
pub mod step;

pub use contact::{ContactSnapshot, OpenPlate, Punch, ToolSet, NUM_TOOLS, TOOL_NAMES};
pub use element::Material;
pub use mesh::{build_blank_mesh, lumped_mass, BlankMesh};
pub use sim::{simulate, stable_dt, CaseSetup, NUM_SNAPSHOTS, NUM_TRANSITIONS};
pub use state::{SimState, Trajectory};
pub use step::{contact_forces, element_kinematics, internal_forces, step_explicit};
