//! Time-marching state and recorded trajectories.

use crate::error::{Error, Result};
use crate::fe::contact::{ToolSet, NUM_TOOLS};
use crate::fe::geom::V3;
use crate::fe::mesh::BlankMesh;

/// Mutable state of the explicit integrator.
///
/// Velocities live on the half-step grid of the central-difference scheme;
/// stresses are centroid values in each element's corotational frame.
/// Thickness bookkeeping stores the accumulated through-thickness log
/// strain and derives the current thickness and thinning from it, so the
/// identities `th = th0 * exp(e33)` and `thinning = 1 - th / th0` hold to
/// machine precision at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Number of completed substeps.
    pub time_index: usize,
    pub positions: Vec<V3>,
    /// Half-step nodal velocities (zero before the first step).
    pub velocities: Vec<V3>,
    /// Displacement increment applied by the most recent substep.
    pub last_increment: Vec<V3>,
    /// Per-element corotational stress, Voigt order `(s11, s22, s12)`.
    pub stress: Vec<[f64; 3]>,
    /// Accumulated through-thickness log strain per element.
    pub eps33: Vec<f64>,
    /// Current thickness per element.
    pub thickness: Vec<f64>,
    /// Thinning `1 - th/th0` per element.
    pub thinning: Vec<f64>,
}

impl SimState {
    /// Undeformed state at rest.
    pub fn initial(mesh: &BlankMesh) -> SimState {
        let v = mesh.num_nodes();
        let e = mesh.num_elements();
        SimState {
            time_index: 0,
            positions: mesh.positions.clone(),
            velocities: vec![[0.0; 3]; v],
            last_increment: vec![[0.0; 3]; v],
            stress: vec![[0.0; 3]; e],
            eps33: vec![0.0; e],
            thickness: vec![mesh.thickness; e],
            thinning: vec![0.0; e],
        }
    }

    /// Re-derives thickness and thinning from the accumulated log strain.
    pub fn update_thickness(&mut self, th0: f64) {
        for e in 0..self.eps33.len() {
            let f = self.eps33[e].exp();
            self.thickness[e] = th0 * f;
            self.thinning[e] = 1.0 - f;
        }
    }
}

/// A recorded forming process: the mesh, the tools that acted on it, and
/// per-snapshot fields at evenly spaced punch-stroke fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub case_id: String,
    pub mesh: BlankMesh,
    pub tools: ToolSet,
    /// Physical duration of the forming process.
    pub total_time: f64,
    /// Node positions per snapshot.
    pub positions: Vec<Vec<V3>>,
    /// Position difference between consecutive snapshots (zero at the
    /// first).
    pub increments: Vec<Vec<V3>>,
    /// Per-element thinning per snapshot.
    pub thinning: Vec<Vec<f64>>,
    /// Signed gaps per snapshot, `[snapshot][node][tool]`.
    pub contact_gap: Vec<Vec<[f64; NUM_TOOLS]>>,
    /// Contact normals per snapshot, `[snapshot][node][tool]`.
    pub contact_normal: Vec<Vec<[V3; NUM_TOOLS]>>,
    /// Punch travel at each snapshot.
    pub stroke: Vec<f64>,
}

impl Trajectory {
    pub fn num_snapshots(&self) -> usize {
        self.positions.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// Total punch travel of the case.
    pub fn stroke_total(&self) -> f64 {
        self.tools.punch.stroke
    }

    /// Consistency checks across all recorded fields.
    pub fn validate(&self) -> Result<()> {
        let s = self.num_snapshots();
        let v = self.num_nodes();
        let e = self.num_elements();
        let ok = self.increments.len() == s
            && self.thinning.len() == s
            && self.contact_gap.len() == s
            && self.contact_normal.len() == s
            && self.stroke.len() == s
            && self.positions.iter().all(|p| p.len() == v)
            && self.increments.iter().all(|p| p.len() == v)
            && self.thinning.iter().all(|t| t.len() == e)
            && self.contact_gap.iter().all(|g| g.len() == v)
            && self.contact_normal.iter().all(|n| n.len() == v);
        if !ok {
            return Err(Error::Format(format!(
                "trajectory `{}` has inconsistent field lengths",
                self.case_id
            )));
        }
        Ok(())
    }
}
