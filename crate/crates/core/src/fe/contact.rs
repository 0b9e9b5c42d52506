//! Analytic tool surfaces and contact kinematics.
//!
//! Three rigid tools act on the blank: a spherical punch descending along
//! the vertical axis, a die plate with a filleted circular opening
//! supporting the blank from below, and a blank holder pressing the flange
//! from above. Tools are analytic, so each node's signed gap and outward
//! surface normal come from closed-form projections; penalty forces act
//! only where the gap is negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::geom::V3;

/// Number of tools acting on the blank.
pub const NUM_TOOLS: usize = 3;

/// Canonical tool order used by contact-feature arrays everywhere.
pub const TOOL_NAMES: [&str; NUM_TOOLS] = ["die", "punch", "holder"];

/// Spherical punch descending along `-z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Punch {
    /// Horizontal position of the punch axis.
    pub center_xy: [f64; 2],
    /// Sphere-centre height at stroke fraction zero.
    pub start_z: f64,
    pub radius: f64,
    /// Total descent over the forming process.
    pub stroke: f64,
}

/// Horizontal plate with a filleted circular opening around the tool axis.
///
/// With `facing_up` the solid lies below the plane (a die supporting the
/// blank); otherwise above it (a holder pressing down). The flat region
/// starts at `throat_radius + fillet_radius` from the axis; the rounded lip
/// is a quarter-torus of the fillet radius whose innermost point sits at
/// `throat_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenPlate {
    pub axis_xy: [f64; 2],
    /// Height of the flat contact plane.
    pub plane_z: f64,
    /// Radius of the opening at its tightest.
    pub throat_radius: f64,
    pub fillet_radius: f64,
    pub facing_up: bool,
}

/// The full rigid-tool arrangement for one forming case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSet {
    pub punch: Punch,
    pub die: OpenPlate,
    pub holder: OpenPlate,
    /// Penalty stiffness shared by all three contacts.
    pub penalty_stiffness: f64,
}

/// Gap/normal fields for every node against every tool at one instant,
/// in [`TOOL_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSnapshot {
    /// Signed distances, negative inside a tool. `gap[node][tool]`.
    pub gap: Vec<[f64; NUM_TOOLS]>,
    /// Outward surface normals at the closest point. `normal[node][tool]`.
    pub normal: Vec<[V3; NUM_TOOLS]>,
}

impl ToolSet {
    pub fn validate(&self) -> Result<()> {
        if self.punch.radius <= 0.0 || self.punch.stroke < 0.0 {
            return Err(Error::Parameter(format!(
                "punch radius must be positive and stroke non-negative, got {} and {}",
                self.punch.radius, self.punch.stroke
            )));
        }
        for (name, plate) in [("die", &self.die), ("holder", &self.holder)] {
            if plate.throat_radius <= 0.0 || plate.fillet_radius < 0.0 {
                return Err(Error::Parameter(format!(
                    "{name} radii must be positive (throat) / non-negative (fillet)"
                )));
            }
        }
        if !self.die.facing_up || self.holder.facing_up {
            return Err(Error::Parameter(
                "die must face up and holder must face down".to_string(),
            ));
        }
        if self.penalty_stiffness <= 0.0 {
            return Err(Error::Parameter(format!(
                "penalty stiffness must be positive, got {}",
                self.penalty_stiffness
            )));
        }
        Ok(())
    }

    /// Punch-centre position at a stroke fraction in `[0, 1]`.
    pub fn punch_center(&self, stroke_fraction: f64) -> V3 {
        [
            self.punch.center_xy[0],
            self.punch.center_xy[1],
            self.punch.start_z - self.punch.stroke * stroke_fraction,
        ]
    }

    /// Signed gap and outward normal of one node against one tool.
    pub fn tool_gap(&self, tool: usize, node: V3, stroke_fraction: f64) -> Result<(f64, V3)> {
        match tool {
            0 => plate_gap(&self.die, node),
            1 => sphere_gap(self.punch_center(stroke_fraction), self.punch.radius, node),
            2 => plate_gap(&self.holder, node),
            _ => Err(Error::Parameter(format!("tool index {tool} out of range"))),
        }
    }

    /// Gap/normal fields for all nodes at one stroke fraction.
    pub fn contact_snapshot(&self, positions: &[V3], stroke_fraction: f64) -> Result<ContactSnapshot> {
        let mut gap = vec![[0.0; NUM_TOOLS]; positions.len()];
        let mut normal = vec![[[0.0; 3]; NUM_TOOLS]; positions.len()];
        for (i, &p) in positions.iter().enumerate() {
            for t in 0..NUM_TOOLS {
                let (d, n) = self.tool_gap(t, p, stroke_fraction)?;
                gap[i][t] = d;
                normal[i][t] = n;
            }
        }
        Ok(ContactSnapshot { gap, normal })
    }

    /// Rigidly translates every tool (used by invariance tests).
    pub fn translated(&self, t: V3) -> ToolSet {
        let mut out = self.clone();
        out.punch.center_xy = [self.punch.center_xy[0] + t[0], self.punch.center_xy[1] + t[1]];
        out.punch.start_z += t[2];
        for plate in [&mut out.die, &mut out.holder] {
            plate.axis_xy = [plate.axis_xy[0] + t[0], plate.axis_xy[1] + t[1]];
            plate.plane_z += t[2];
        }
        out
    }
}

/// Gap against a sphere: distance from the centre minus the radius, normal
/// pointing from the centre through the node.
fn sphere_gap(center: V3, radius: f64, node: V3) -> Result<(f64, V3)> {
    let r = [node[0] - center[0], node[1] - center[1], node[2] - center[2]];
    let dist = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if dist <= radius * 1e-9 {
        return Err(Error::Geometry("node coincides with the punch centre".to_string()));
    }
    Ok((dist - radius, [r[0] / dist, r[1] / dist, r[2] / dist]))
}

/// Gap against a filleted open plate.
///
/// Outside the fillet ring the nearest surface is the flat plane; inside
/// it, the rounded lip. The lip is the circle of the fillet radius centred
/// on the ring at `throat + fillet` from the axis, offset into the solid.
fn plate_gap(plate: &OpenPlate, node: V3) -> Result<(f64, V3)> {
    let dx = node[0] - plate.axis_xy[0];
    let dy = node[1] - plate.axis_xy[1];
    let r = (dx * dx + dy * dy).sqrt();
    let ring_r = plate.throat_radius + plate.fillet_radius;
    let up = if plate.facing_up { 1.0 } else { -1.0 };
    if r >= ring_r {
        // Flat annulus; gap grows away from the solid.
        return Ok(((node[2] - plate.plane_z) * up, [0.0, 0.0, up]));
    }
    // Radial direction from the axis; an on-axis node has no preferred
    // direction, any horizontal unit works since the lip ring is symmetric.
    let (ux, uy) = if r > 1e-12 * ring_r { (dx / r, dy / r) } else { (1.0, 0.0) };
    // Lip circle centre in the (radial, z) half-plane.
    let ring_z = plate.plane_z - up * plate.fillet_radius;
    let wr = r - ring_r;
    let wz = node[2] - ring_z;
    let dist = (wr * wr + wz * wz).sqrt();
    if dist <= 1e-12 * ring_r.max(1.0) {
        return Err(Error::Geometry("node coincides with a fillet lip centre".to_string()));
    }
    let n = [ux * wr / dist, uy * wr / dist, wz / dist];
    Ok((dist - plate.fillet_radius, n))
}
