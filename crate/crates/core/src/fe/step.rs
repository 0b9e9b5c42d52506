//! One explicit substep: forces, central-difference kinematics, and the
//! constitutive update.

use crate::error::{Error, Result};
use crate::fe::contact::{ContactSnapshot, ToolSet};
use crate::fe::element::{centroid_kinematics, element_internal_forces, strain_increment, Material};
use crate::fe::geom::{add, scale, V3};
use crate::fe::mesh::BlankMesh;
use crate::fe::state::SimState;

/// Per-element centroid strain increments implied by the state's most
/// recent displacement increment, with the corotational frame evaluated at
/// the state's positions.
pub fn element_kinematics(state: &SimState, mesh: &BlankMesh) -> Result<Vec<[f64; 3]>> {
    element_strains(&state.positions, &state.last_increment, mesh)
}

fn element_strains(positions: &[V3], increments: &[V3], mesh: &BlankMesh) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(mesh.num_elements());
    for q in &mesh.quads {
        let x = [positions[q[0]], positions[q[1]], positions[q[2]], positions[q[3]]];
        let du = [increments[q[0]], increments[q[1]], increments[q[2]], increments[q[3]]];
        let kin = centroid_kinematics(&x)?;
        out.push(strain_increment(&kin, &du));
    }
    Ok(out)
}

/// Assembles global internal forces from per-element centroid quadrature at
/// the state's current positions, stresses and thicknesses.
pub fn internal_forces(state: &SimState, mesh: &BlankMesh) -> Result<Vec<V3>> {
    let mut forces = vec![[0.0; 3]; mesh.num_nodes()];
    for (e, q) in mesh.quads.iter().enumerate() {
        let x = [
            state.positions[q[0]],
            state.positions[q[1]],
            state.positions[q[2]],
            state.positions[q[3]],
        ];
        let kin = centroid_kinematics(&x)?;
        let f = element_internal_forces(&kin, state.stress[e], state.thickness[e]);
        for (a, &n) in q.iter().enumerate() {
            forces[n] = add(forces[n], f[a]);
        }
    }
    Ok(forces)
}

/// Penalty contact forces and the gap/normal fields they derive from.
///
/// A node inside a tool (negative gap `d`) is pushed along the outward
/// normal with magnitude `penalty * |d|`. Locked displacement components
/// receive no force; their motion is pinned anyway.
pub fn contact_forces(
    state: &SimState,
    mesh: &BlankMesh,
    tools: &ToolSet,
    stroke_fraction: f64,
) -> Result<(Vec<V3>, ContactSnapshot)> {
    let snap = tools.contact_snapshot(&state.positions, stroke_fraction)?;
    let mut forces = vec![[0.0; 3]; mesh.num_nodes()];
    for i in 0..mesh.num_nodes() {
        for t in 0..snap.gap[i].len() {
            let d = snap.gap[i][t];
            if d < 0.0 {
                forces[i] = add(forces[i], scale(snap.normal[i][t], -tools.penalty_stiffness * d));
            }
        }
        for axis in 0..3 {
            if mesh.boundary[i][axis] {
                forces[i][axis] = 0.0;
            }
        }
    }
    Ok((forces, snap))
}

/// Advances the state by one central-difference substep.
///
/// Acceleration comes from the semi-discrete balance with mass-proportional
/// damping acting on the previous half-step velocity; the first substep
/// uses the half-step start-up rule. Strain increments are evaluated with
/// the corotational frame of the pre-update configuration, then positions
/// move and the plane-stress update with the thickness closure runs.
pub fn step_explicit(
    state: &mut SimState,
    mesh: &BlankMesh,
    material: &Material,
    tools: &ToolSet,
    masses: &[f64],
    dt: f64,
    damping: f64,
    stroke_fraction: f64,
) -> Result<()> {
    if dt <= 0.0 {
        return Err(Error::Parameter(format!("substep size must be positive, got {dt}")));
    }
    let internal = internal_forces(state, mesh)?;
    let (external, _snap) = contact_forces(state, mesh, tools, stroke_fraction)?;

    let first = state.time_index == 0;
    let c = material.plane_stress_stiffness();
    let v = mesh.num_nodes();
    let mut du = vec![[0.0_f64; 3]; v];
    for i in 0..v {
        if masses[i] <= 0.0 {
            return Err(Error::Parameter(format!("node {i} has non-positive mass")));
        }
        for axis in 0..3 {
            let acc = (external[i][axis] - internal[i][axis]) / masses[i]
                - damping * state.velocities[i][axis];
            let v_new = if first {
                state.velocities[i][axis] + 0.5 * acc * dt
            } else {
                state.velocities[i][axis] + acc * dt
            };
            let v_new = if mesh.boundary[i][axis] { 0.0 } else { v_new };
            state.velocities[i][axis] = v_new;
            du[i][axis] = v_new * dt;
        }
    }

    // Strains in the pre-update frame, then move and update the material.
    let strains = element_strains(&state.positions, &du, mesh)?;
    for i in 0..v {
        state.positions[i] = add(state.positions[i], du[i]);
    }
    state.last_increment = du;
    for (e, de) in strains.iter().enumerate() {
        for row in 0..3 {
            state.stress[e][row] += c[row][0] * de[0] + c[row][1] * de[1] + c[row][2] * de[2];
        }
        state.eps33[e] += material.thickness_strain_increment(de[0], de[1]);
    }
    state.update_thickness(mesh.thickness);
    state.time_index += 1;
    Ok(())
}
