//! Structured square blank meshes.

use serde::{Deserialize, Serialize} ;

use crate::error::{Error, Result};
use crate::fe::element::Material;
use crate::fe::geom::{cross, norm, sub, V3};

/// Quad mesh of an initially flat square blank in the `z = 0` plane.
///
/// Nodes are numbered row-major with `x` varying fastest; element `(i, j)`
/// connects its four corners counter-clockwise. Nodes whose distance to the
/// blank boundary is strictly below the clamp band are pinned in all three
/// directions, standing in for the drawbead/clamp ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlankMesh {
    pub nx: usize,
    pub ny: usize,
    /// Edge length of the square blank.
    pub side: f64,
    /// Initial sheet thickness `th0`.
    pub thickness: f64,
    /// Width of the clamped rim; zero clamps nothing.
    pub clamp_band: f64,
    /// Reference node positions.
    pub positions: Vec<V3>,
    /// Element connectivity, four node indices per quad.
    pub quads: Vec<[usize; 4]>,
    /// Per-node, per-axis displacement locks.
    pub boundary: Vec<[bool; 3]>,
}

impl BlankMesh {
    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn num_elements(&self) -> usize {
        self.quads.len()
    }

    /// Shortest element edge in the reference configuration.
    pub fn min_edge_length(&self) -> f64 {
        let mut min = f64::INFINITY;
        for q in &self.quads {
            for k in 0..4 {
                let a = self.positions[q[k]];
                let b = self.positions[q[(k + 1) % 4]];
                min = min.min(norm(sub(b, a)));
            }
        }
        min
    }

    /// True when every displacement component of the node is locked.
    pub fn is_clamped(&self, node: usize) -> bool {
        self.boundary[node].iter().all(|&b| b)
    }

    /// Reference area of one quad (two-triangle split).
    pub fn element_area(&self, elem: usize) -> f64 {
        let q = self.quads[elem];
        let [a, b, c, d] =
            [self.positions[q[0]], self.positions[q[1]], self.positions[q[2]], self.positions[q[3]]];
        0.5 * norm(cross(sub(b, a), sub(c, a))) + 0.5 * norm(cross(sub(c, a), sub(d, a)))
    }
}

/// Builds an `nx x ny`-node structured blank of the given side length.
///
/// The blank spans `[0, side]^2`; for `nx != ny` the node spacing differs
/// per axis but the outline stays square. A node is clamped when its
/// distance to the outline is strictly less than `clamp_band`.
pub fn build_blank_mesh(
    nx: usize,
    ny: usize,
    side: f64,
    thickness: f64,
    clamp_band: f64,
) -> Result<BlankMesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::Parameter(format!("mesh needs at least 2x2 nodes, got {nx}x{ny}")));
    }
    if side <= 0.0 || thickness <= 0.0 {
        return Err(Error::Parameter(format!(
            "side and thickness must be positive, got {side} and {thickness}"
        )));
    }
    if clamp_band < 0.0 {
        return Err(Error::Parameter(format!("clamp band must be non-negative, got {clamp_band}")));
    }
    let sx = side / (nx - 1) as f64;
    let sy = side / (ny - 1) as f64;
    let mut positions = Vec::with_capacity(nx * ny);
    let mut boundary = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 * sx, j as f64 * sy);
            positions.push([x, y, 0.0]);
            let rim_dist = x.min(side - x).min(y).min(side - y);
            boundary.push([rim_dist < clamp_band; 3]);
        }
    }
    let mut quads = Vec::with_capacity((nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let n0 = j * nx + i;
            quads.push([n0, n0 + 1, n0 + nx + 1, n0 + nx]);
        }
    }
    Ok(BlankMesh { nx, ny, side, thickness, clamp_band, positions, quads, boundary })
}

/// Per-node lumped masses: each quad spreads `density * area * thickness`
/// equally onto its four corners.
pub fn lumped_mass(mesh: &BlankMesh, material: &Material) -> Result<Vec<f64>> {
    let mut masses = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let area = mesh.element_area(e);
        if area <= f64::EPSILON * mesh.side * mesh.side {
            return Err(Error::Geometry(format!("element {e} has (near-)zero reference area")));
        }
        let share = material.density * area * mesh.thickness / 4.0;
        for &n in &mesh.quads[e] {
            masses[n] += share;
        }
    }
    Ok(masses)
}
