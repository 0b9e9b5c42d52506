//! Membrane quad element: corotational kinematics, plane-stress material,
//! thinning closure, and centroid-quadrature internal forces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::geom::{add, cross, dot, normalize, scale, sub, V3};

/// Quadrature weight of the single centroid point on the `[-1,1]^2`
/// reference square (its area).
pub const CENTROID_WEIGHT: f64 = 4.0;

/// Reference-square corner coordinates matching the connectivity order.
const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Linear-elastic plane-stress membrane material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    /// Through-thickness closure: incompressible
    /// (`de33 = -(de11 + de22)`) when true, elastic
    /// (`de33 = -nu/(1-nu) * (de11 + de22)`) when false.
    pub incompressible_thinning: bool,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if self.young_modulus <= 0.0 {
            return Err(Error::Parameter(format!(
                "young modulus must be positive, got {}",
                self.young_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Parameter(format!(
                "poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if self.density <= 0.0 {
            return Err(Error::Parameter(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// Plane-stress stiffness in Voigt order `(s11, s22, s12)` with
    /// engineering shear.
    pub fn plane_stress_stiffness(&self) -> [[f64; 3]; 3] {
        let e = self.young_modulus;
        let nu = self.poisson_ratio;
        let f = e / (1.0 - nu * nu);
        [
            [f, f * nu, 0.0],
            [f * nu, f, 0.0],
            [0.0, 0.0, f * (1.0 - nu) / 2.0],
        ]
    }

    /// Through-thickness strain increment implied by an in-plane increment.
    pub fn thickness_strain_increment(&self, de11: f64, de22: f64) -> f64 {
        if self.incompressible_thinning {
            -(de11 + de22)
        } else {
            -self.poisson_ratio / (1.0 - self.poisson_ratio) * (de11 + de22)
        }
    }

    /// Speed of longitudinal waves used for the stable-timestep estimate.
    pub fn wave_speed(&self) -> f64 {
        (self.young_modulus / self.density).sqrt()
    }

    /// Alias of [`Default::default`] kept for readability in tests.
    pub fn test_default() -> Self {
        Material::default()
    }
}

/// Soft desk-scale material: compliant enough that the explicit integrator
/// resolves a full forming stroke in a practical number of substeps.
impl Default for Material {
    fn default() -> Self {
        Material {
            young_modulus: 5.0e4,
            poisson_ratio: 0.3,
            density: 1.0e-3,
            incompressible_thinning: true,
        }
    }
}

/// Centroid kinematics of one quad in its corotational frame: in-plane
/// shape-function gradients, Jacobian determinant, and the frame itself.
#[derive(Debug, Clone)]
pub struct CentroidKinematics {
    /// Local in-plane axes and normal.
    pub e1: V3,
    pub e2: V3,
    pub e3: V3,
    /// `d N_a / d(x, y)` in the local frame at the centroid.
    pub dndx: [[f64; 2]; 4],
    /// Jacobian determinant at the centroid (local area measure).
    pub det_j: f64,
}

/// Builds the corotational frame and centroid gradients from the four
/// current corner positions.
///
/// The in-plane axes come from the mean element edge directions,
/// orthonormalised so rigid rotations rotate the frame with the element.
pub fn centroid_kinematics(x: &[V3; 4]) -> Result<CentroidKinematics> {
    let g1 = scale(add(sub(x[1], x[0]), sub(x[2], x[3])), 0.5);
    let g2 = scale(add(sub(x[3], x[0]), sub(x[2], x[1])), 0.5);
    let e1 = normalize(g1)
        .ok_or_else(|| Error::Geometry("element edge direction collapsed".to_string()))?;
    let g2_orth = sub(g2, scale(e1, dot(g2, e1)));
    let e2 = normalize(g2_orth)
        .ok_or_else(|| Error::Geometry("element is a degenerate sliver".to_string()))?;
    let e3 = cross(e1, e2);

    // Project corners onto the frame (centroid offset cancels in gradients).
    let mut px = [0.0; 4];
    let mut py = [0.0; 4];
    for a in 0..4 {
        px[a] = dot(x[a], e1);
        py[a] = dot(x[a], e2);
    }
    // Jacobian rows are d(position)/d(xi) and d(position)/d(eta).
    let mut j = [[0.0_f64; 2]; 2];
    for a in 0..4 {
        let (dxi, deta) = (XI[a] / 4.0, ETA[a] / 4.0);
        j[0][0] += dxi * px[a];
        j[0][1] += dxi * py[a];
        j[1][0] += deta * px[a];
        j[1][1] += deta * py[a];
    }
    let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det_j <= 0.0 {
        return Err(Error::Geometry(format!("element Jacobian not positive ({det_j:.3e})")));
    }
    let inv = [
        [j[1][1] / det_j, -j[0][1] / det_j],
        [-j[1][0] / det_j, j[0][0] / det_j],
    ];
    let mut dndx = [[0.0; 2]; 4];
    for a in 0..4 {
        let (dxi, deta) = (XI[a] / 4.0, ETA[a] / 4.0);
        dndx[a][0] = inv[0][0] * dxi + inv[0][1] * deta;
        dndx[a][1] = inv[1][0] * dxi + inv[1][1] * deta;
    }
    Ok(CentroidKinematics { e1, e2, e3, dndx, det_j })
}

/// Strain increment `(de11, de22, dgamma12)` at the centroid from nodal
/// displacement increments, i.e. `B . du` with `du` projected into the
/// element frame.
pub fn strain_increment(kin: &CentroidKinematics, du: &[V3; 4]) -> [f64; 3] {
    let mut de = [0.0; 3];
    for a in 0..4 {
        let ux = dot(du[a], kin.e1);
        let uy = dot(du[a], kin.e2);
        de[0] += kin.dndx[a][0] * ux;
        de[1] += kin.dndx[a][1] * uy;
        de[2] += kin.dndx[a][1] * ux + kin.dndx[a][0] * uy;
    }
    de
}

/// Nodal internal forces of one element: single-point quadrature of
/// `B^T sigma` scaled by the current thickness, mapped back to 3-D.
pub fn element_internal_forces(
    kin: &CentroidKinematics,
    stress: [f64; 3],
    thickness: f64,
) -> [V3; 4] {
    let s = CENTROID_WEIGHT * kin.det_j * thickness;
    let mut f = [[0.0; 3]; 4];
    for a in 0..4 {
        let fx = s * (kin.dndx[a][0] * stress[0] + kin.dndx[a][1] * stress[2]);
        let fy = s * (kin.dndx[a][1] * stress[1] + kin.dndx[a][0] * stress[2]);
        f[a] = add(scale(kin.e1, fx), scale(kin.e2, fy));
    }
    f
}
