//! Shared fixtures for the unit-test suite.

use crate::fe::{build_blank_mesh, CaseSetup, Material, OpenPlate, Punch, ToolSet};

/// Desk-scale toy case in millimetre units used across the test suite:
/// 100 mm square blank clamped over a 10 mm rim band, spherical punch
/// pressing through a filleted die opening with a holder over the flange.
/// Substeps resolve automatically from the stability rule.
pub(crate) fn toy_case(nx: usize, punch_radius: f64, stroke: f64) -> CaseSetup {
    let mesh = build_blank_mesh(nx, nx, 100.0, 2.0, 10.0).unwrap();
    CaseSetup {
        case_id: format!("toy-{nx}x{nx}-r{punch_radius}-s{stroke}"),
        tools: ToolSet {
            punch: Punch {
                center_xy: [50.0, 50.0],
                start_z: punch_radius,
                radius: punch_radius,
                stroke,
            },
            die: OpenPlate {
                axis_xy: [50.0, 50.0],
                plane_z: 0.0,
                throat_radius: 30.0,
                fillet_radius: 5.0,
                facing_up: true,
            },
            holder: OpenPlate {
                axis_xy: [50.0, 50.0],
                plane_z: 0.0,
                throat_radius: 32.0,
                fillet_radius: 4.0,
                facing_up: false,
            },
            penalty_stiffness: 2.0e5,
        },
        mesh,
        material: Material::test_default(),
        total_time: 1.0,
        substeps: None,
    }
}
