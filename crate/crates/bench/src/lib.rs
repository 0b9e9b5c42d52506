//! Shared fixtures for the criterion benchmarks: a simulated desk-scale
//! case and ready-to-run forward-pass inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sheetform_core::fe::{build_blank_mesh, simulate, OpenPlate, Punch};
use sheetform_core::graph::assemble_graph;
use sheetform_core::hier::{build_hierarchy, coarse_edge_descriptors, init_hierarchical_params};
use sheetform_core::model::{init_model_params, GraphTensors};
use sheetform_core::{
    CaseSetup, ContactConfig, FeatureScaler, HierarchyConfig, Material, ModelConfig, ParamSet,
    ToolSet, Trajectory,
};

/// Desk-scale forming case: 100 mm blank, spherical punch through a
/// filleted die opening.
pub fn bench_case(nx: usize, punch_radius: f64, stroke: f64) -> CaseSetup {
    let mesh = build_blank_mesh(nx, nx, 100.0, 2.0, 10.0).expect("valid mesh");
    CaseSetup {
        case_id: format!("bench-{nx}x{nx}"),
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
        material: Material::default(),
        total_time: 1.0,
        substeps: None,
    }
}

/// A fully simulated reference trajectory.
pub fn bench_trajectory(nx: usize) -> Trajectory {
    simulate(&bench_case(nx, 24.0, 13.0)).expect("simulation converges")
}

/// Everything one forward pass consumes.
pub struct ForwardFixture {
    pub config: ModelConfig,
    pub params: ParamSet<f32>,
    pub tensors: GraphTensors<f32>,
    pub hierarchy: Option<sheetform_core::hier::GraphHierarchy>,
}

/// Builds standardized mid-stroke inputs and freshly initialised parameters
/// for a flat or hierarchical model.
pub fn forward_fixture(traj: &Trajectory, hidden: usize, layers: usize, hierarchical: bool) -> ForwardFixture {
    let contact = ContactConfig::default();
    let config = ModelConfig {
        hidden,
        layers,
        hierarchy: hierarchical.then(|| HierarchyConfig {
            levels: 1,
            ratio: 0.5,
            fine_layers: layers / 2,
            coarse_layers: layers - layers / 2,
            ..HierarchyConfig::default()
        }),
        ..ModelConfig::default()
    };

    let samples: Vec<_> = (0..sheetform_core::fe::NUM_TRANSITIONS)
        .map(|k| assemble_graph(traj, k, contact).expect("graph assembly"))
        .collect();
    let scaler = FeatureScaler::fit(&samples, contact).expect("scaler fit");
    let graph = scaler.transform_graph(&samples[5].0).expect("standardise");
    let mut tensors = GraphTensors::<f32>::from_graph(&graph);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (params, hierarchy) = if config.hierarchy.is_some() {
        let hierarchy =
            build_hierarchy(&traj.mesh, config.hierarchy.as_ref().unwrap()).expect("coarsening");
        let coarse = scaler
            .edge
            .standardize(&coarse_edge_descriptors(hierarchy.coarsest()))
            .expect("coarse edges");
        tensors = tensors.with_coarse_edges(coarse.cast());
        let params =
            init_hierarchical_params(&config, &hierarchy, &mut rng).expect("parameter init");
        (params, Some(hierarchy))
    } else {
        (init_model_params(&config, &mut rng).expect("parameter init"), None)
    };
    ForwardFixture { config, params, tensors, hierarchy }
}
