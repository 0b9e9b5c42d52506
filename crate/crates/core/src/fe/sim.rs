//! Whole-process simulation: substep loop and snapshot recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::contact::ToolSet;
use crate::fe::element::Material;
use crate::fe::geom::sub;
use crate::fe::mesh::{lumped_mass, BlankMesh};
use crate::fe::state::{SimState, Trajectory};
use crate::fe::step::step_explicit;

/// Snapshots recorded per trajectory (stroke fractions 0, 0.1, ..., 1).
pub const NUM_SNAPSHOTS: usize = 11;

/// Transitions between consecutive snapshots.
pub const NUM_TRANSITIONS: usize = NUM_SNAPSHOTS - 1;

/// Everything needed to run one forming case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSetup {
    pub case_id: String,
    pub mesh: BlankMesh,
    pub material: Material,
    pub tools: ToolSet,
    /// Duration of the forming process; the punch descends linearly over it.
    pub total_time: f64,
    /// Explicit substeps; `None` derives the count from the stability rule.
    pub substeps: Option<usize>,
}

/// Stable substep size: half the shortest element crossing time of a
/// longitudinal wave.
pub fn stable_dt(mesh: &BlankMesh, material: &Material) -> f64 {
    0.5 * mesh.min_edge_length() / material.wave_speed()
}

/// Number of substeps actually used: the stability-derived count rounded up
/// to a multiple of [`NUM_TRANSITIONS`] so snapshots land exactly on tenths
/// of the stroke.
pub fn resolve_substeps(setup: &CaseSetup) -> Result<usize> {
    let n = match setup.substeps {
        Some(n) => n,
        None => (setup.total_time / stable_dt(&setup.mesh, &setup.material)).ceil() as usize,
    };
    let n = n.div_ceil(NUM_TRANSITIONS) * NUM_TRANSITIONS;
    if n < NUM_TRANSITIONS {
        return Err(Error::Parameter(format!(
            "at least {NUM_TRANSITIONS} substeps required, got {n}"
        )));
    }
    Ok(n)
}

/// Runs one forming case and records [`NUM_SNAPSHOTS`] snapshots at evenly
/// spaced punch-stroke fractions.
///
/// Mass-proportional damping is fixed at `5 / total_time` so transients
/// decay well within the process duration. Recorded increments are
/// position differences between consecutive snapshots, not substep
/// increments; contact gaps and normals are evaluated at each snapshot's
/// stroke fraction.
pub fn simulate(setup: &CaseSetup) -> Result<Trajectory> {
    setup.material.validate()?;
    setup.tools.validate()?;
    if setup.total_time <= 0.0 {
        return Err(Error::Parameter(format!(
            "total time must be positive, got {}",
            setup.total_time
        )));
    }
    let mesh = &setup.mesh;
    let masses = lumped_mass(mesh, &setup.material)?;
    let substeps = resolve_substeps(setup)?;
    let dt = setup.total_time / substeps as f64;
    let damping = 5.0 / setup.total_time;
    let per_snapshot = substeps / NUM_TRANSITIONS;

    let mut state = SimState::initial(mesh);
    let mut traj = Trajectory {
        case_id: setup.case_id.clone(),
        mesh: mesh.clone(),
        tools: setup.tools.clone(),
        total_time: setup.total_time,
        positions: Vec::with_capacity(NUM_SNAPSHOTS),
        increments: Vec::with_capacity(NUM_SNAPSHOTS),
        thinning: Vec::with_capacity(NUM_SNAPSHOTS),
        contact_gap: Vec::with_capacity(NUM_SNAPSHOTS),
        contact_normal: Vec::with_capacity(NUM_SNAPSHOTS),
        stroke: Vec::with_capacity(NUM_SNAPSHOTS),
    };
    record(&mut traj, &state, &setup.tools, 0.0)?;

    for m in 0..substeps {
        // Tool pose at the start of the substep; the punch sweeps linearly.
        let fraction = m as f64 / substeps as f64;
        step_explicit(
            &mut state,
            mesh,
            &setup.material,
            &setup.tools,
            &masses,
            dt,
            damping,
            fraction,
        )?;
        if (m + 1) % per_snapshot == 0 {
            let fraction = (m + 1) as f64 / substeps as f64;
            record(&mut traj, &state, &setup.tools, fraction)?;
        }
    }
    debug_assert_eq!(traj.positions.len(), NUM_SNAPSHOTS);
    traj.validate()?;
    Ok(traj)
}

fn record(
    traj: &mut Trajectory,
    state: &SimState,
    tools: &ToolSet,
    stroke_fraction: f64,
) -> Result<()> {
    let snap = tools.contact_snapshot(&state.positions, stroke_fraction)?;
    let increment = match traj.positions.last() {
        Some(prev) => state
            .positions
            .iter()
            .zip(prev)
            .map(|(&cur, &old)| sub(cur, old))
            .collect(),
        None => vec![[0.0; 3]; state.positions.len()],
    };
    traj.positions.push(state.positions.clone());
    traj.increments.push(increment);
    traj.thinning.push(state.thinning.clone());
    traj.contact_gap.push(snap.gap);
    traj.contact_normal.push(snap.normal);
    traj.stroke.push(tools.punch.stroke * stroke_fraction);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::toy_case;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_stroke_leaves_everything_in_place() {
        let mut setup = toy_case(5, 24.0, 0.0);
        setup.substeps = Some(200);
        let traj = simulate(&setup).unwrap();
        assert_eq!(traj.num_snapshots(), NUM_SNAPSHOTS);
        for k in 0..NUM_SNAPSHOTS {
            assert_eq!(traj.positions[k], traj.positions[0], "snapshot {k}");
            assert!(traj.thinning[k].iter().all(|&t| t == 0.0));
            assert!(traj.increments[k].iter().all(|&du| du == [0.0; 3]));
            assert_eq!(traj.stroke[k], 0.0);
        }
    }

    #[test]
    fn punch_forms_a_dome_and_thins_the_sheet() {
        let setup = toy_case(9, 24.0, 13.0);
        let traj = simulate(&setup).unwrap();
        // Centre node of the 9x9 grid is node 40.
        let centre_z = traj.positions[NUM_SNAPSHOTS - 1][40][2];
        assert!(
            centre_z < -0.5 * 13.0 && centre_z > -1.5 * 13.0,
            "centre should follow the punch to about stroke depth, got {centre_z}"
        );
        // Monotone descent of the centre across snapshots after contact.
        let z_mid = traj.positions[5][40][2];
        assert!(z_mid < 0.0 && z_mid > centre_z);
        // Thinning grows towards the end and peaks well above the
        // flange elements.
        let final_thinning = traj.thinning.last().unwrap();
        let max = final_thinning.iter().cloned().fold(0.0_f64, f64::max);
        assert!(max > 0.005, "peak thinning {max} too small for a formed dome");
        // Flange corner element (index 0) barely changes thickness.
        assert!(final_thinning[0].abs() < max / 5.0);
        // Stroke column records the punch travel at each snapshot.
        assert_abs_diff_eq!(traj.stroke[3], 13.0 * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn increments_are_snapshot_position_differences() {
        let setup = toy_case(7, 22.0, 10.0);
        let traj = simulate(&setup).unwrap();
        for k in 1..NUM_SNAPSHOTS {
            for i in 0..traj.num_nodes() {
                let diff = sub(traj.positions[k][i], traj.positions[k - 1][i]);
                assert_eq!(traj.increments[k][i], diff);
            }
        }
    }

    #[test]
    fn substeps_round_to_snapshot_grid() {
        let mut setup = toy_case(5, 24.0, 10.0);
        setup.substeps = Some(101);
        assert_eq!(resolve_substeps(&setup).unwrap(), 110);
        setup.substeps = None;
        let auto = resolve_substeps(&setup).unwrap();
        assert_eq!(auto % NUM_TRANSITIONS, 0);
        let dt = setup.total_time / auto as f64;
        assert!(dt <= stable_dt(&setup.mesh, &setup.material));
    }

    #[test]
    fn smaller_timestep_changes_little() {
        // Halving the substep size should barely move the final snapshot —
        // the quasi-static process is resolved, not marginal.
        let mut setup = toy_case(9, 24.0, 13.0);
        let base = resolve_substeps(&setup).unwrap();
        setup.substeps = Some(base * 2);
        let fine = simulate(&setup).unwrap();
        setup.substeps = Some(base);
        let coarse = simulate(&setup).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..coarse.num_nodes() {
            let d = crate::fe::geom::norm(sub(
                coarse.positions[NUM_SNAPSHOTS - 1][i],
                fine.positions[NUM_SNAPSHOTS - 1][i],
            ));
            worst = worst.max(d);
        }
        assert!(
            worst < 0.01 * 13.0,
            "dt halving moved final positions by {worst} mm (>1% of stroke)"
        );
    }
}
