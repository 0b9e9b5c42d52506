//! Per-case evaluation reports, error curves, attention maps, and their
//! CSV renderings.

use crate::error::{Error, Result};
use crate::eval::metrics::{
    com_distance, e_mae, e_pos, relative_thinning_error, thinning_threshold_error, REL_EPS,
};
use crate::fe::Trajectory;
use crate::graph::element_centers;
use crate::train::EdgeAttention;

/// Errors of one rollout transition.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    /// Snapshot index, 1-based: row `k` compares predicted and reference
    /// state after `k` transitions.
    pub step: usize,
    pub e_pos: f64,
    /// `None` when no reference element clears the threshold yet.
    pub e_theta_tau: Option<f64>,
}

/// All scalar metrics of one predicted case, plus the per-step error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub case_id: String,
    /// Aggregator label, e.g. `cross_att_edge_key`.
    pub model: String,
    /// Architecture/noise label, e.g. `flat/adaptive`.
    pub variant: String,
    pub tau: f64,
    pub p: f64,
    pub e_pos: f64,
    pub e_mae: f64,
    pub e_theta_tau: Option<f64>,
    pub e_com_p: f64,
    pub e_theta_rel_p: f64,
    pub curve: Vec<CurveRow>,
}

/// Compares a predicted trajectory against its reference.
///
/// Scalar metrics are evaluated at the final snapshot; the curve holds one
/// row per transition.
pub fn evaluate_case(
    pred: &Trajectory,
    reference: &Trajectory,
    model: &str,
    variant: &str,
    tau: f64,
    p: f64,
) -> Result<MetricReport> {
    pred.validate()?;
    reference.validate()?;
    if pred.mesh != reference.mesh {
        return Err(Error::Contract(format!(
            "case `{}`: predicted and reference meshes differ",
            reference.case_id
        )));
    }
    if pred.num_snapshots() != reference.num_snapshots() {
        return Err(Error::Contract(format!(
            "case `{}`: {} predicted snapshots vs {} reference",
            reference.case_id,
            pred.num_snapshots(),
            reference.num_snapshots()
        )));
    }

    let last = pred.num_snapshots() - 1;
    let quads = &reference.mesh.quads;
    let pred_centers = element_centers(&pred.positions[last], quads);
    let ref_centers = element_centers(&reference.positions[last], quads);

    let mut curve = Vec::with_capacity(last);
    for k in 1..=last {
        curve.push(CurveRow {
            step: k,
            e_pos: e_pos(&pred.positions[k], &reference.positions[k])?,
            e_theta_tau: thinning_threshold_error(
                &pred.thinning[k],
                &reference.thinning[k],
                tau,
            )?,
        });
    }

    Ok(MetricReport {
        case_id: reference.case_id.clone(),
        model: model.to_string(),
        variant: variant.to_string(),
        tau,
        p,
        e_pos: e_pos(&pred.positions[last], &reference.positions[last])?,
        e_mae: e_mae(&pred.positions[last], &reference.positions[last])?,
        e_theta_tau: thinning_threshold_error(
            &pred.thinning[last],
            &reference.thinning[last],
            tau,
        )?,
        e_com_p: com_distance(
            &pred.thinning[last],
            &pred_centers,
            &reference.thinning[last],
            &ref_centers,
            p,
        )?,
        e_theta_rel_p: relative_thinning_error(
            &pred.thinning[last],
            &reference.thinning[last],
            p,
            REL_EPS,
        )?,
        curve,
    })
}

/// One edge of an attention-deviation map.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    pub element_id: usize,
    pub node_id: usize,
    pub alpha: f64,
    /// Deviation from uniform: `alpha - 1/|N(i)|` for receiver `i`.
    pub delta_alpha: f64,
}

/// Expands a final-layer attention map into per-edge deviations from the
/// uniform weighting.
pub fn attention_deviation(attention: &EdgeAttention) -> Result<Vec<AttentionRow>> {
    let n = attention.alpha.len();
    if attention.elems.len() != n || attention.nodes.len() != n {
        return Err(Error::shape(
            "attention_deviation",
            format!(
                "{} weights, {} elements, {} nodes",
                n,
                attention.elems.len(),
                attention.nodes.len()
            ),
        ));
    }
    let max_elem = attention.elems.iter().copied().max().map_or(0, |m| m + 1);
    let mut degree = vec![0usize; max_elem];
    for &e in &attention.elems {
        degree[e] += 1;
    }
    Ok((0..n)
        .map(|i| {
            let e = attention.elems[i];
            AttentionRow {
                element_id: e,
                node_id: attention.nodes[i],
                alpha: attention.alpha[i],
                delta_alpha: attention.alpha[i] - 1.0 / degree[e] as f64,
            }
        })
        .collect())
}

fn push_option(line: &mut String, value: Option<f64>) {
    match value {
        Some(v) => line.push_str(&format!("{v}")),
        None => line.push_str("na"),
    }
}

/// Renders the scalar-metric table.
///
/// Columns: `case_id,model,variant,E_pos_mm,E_mae_mm,E_theta_tau,
/// E_com_p_mm,E_theta_rel_p_pct`. Not-applicable entries render as `na`.
pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out =
        String::from("case_id,model,variant,E_pos_mm,E_mae_mm,E_theta_tau,E_com_p_mm,E_theta_rel_p_pct\n");
    for r in reports {
        let mut line = format!(
            "{},{},{},{},{},",
            r.case_id, r.model, r.variant, r.e_pos, r.e_mae
        );
        push_option(&mut line, r.e_theta_tau);
        line.push_str(&format!(",{},{}\n", r.e_com_p, r.e_theta_rel_p));
        out.push_str(&line);
    }
    out
}

/// Renders every per-step curve in long format:
/// `case_id,step,e_pos,e_theta_tau`.
pub fn curves_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("case_id,step,e_pos,e_theta_tau\n");
    for r in reports {
        for row in &r.curve {
            let mut line = format!("{},{},{},", r.case_id, row.step, row.e_pos);
            push_option(&mut line, row.e_theta_tau);
            line.push('\n');
            out.push_str(&line);
        }
    }
    out
}

/// Renders an attention map: `element_id,node_id,alpha,delta_alpha`.
pub fn attention_csv(rows: &[AttentionRow]) -> String {
    let mut out = String::from("element_id,node_id,alpha,delta_alpha\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.element_id, r.node_id, r.alpha, r.delta_alpha
        ));
    }
    out
}
