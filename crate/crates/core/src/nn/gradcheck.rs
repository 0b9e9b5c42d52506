//! Central-difference verification of tape gradients.
//!
//! Used by the verification suite to compare every analytic parameter
//! gradient of a full model forward pass against finite differences in
//! 64-bit precision.

use crate::error::Result;
use crate::nn::mat::Mat;
use crate::nn::params::ParamSet;
use crate::nn::tape::{Tape, Var};

/// Worst observed disagreement from a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error across every parameter entry.
    pub max_rel_error: f64,
    /// Parameter holding the worst entry.
    pub worst_param: String,
    /// Flat entry index inside that parameter.
    pub worst_entry: usize,
    /// Analytic gradient at the worst entry.
    pub worst_analytic: f64,
    /// Central-difference estimate at the worst entry.
    pub worst_numeric: f64,
    /// Number of scalar entries checked.
    pub entries_checked: usize,
}

/// Compares analytic gradients against central differences for every entry
/// of every parameter.
///
/// `build` must record a fresh tape from the given parameters and return
/// the scalar loss node; it is invoked twice per entry with perturbed
/// copies. The relative error of one entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`; the floor
/// keeps near-zero gradients from registering as spurious relative blowups
/// while still requiring their absolute agreement.
pub fn check_gradients(
    params: &ParamSet<f64>,
    h: f64,
    floor: f64,
    build: &dyn Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    let analytic = params.gather_grads(&tape, &grads);

    let eval = |p: &ParamSet<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let l = build(&mut t, p)?;
        Ok(t.value(l).get(0, 0))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
    };
    let mut work = params.clone();
    for idx in 0..params.len() {
        let n_entries = params.mat(idx).data().len();
        for e in 0..n_entries {
            let base = params.mat(idx).data()[e];
            work.mat_mut(idx).data_mut()[e] = base + h;
            let f_plus = eval(&work)?;
            work.mat_mut(idx).data_mut()[e] = base - h;
            let f_minus = eval(&work)?;
            work.mat_mut(idx).data_mut()[e] = base;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[idx]
                .as_ref()
                .map_or(0.0, |g: &Mat<f64>| g.data()[e]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.entries_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = params.name(idx).to_string();
                report.worst_entry = e;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
