//! Rollout evaluation: scalar error metrics, per-step error curves, and
//! attention-map extraction, plus their CSV renderings.

mod metrics;
mod report;

pub use metrics::{
    com_distance, e_mae, e_pos, relative_thinning_error, thinning_threshold_error, top_p_set,
    DEFAULT_TAU, REL_EPS,
};
pub use report::{
    attention_csv, attention_deviation, curves_csv, evaluate_case, metrics_csv, AttentionRow,
    CurveRow, MetricReport,
};
