//! Ablation sweeps over aggregator, architecture, and noise strategy, and
//! grid search of the noise amplitude.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::exp::dataset::worker_pool;
use crate::exp::run::{load_split_guarded, run_eval, run_train, variant_tag};
use crate::exp::ExperimentConfig;
use crate::model::{AggregatorKind, HierarchyConfig};
use crate::train::{rollout, NetPredictor, NoiseMode};

/// Median of a non-empty sample; even counts average the middle pair.
fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Per-case metrics reduced to split-level medians.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMetrics {
    pub e_pos: f64,
    pub e_mae: f64,
    /// `None` when the thinning threshold selected no element in any case.
    pub e_theta_tau: Option<f64>,
    pub e_com_p: f64,
    pub e_theta_rel_p: f64,
}

impl SummaryMetrics {
    pub fn from_reports(reports: &[MetricReport]) -> Result<SummaryMetrics> {
        if reports.is_empty() {
            return Err(Error::Parameter("no evaluation reports to summarise".to_string()));
        }
        let collect = |f: fn(&MetricReport) -> f64| -> f64 {
            median(reports.iter().map(f).collect()).expect("non-empty")
        };
        Ok(SummaryMetrics {
            e_pos: collect(|r| r.e_pos),
            e_mae: collect(|r| r.e_mae),
            e_theta_tau: median(reports.iter().filter_map(|r| r.e_theta_tau).collect()),
            e_com_p: collect(|r| r.e_com_p),
            e_theta_rel_p: collect(|r| r.e_theta_rel_p),
        })
    }
}

/// One trained-and-evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AblateRow {
    /// Aggregator tag, e.g. `cross_att_edge_key`.
    pub model: String,
    /// Architecture/noise tag, e.g. `hier/adaptive`.
    pub variant: String,
    pub seed: u64,
    pub metrics: SummaryMetrics,
}

/// Sweep result: completed rows plus quarantined failures.
#[derive(Debug, Clone)]
pub struct AblateOutcome {
    pub rows: Vec<AblateRow>,
    /// `(cell directory name, error)` of every cell that failed; failures
    /// never abort the remaining grid.
    pub quarantined: Vec<(String, String)>,
}

fn cell_tag(aggregator: AggregatorKind, hierarchical: bool, noise: NoiseMode, seed: u64) -> String {
    let arch = if hierarchical { "hier" } else { "flat" };
    format!("{}_{arch}_{}_s{seed}", aggregator.name(), noise.name())
}

fn cell_config(
    base: &ExperimentConfig,
    aggregator: AggregatorKind,
    hierarchical: bool,
    noise: NoiseMode,
    seed: u64,
) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.model.aggregator = aggregator;
    cfg.model.hierarchy = if hierarchical {
        Some(base.model.hierarchy.clone().unwrap_or_else(HierarchyConfig::default))
    } else {
        None
    };
    cfg.train.noise = noise;
    cfg.train.seed = seed;
    cfg
}

fn run_cell(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    cell_dir: &Path,
) -> Result<SummaryMetrics> {
    let outcome = run_train(cfg, dataset_dir, cell_dir, false)?;
    let reports = run_eval(&outcome.checkpoint, dataset_dir, "test", cell_dir, &cfg.eval)?;
    SummaryMetrics::from_reports(&reports)
}

/// Trains and evaluates every combination of aggregator, flat/hierarchical
/// architecture, and noise strategy, once per seed, with one run directory
/// per cell under `out_root`. All cells of one seed share that seed, so
/// differences within the seed isolate the ablated ingredient.
///
/// Writes one ranked CSV per metric (`rank_by_<metric>.csv`) with a
/// percent-change column against the unweighted-mean baseline of the same
/// variant and seed, plus `quarantine.json` listing failed cells.
pub fn ablate(
    config: &ExperimentConfig,
    dataset_dir: impl AsRef<Path>,
    out_root: impl AsRef<Path>,
    seeds: &[u64],
) -> Result<AblateOutcome> {
    if seeds.is_empty() {
        return Err(Error::Parameter("ablation needs at least one seed".to_string()));
    }
    // Deliberately no up-front config validation: each cell validates its
    // own derived config, so a setting that breaks only part of the grid
    // quarantines those cells instead of aborting the sweep.
    let dataset_dir = dataset_dir.as_ref();
    let out_root = out_root.as_ref();
    std::fs::create_dir_all(out_root)?;

    let mut cells = Vec::new();
    for &seed in seeds {
        for aggregator in AggregatorKind::ALL {
            for hierarchical in [false, true] {
                for noise in NoiseMode::ALL {
                    cells.push((aggregator, hierarchical, noise, seed));
                }
            }
        }
    }

    let outcomes: Vec<std::result::Result<AblateRow, (String, String)>> =
        worker_pool()?.install(|| {
            cells
                .par_iter()
                .map(|&(aggregator, hierarchical, noise, seed)| {
                    let tag = cell_tag(aggregator, hierarchical, noise, seed);
                    let cfg = cell_config(config, aggregator, hierarchical, noise, seed);
                    run_cell(&cfg, dataset_dir, &out_root.join(&tag))
                        .map(|metrics| AblateRow {
                            model: aggregator.name().to_string(),
                            variant: variant_tag(&cfg.model, noise),
                            seed,
                            metrics,
                        })
                        .map_err(|e| (tag, e.to_string()))
                })
                .collect()
        });

    let mut rows = Vec::new();
    let mut quarantined = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(failure) => quarantined.push(failure),
        }
    }

    for (metric, value) in RANKED_METRICS {
        let csv = ranked_csv(&rows, metric, value);
        std::fs::write(out_root.join(format!("rank_by_{metric}.csv")), csv)?;
    }
    std::fs::write(
        out_root.join("quarantine.json"),
        serde_json::to_string_pretty(&quarantined)?,
    )?;
    Ok(AblateOutcome { rows, quarantined })
}

type MetricGetter = fn(&SummaryMetrics) -> Option<f64>;

/// Every ranked table: file-name fragment and value accessor.
pub const RANKED_METRICS: [(&str, MetricGetter); 5] = [
    ("E_pos_mm", |m| Some(m.e_pos)),
    ("E_mae_mm", |m| Some(m.e_mae)),
    ("E_theta_tau", |m| m.e_theta_tau),
    ("E_com_p_mm", |m| Some(m.e_com_p)),
    ("E_theta_rel_p_pct", |m| Some(m.e_theta_rel_p)),
];

/// Renders one ranked comparison table, best (smallest) first. The
/// percent-change column compares each row against the unweighted-mean
/// baseline sharing its variant and seed; baseline rows read exactly `0`.
fn ranked_csv(rows: &[AblateRow], metric: &str, value: MetricGetter) -> String {
    let baseline = |row: &AblateRow| -> Option<f64> {
        rows.iter()
            .find(|b| {
                b.model == AggregatorKind::MeanVanilla.name()
                    && b.variant == row.variant
                    && b.seed == row.seed
            })
            .and_then(|b| value(&b.metrics))
    };

    let mut order: Vec<&AblateRow> = rows.iter().collect();
    // Rows without the metric sink to the bottom; ties break on the tags to
    // keep re-runs byte-identical.
    order.sort_by(|a, b| {
        let key = |r: &AblateRow| (value(&r.metrics).is_none(), r.model.clone(), r.variant.clone(), r.seed);
        match (value(&a.metrics), value(&b.metrics)) {
            (Some(x), Some(y)) => x.partial_cmp(&y).unwrap().then_with(|| key(a).cmp(&key(b))),
            _ => key(a).cmp(&key(b)),
        }
    });

    let mut out = format!("rank,model,variant,seed,{metric},pct_vs_mean_vanilla\n");
    for (rank, row) in order.iter().enumerate() {
        let rendered = match value(&row.metrics) {
            Some(v) => format!("{v}"),
            None => "na".to_string(),
        };
        let pct = match (value(&row.metrics), baseline(row)) {
            _ if row.model == AggregatorKind::MeanVanilla.name() => "0".to_string(),
            (Some(v), Some(b)) if b != 0.0 => format!("{}", 100.0 * (v / b - 1.0)),
            _ => "na".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{rendered},{pct}\n",
            rank + 1,
            row.model,
            row.variant,
            row.seed
        ));
    }
    out
}

/// Noise amplitudes tried by [`tune_noise`].
pub const NOISE_GRID: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

/// One grid point of the noise-amplitude search.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneRow {
    pub lambda: f64,
    /// Mean final positional rollout error over the validation split.
    pub e_pos: f64,
}

/// Result of the noise-amplitude grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub rows: Vec<TuneRow>,
    /// The amplitude with the smallest validation error.
    pub selected: f64,
}

/// Grid-searches the noise amplitude on the validation split.
///
/// Each amplitude trains a fresh model on the `train` split and scores the
/// mean final positional rollout error over the `val` split; the held-out
/// `test` split is never read. When the base config disables noise the
/// search uses the magnitude-adaptive mode, since a zero-noise run is
/// insensitive to the amplitude. Writes `tune_noise.csv` with the selected
/// row marked.
pub fn tune_noise(
    config: &ExperimentConfig,
    dataset_dir: impl AsRef<Path>,
    out_root: impl AsRef<Path>,
) -> Result<TuneOutcome> {
    config.validate()?;
    let dataset_dir = dataset_dir.as_ref();
    let out_root = out_root.as_ref();
    std::fs::create_dir_all(out_root)?;

    let noise = match config.train.noise {
        NoiseMode::None => NoiseMode::Adaptive,
        other => other,
    };
    let val = load_split_guarded(dataset_dir, "val", "noise tuning")?;
    if val.is_empty() {
        return Err(Error::Parameter("noise tuning needs a non-empty `val` split".to_string()));
    }

    let rows: Vec<TuneRow> = worker_pool()?.install(|| {
        NOISE_GRID
            .par_iter()
            .map(|&lambda| {
                let mut cfg = config.clone();
                cfg.train.noise = noise;
                cfg.train.lambda_noise = lambda;
                let cell_dir = out_root.join(format!("lambda_{lambda}"));
                let outcome = run_train(&cfg, dataset_dir, &cell_dir, false)?;
                let predictor = NetPredictor::from_checkpoint(&outcome.checkpoint)?;
                let mut total = 0.0;
                for case in &val {
                    let result = rollout(&predictor, case)?;
                    let last = case.num_snapshots() - 1;
                    total += crate::eval::e_pos(
                        &result.trajectory.positions[last],
                        &case.positions[last],
                    )?;
                }
                Ok(TuneRow { lambda, e_pos: total / val.len() as f64 })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let selected = rows
        .iter()
        .min_by(|a, b| a.e_pos.partial_cmp(&b.e_pos).expect("finite errors"))
        .expect("grid is non-empty")
        .lambda;

    let mut csv = String::from("lambda,E_pos_mm,selected\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.lambda,
            row.e_pos,
            if row.lambda == selected { 1 } else { 0 }
        ));
    }
    std::fs::write(out_root.join("tune_noise.csv"), csv)?;
    Ok(TuneOutcome { rows, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp::config::SplitCounts;
    use crate::exp::dataset::gen_data;
    use crate::model::HierarchyConfig;

    fn tiny_experiment() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.mesh.nx = 3;
        cfg.dataset.mesh.ny = 3;
        cfg.dataset.num_cases = SplitCounts { train: 1, val: 1, test: 1 };
        cfg.dataset.seed = 7;
        cfg.model.hidden = 8;
        cfg.model.layers = 1;
        cfg.model.hierarchy = Some(HierarchyConfig {
            levels: 1,
            ratio: 0.8,
            fine_layers: 1,
            coarse_layers: 1,
            k_nn: 3,
            k_elem: 4,
            shared_transfer: false,
            seed: 0,
        });
        cfg.train.epochs = 1;
        cfg.train.seed = 3;
        cfg
    }

    #[test]
    fn median_averages_the_middle_pair() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn full_grid_produces_ranked_tables_with_a_zero_baseline() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_dir = tempfile::tempdir().unwrap();
        let cfg = tiny_experiment();
        // The base hierarchy settings are reused by the hierarchical cells;
        // flat cells strip them.
        gen_data(&cfg.dataset, data_dir.path()).unwrap();
        let outcome = ablate(&cfg, data_dir.path(), out_dir.path(), &[3]).unwrap();
        assert_eq!(outcome.rows.len(), 24, "4 aggregators x 2 architectures x 3 noise modes");
        assert!(outcome.quarantined.is_empty(), "{:?}", outcome.quarantined);

        let table =
            std::fs::read_to_string(out_dir.path().join("rank_by_E_pos_mm.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "rank,model,variant,seed,E_pos_mm,pct_vs_mean_vanilla");
        assert_eq!(lines.len(), 25, "header + one row per cell");
        // Ranks ascend and values are sorted ascending.
        let values: Vec<f64> = lines[1..]
            .iter()
            .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]), "{values:?}");
        // Every unweighted-mean row is its own baseline.
        for line in &lines[1..] {
            if line.contains("mean_vanilla") {
                assert!(line.ends_with(",0"), "baseline row must read 0: {line}");
            }
        }
        // Each cell owns a run directory with the standard layout.
        let cell = out_dir.path().join("cross_att_edge_key_hier_adaptive_s3");
        assert!(cell.join("checkpoint.bgc").exists());
        assert!(cell.join("metrics.csv").exists());
        assert!(out_dir.path().join("quarantine.json").exists());
    }

    #[test]
    fn broken_cells_are_quarantined_without_stopping_the_sweep() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_experiment();
        gen_data(&cfg.dataset, data_dir.path()).unwrap();
        // Hierarchical cells inherit an invalid coarsening ratio and fail
        // at validation time; flat cells are unaffected.
        cfg.model.hierarchy = Some(HierarchyConfig { ratio: 2.0, ..HierarchyConfig::default() });
        let outcome = ablate(&cfg, data_dir.path(), out_dir.path(), &[3]).unwrap();
        assert_eq!(outcome.rows.len(), 12, "flat half of the grid survives");
        assert_eq!(outcome.quarantined.len(), 12, "hierarchical half is quarantined");
        assert!(outcome.quarantined.iter().all(|(tag, _)| tag.contains("hier")));
        assert!(outcome.rows.iter().all(|r| r.variant.starts_with("flat/")));

        let quarantine: Vec<(String, String)> = serde_json::from_str(
            &std::fs::read_to_string(out_dir.path().join("quarantine.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(quarantine.len(), 12);
        let table =
            std::fs::read_to_string(out_dir.path().join("rank_by_E_pos_mm.csv")).unwrap();
        assert_eq!(table.lines().count(), 13, "only surviving rows are ranked");
    }

    #[test]
    fn noise_grid_marks_the_argmin_and_is_reproducible() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let mut cfg = tiny_experiment();
        cfg.model.hierarchy = None;
        gen_data(&cfg.dataset, data_dir.path()).unwrap();

        let outcome = tune_noise(&cfg, data_dir.path(), out_a.path()).unwrap();
        assert_eq!(outcome.rows.len(), NOISE_GRID.len());
        let best = outcome
            .rows
            .iter()
            .min_by(|a, b| a.e_pos.partial_cmp(&b.e_pos).unwrap())
            .unwrap();
        assert_eq!(outcome.selected, best.lambda);

        let csv = std::fs::read_to_string(out_a.path().join("tune_noise.csv")).unwrap();
        assert!(csv.starts_with("lambda,E_pos_mm,selected\n"));
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.matches(",1\n").count(), 1, "exactly one selected row");

        // Identical invocation, identical report.
        let again = tune_noise(&cfg, data_dir.path(), out_b.path()).unwrap();
        assert_eq!(again, outcome);
        assert_eq!(
            std::fs::read(out_a.path().join("tune_noise.csv")).unwrap(),
            std::fs::read(out_b.path().join("tune_noise.csv")).unwrap()
        );
    }
}
