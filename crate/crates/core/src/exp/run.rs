//! Run directories: training and evaluation commands that leave a
//! self-describing artifact trail (`config.json`, `checkpoint.bgc`,
//! `curves.csv`, `metrics.csv`, `predictions/*.bgt`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{
    attention_csv, attention_deviation, curves_csv, evaluate_case, metrics_csv, MetricReport,
};
use crate::exp::config::EvalConfig;
use crate::exp::dataset::load_split;
use crate::exp::ExperimentConfig;
use crate::fe::Trajectory;
use crate::io::{read_checkpoint, write_checkpoint, write_trajectory, Checkpoint};
use crate::model::ModelConfig;
use crate::train::{rollout, train, CurvePoint, NetPredictor, NoiseMode, TrainOutcome};

/// The held-out split: only evaluation commands may read it.
pub const TEST_SPLIT: &str = "test";

/// Loads a split on behalf of a training-side command, refusing the
/// held-out split so model selection can never leak test information.
pub fn load_split_guarded(
    dataset_dir: impl AsRef<Path>,
    split: &str,
    command: &str,
) -> Result<Vec<Trajectory>> {
    if split == TEST_SPLIT {
        return Err(Error::Contract(format!(
            "{command} must not read the `{TEST_SPLIT}` split"
        )));
    }
    load_split(dataset_dir, split)
}

/// Short architecture tag used in report rows.
pub fn arch_tag(model: &ModelConfig) -> &'static str {
    if model.hierarchy.is_some() {
        "hier"
    } else {
        "flat"
    }
}

/// Report tag combining architecture and noise strategy, e.g.
/// `flat/adaptive`.
pub fn variant_tag(model: &ModelConfig, noise: NoiseMode) -> String {
    format!("{}/{}", arch_tag(model), noise.name())
}

/// Renders a training curve: `epoch,lr,L_disp,L_thin,L_total`.
pub fn training_curve_csv(points: &[CurvePoint], with_header: bool) -> String {
    let mut out = if with_header {
        String::from("epoch,lr,L_disp,L_thin,L_total\n")
    } else {
        String::new()
    };
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.epoch, p.lr, p.l_disp, p.l_thin, p.l_total
        ));
    }
    out
}

/// Trains on the `train` split and writes `config.json`, `checkpoint.bgc`,
/// and `curves.csv` under `run_dir`.
///
/// With `resume` set and a checkpoint already present, training continues
/// from its epoch counter and curve rows are appended; otherwise the run
/// starts fresh and overwrites any previous artifacts.
pub fn run_train(
    config: &ExperimentConfig,
    dataset_dir: impl AsRef<Path>,
    run_dir: impl AsRef<Path>,
    resume: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    let run_dir = run_dir.as_ref();
    std::fs::create_dir_all(run_dir)?;
    let data = load_split_guarded(&dataset_dir, "train", "train")?;

    let ckpt_path = run_dir.join("checkpoint.bgc");
    let prior = if resume && ckpt_path.exists() {
        Some(read_checkpoint(&ckpt_path)?)
    } else {
        None
    };
    let resuming = prior.is_some();

    config.save(run_dir.join("config.json"))?;
    let outcome = train(&config.model, &config.train, &data, config.model.contact, prior)?;
    write_checkpoint(&ckpt_path, &outcome.checkpoint)?;

    let curves_path = run_dir.join("curves.csv");
    let csv = training_curve_csv(&outcome.curve, !resuming);
    if resuming {
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new().append(true).open(&curves_path)?;
        file.write_all(csv.as_bytes())?;
    } else {
        std::fs::write(&curves_path, csv)?;
    }
    Ok(outcome)
}

/// Rolls out a checkpoint over every case of a split and writes
/// `metrics.csv`, `eval_curves.csv`, and `predictions/*.bgt` under
/// `run_dir`. Returns one report per case, in manifest order.
pub fn run_eval(
    checkpoint: &Checkpoint,
    dataset_dir: impl AsRef<Path>,
    split: &str,
    run_dir: impl AsRef<Path>,
    eval: &EvalConfig,
) -> Result<Vec<MetricReport>> {
    let run_dir = run_dir.as_ref();
    let predictor = NetPredictor::from_checkpoint(checkpoint)?;
    let cases = load_split(dataset_dir, split)?;
    let model_tag = checkpoint.model.aggregator.name().to_string();
    let variant = variant_tag(&checkpoint.model, checkpoint.train.noise);

    std::fs::create_dir_all(run_dir.join("predictions"))?;
    let mut reports = Vec::with_capacity(cases.len());
    for reference in &cases {
        let result = rollout(&predictor, reference)?;
        write_trajectory(
            run_dir.join("predictions").join(format!("{}.bgt", reference.case_id)),
            &result.trajectory,
        )?;
        reports.push(evaluate_case(
            &result.trajectory,
            reference,
            &model_tag,
            &variant,
            eval.tau,
            eval.p,
        )?);
    }
    std::fs::write(run_dir.join("metrics.csv"), metrics_csv(&reports))?;
    std::fs::write(run_dir.join("eval_curves.csv"), curves_csv(&reports))?;
    Ok(reports)
}

/// Rolls out one case and writes the final-layer attention map of the last
/// transition as CSV. Returns the number of edge rows, or `None` when the
/// aggregator has no attention weights (the file then holds only the
/// header).
pub fn inspect_attention(
    checkpoint: &Checkpoint,
    case: &Trajectory,
    out_csv: impl AsRef<Path>,
) -> Result<Option<usize>> {
    let predictor = NetPredictor::from_checkpoint(checkpoint)?;
    let result = rollout(&predictor, case)?;
    match result.attention {
        Some(att) => {
            let rows = attention_deviation(&att)?;
            std::fs::write(out_csv, attention_csv(&rows))?;
            Ok(Some(rows.len()))
        }
        None => {
            std::fs::write(out_csv, attention_csv(&[]))?;
            Ok(None)
        }
    }
}
