//! Command-line front end: dataset generation, training, rollout,
//! evaluation, ablation sweeps, noise tuning, and attention inspection,
//! all driven by one JSON experiment config plus a few override flags.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sheetform_core::exp::{
    ablate, gen_data, inspect_attention, run_eval, run_train, tune_noise, ExperimentConfig,
    Profile, SPLITS,
};
use sheetform_core::io::{read_checkpoint, read_trajectory};
use sheetform_core::{AggregatorKind, HierarchyConfig, NoiseMode};

#[derive(Parser)]
#[command(
    name = "sheetform",
    version,
    about = "Sheet-forming surrogate toolkit: simulate, train, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that assembles an experiment config.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config JSON; omitted fields take built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset scale applied on top of the config file.
    #[arg(long)]
    profile: Option<Profile>,
    /// Overrides both the dataset seed and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Architecture override: `flat` or `hier`.
    #[arg(long)]
    variant: Option<String>,
    /// Aggregator override, e.g. `cross_att_edge_key` or `mean_vanilla`.
    #[arg(long)]
    aggregator: Option<AggregatorKind>,
    /// Noise-strategy override: `none`, `uniform`, or `adaptive`.
    #[arg(long)]
    noise: Option<NoiseMode>,
}

impl ConfigArgs {
    fn assemble(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(profile) = self.profile {
            profile.apply(&mut cfg);
        }
        if let Some(seed) = self.seed {
            cfg.dataset.seed = seed;
            cfg.train.seed = seed;
        }
        match self.variant.as_deref() {
            None => {}
            Some("flat") => cfg.model.hierarchy = None,
            Some("hier") => {
                cfg.model.hierarchy.get_or_insert_with(HierarchyConfig::default);
            }
            Some(other) => anyhow::bail!("unknown variant `{other}` (expected flat or hier)"),
        }
        if let Some(aggregator) = self.aggregator {
            cfg.model.aggregator = aggregator;
        }
        if let Some(noise) = self.noise {
            cfg.train.noise = noise;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of forming cases into `.bgt` files.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a surrogate on the `train` split of a dataset.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory produced by `gen-data`.
        #[arg(long)]
        data: PathBuf,
        /// Run directory receiving config.json, checkpoint.bgc, curves.csv.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint already in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Roll out a checkpoint over a split and dump predictions + metrics.
    Rollout {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Alias of `rollout` that also prints a per-case metric summary.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Train and rank every aggregator/architecture/noise combination.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Sweep root; each grid cell owns a subdirectory.
        #[arg(long)]
        out: PathBuf,
        /// Training seeds shared by every cell.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Grid-search the noise amplitude on the validation split.
    TuneNoise {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the final-layer attention map of one rolled-out case as CSV.
    InspectAttention {
        /// Trained checkpoint (`.bgc`).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference trajectory (`.bgt`) to roll out.
        #[arg(long)]
        case: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags of the rollout/eval pair.
#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Trained checkpoint (`.bgc`).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory produced by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    /// Split to evaluate.
    #[arg(long, default_value = "test")]
    split: String,
    /// Run directory receiving metrics.csv, eval_curves.csv, predictions/.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_gen_data(config: &ConfigArgs, out: &PathBuf) -> anyhow::Result<()> {
    let cfg = config.assemble()?;
    let manifest = gen_data(&cfg.dataset, out)?;
    for split in SPLITS {
        let cases = manifest.split(split)?;
        let resamples: usize = cases.iter().map(|c| c.resamples).sum();
        println!(
            "{split}: {} cases{}",
            cases.len(),
            if resamples > 0 { format!(" ({resamples} resampled draws)") } else { String::new() }
        );
    }
    println!("dataset written to {}", out.display());
    Ok(())
}

fn cmd_train(config: &ConfigArgs, data: &PathBuf, out: &PathBuf, resume: bool) -> anyhow::Result<()> {
    let cfg = config.assemble()?;
    let outcome = run_train(&cfg, data, out, resume)?;
    if let Some(last) = outcome.curve.last() {
        println!(
            "epoch {}: L_disp {:.6e}  L_thin {:.6e}  L_total {:.6e}",
            last.epoch, last.l_disp, last.l_thin, last.l_total
        );
    }
    println!(
        "checkpoint ({} epochs) written to {}",
        outcome.checkpoint.epochs_completed,
        out.join("checkpoint.bgc").display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs, summarise: bool) -> anyhow::Result<()> {
    let cfg = args.config.assemble()?;
    let ckpt = read_checkpoint(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let reports = run_eval(&ckpt, &args.data, &args.split, &args.out, &cfg.eval)?;
    for r in &reports {
        println!("{}: E_pos {:.4} mm, E_mae {:.4} mm", r.case_id, r.e_pos, r.e_mae);
    }
    if summarise {
        let mut e_pos: Vec<f64> = reports.iter().map(|r| r.e_pos).collect();
        e_pos.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
        if !e_pos.is_empty() {
            println!(
                "median E_pos over {} `{}` cases: {:.4} mm",
                e_pos.len(),
                args.split,
                0.5 * (e_pos[(e_pos.len() - 1) / 2] + e_pos[e_pos.len() / 2])
            );
        }
    }
    println!("reports written to {}", args.out.display());
    Ok(())
}

fn cmd_ablate(config: &ConfigArgs, data: &PathBuf, out: &PathBuf, seeds: &[u64]) -> anyhow::Result<()> {
    let cfg = config.assemble()?;
    let outcome = ablate(&cfg, data, out, seeds)?;
    println!("{} cells completed, {} quarantined", outcome.rows.len(), outcome.quarantined.len());
    for (tag, err) in &outcome.quarantined {
        eprintln!("quarantined {tag}: {err}");
    }
    println!("ranked tables written to {}", out.display());
    Ok(())
}

fn cmd_tune_noise(config: &ConfigArgs, data: &PathBuf, out: &PathBuf) -> anyhow::Result<()> {
    let cfg = config.assemble()?;
    let outcome = tune_noise(&cfg, data, out)?;
    for row in &outcome.rows {
        let mark = if row.lambda == outcome.selected { "  <- selected" } else { "" };
        println!("lambda {:<6} validation E_pos {:.4} mm{mark}", row.lambda, row.e_pos);
    }
    Ok(())
}

fn cmd_inspect_attention(
    checkpoint: &PathBuf,
    case: &PathBuf,
    out: &PathBuf,
) -> anyhow::Result<()> {
    let ckpt = read_checkpoint(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let traj = read_trajectory(case)
        .with_context(|| format!("reading trajectory {}", case.display()))?;
    match inspect_attention(&ckpt, &traj, out)? {
        Some(rows) => println!("{rows} attention edges written to {}", out.display()),
        None => println!(
            "aggregator `{}` has no attention weights; wrote an empty table to {}",
            ckpt.model.aggregator,
            out.display()
        ),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match &Cli::parse().command {
        Command::GenData { config, out } => cmd_gen_data(config, out),
        Command::Train { config, data, out, resume } => cmd_train(config, data, out, *resume),
        Command::Rollout { eval } => cmd_eval(eval, false),
        Command::Eval { eval } => cmd_eval(eval, true),
        Command::Ablate { config, data, out, seeds } => cmd_ablate(config, data, out, seeds),
        Command::TuneNoise { config, data, out } => cmd_tune_noise(config, data, out),
        Command::InspectAttention { checkpoint, case, out } => {
            cmd_inspect_attention(checkpoint, case, out)
        }
    }
}
