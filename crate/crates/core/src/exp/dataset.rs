//! Dataset generation: Latin-hypercube case sampling, parallel simulation,
//! and the split manifest.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp::config::DatasetConfig;
use crate::exp::lhs::{latin_hypercube, scale_to_range};
use crate::fe::{simulate, CaseSetup, Trajectory};
use crate::io::{read_trajectory, write_trajectory};

/// Dataset splits in generation order.
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// How often a diverged case is redrawn before generation gives up.
pub const RESAMPLE_LIMIT: usize = 5;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SHEETFORM_THREADS";

/// Builds the job pool used by dataset generation and ablation sweeps,
/// honouring [`THREADS_ENV`] when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.parse::<usize>().map_err(|_| {
            Error::Parameter(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))
        })?,
        Err(_) => 0, // rayon default: one thread per core
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Contract(format!("worker pool: {e}")))
}

/// One generated case as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    /// Path of the trajectory file, relative to the dataset root.
    pub file: String,
    pub punch_radius: f64,
    pub punch_stroke: f64,
    /// Times the case was redrawn after a diverged simulation.
    pub resamples: usize,
}

/// Index of a generated dataset, stored as `manifest.json` in its root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub splits: BTreeMap<String, Vec<CaseRecord>>,
}

impl DatasetManifest {
    pub fn load(dataset_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(dataset_dir.as_ref().join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn split(&self, name: &str) -> Result<&[CaseRecord]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Parameter(format!("dataset has no `{name}` split")))
    }
}

/// A formed blank should stay within a box set by the blank size and the
/// punch travel; anything outside (or non-finite) is a diverged run.
fn blew_up(traj: &Trajectory, side: f64, stroke: f64) -> bool {
    let bound = 2.0 * (side + stroke);
    for (snap, initial) in traj.positions.iter().zip(std::iter::repeat(&traj.positions[0])) {
        for (p, p0) in snap.iter().zip(initial.iter()) {
            for a in 0..3 {
                let d = p[a] - p0[a];
                if !d.is_finite() || d.abs() > bound {
                    return true;
                }
            }
        }
    }
    traj.thinning.iter().flatten().any(|t| !t.is_finite())
}

/// RNG stream used to redraw the `i`-th case of split `s` after blow-ups;
/// streams 0..3 are taken by the per-split Latin-hypercube designs.
fn retry_stream(split_idx: usize, case_idx: usize) -> u64 {
    SPLITS.len() as u64 + (split_idx as u64) * 1_000_000 + case_idx as u64
}

struct Job {
    split_idx: usize,
    case_idx: usize,
    case_id: String,
    file: String,
    radius: f64,
    stroke: f64,
}

fn run_job(config: &DatasetConfig, out_dir: &Path, job: &Job) -> Result<CaseRecord> {
    let mesh = config.mesh.build()?;
    let mut radius = job.radius;
    let mut stroke = job.stroke;
    let mut retry = ChaCha8Rng::seed_from_u64(config.seed);
    retry.set_stream(retry_stream(job.split_idx, job.case_idx));
    let mut resamples = 0;
    loop {
        let setup = CaseSetup {
            case_id: job.case_id.clone(),
            mesh: mesh.clone(),
            material: config.material.clone(),
            tools: config.tools.build(radius, stroke),
            total_time: config.total_time,
            substeps: None,
        };
        let outcome = simulate(&setup);
        let diverged = match &outcome {
            Ok(traj) => blew_up(traj, config.mesh.side, stroke),
            Err(_) => true,
        };
        if !diverged {
            let traj = outcome.expect("non-diverged outcome is Ok");
            write_trajectory(out_dir.join(&job.file), &traj)?;
            return Ok(CaseRecord {
                case_id: job.case_id.clone(),
                file: job.file.clone(),
                punch_radius: radius,
                punch_stroke: stroke,
                resamples,
            });
        }
        if resamples >= RESAMPLE_LIMIT {
            let detail = match outcome {
                Ok(_) => "positions left the physical bounding box".to_string(),
                Err(e) => e.to_string(),
            };
            return Err(Error::Numerical(format!(
                "case `{}` still diverged after {resamples} resamples: {detail}",
                job.case_id
            )));
        }
        resamples += 1;
        radius = scale_to_range(retry.random(), config.punch_radius);
        stroke = scale_to_range(retry.random(), config.punch_stroke);
    }
}

/// Generates a dataset under `out_dir`: one `.bgt` file per case grouped in
/// split subdirectories, plus `manifest.json`.
///
/// Punch radius and stroke are drawn by a Latin-hypercube design,
/// independently per split. Cases whose simulation diverges are redrawn up
/// to [`RESAMPLE_LIMIT`] times (uniformly, from a per-case stream, so the
/// output is identical however the job pool schedules the work). The same
/// config produces byte-identical files.
pub fn gen_data(config: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    let counts = [config.num_cases.train, config.num_cases.val, config.num_cases.test];

    let mut jobs = Vec::new();
    for (split_idx, (&split, &n)) in SPLITS.iter().zip(&counts).enumerate() {
        if n == 0 {
            continue;
        }
        std::fs::create_dir_all(out_dir.join(split))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(split_idx as u64);
        let design = latin_hypercube(&mut rng, n, 2)?;
        for (case_idx, point) in design.into_iter().enumerate() {
            let case_id = format!("{split}-{case_idx:03}");
            jobs.push(Job {
                split_idx,
                case_idx,
                file: format!("{split}/{case_id}.bgt"),
                case_id,
                radius: scale_to_range(point[0], config.punch_radius),
                stroke: scale_to_range(point[1], config.punch_stroke),
            });
        }
    }

    let records: Vec<CaseRecord> = worker_pool()?.install(|| {
        jobs.par_iter().map(|job| run_job(config, out_dir, job)).collect::<Result<Vec<_>>>()
    })?;

    let mut splits: BTreeMap<String, Vec<CaseRecord>> = BTreeMap::new();
    for (job, record) in jobs.iter().zip(records) {
        splits.entry(SPLITS[job.split_idx].to_string()).or_default().push(record);
    }
    let manifest = DatasetManifest { seed: config.seed, splits };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Reads every trajectory of one split, in manifest order.
pub fn load_split(dataset_dir: impl AsRef<Path>, split: &str) -> Result<Vec<Trajectory>> {
    let dataset_dir = dataset_dir.as_ref();
    let manifest = DatasetManifest::load(dataset_dir)?;
    manifest
        .split(split)?
        .iter()
        .map(|record| read_trajectory(dataset_dir.join(&record.file)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp::config::SplitCounts;

    fn tiny_config() -> DatasetConfig {
        let mut cfg = DatasetConfig::default();
        cfg.mesh.nx = 3;
        cfg.mesh.ny = 3;
        cfg.num_cases = SplitCounts { train: 2, val: 1, test: 1 };
        cfg.seed = 42;
        cfg
    }

    fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn counts_match_and_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = gen_data(&tiny_config(), dir.path()).unwrap();
        assert_eq!(manifest.split("train").unwrap().len(), 2);
        assert_eq!(manifest.split("val").unwrap().len(), 1);
        assert_eq!(manifest.split("test").unwrap().len(), 1);
        assert!(manifest.split("holdout").is_err());

        let reloaded = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(reloaded, manifest);

        let train = load_split(dir.path(), "train").unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].case_id, "train-000");
        for (traj, record) in train.iter().zip(manifest.split("train").unwrap()) {
            traj.validate().unwrap();
            // Tool parameters live in the JSON header and keep full
            // precision; only the field arrays are quantised to f32.
            assert_eq!(traj.tools.punch.stroke, record.punch_stroke);
            assert_eq!(record.resamples, 0);
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_datasets() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen_data(&tiny_config(), a.path()).unwrap();
        gen_data(&tiny_config(), b.path()).unwrap();
        let bytes_a = dir_bytes(a.path());
        let bytes_b = dir_bytes(b.path());
        assert_eq!(bytes_a.keys().collect::<Vec<_>>(), bytes_b.keys().collect::<Vec<_>>());
        for (name, data) in &bytes_a {
            assert_eq!(Some(data), bytes_b.get(name), "{name} differs between runs");
        }
        assert!(bytes_a.contains_key("manifest.json"));
        assert_eq!(bytes_a.len(), 5, "4 trajectories + manifest");
    }

    #[test]
    fn different_seeds_sample_different_processes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        let ma = gen_data(&cfg, a.path()).unwrap();
        cfg.seed = 43;
        let mb = gen_data(&cfg, b.path()).unwrap();
        let ra = &ma.split("train").unwrap()[0];
        let rb = &mb.split("train").unwrap()[0];
        assert!(ra.punch_radius != rb.punch_radius || ra.punch_stroke != rb.punch_stroke);
    }

    #[test]
    fn splits_are_sampled_independently() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.num_cases = SplitCounts { train: 1, val: 1, test: 1 };
        let manifest = gen_data(&cfg, dir.path()).unwrap();
        let train = &manifest.split("train").unwrap()[0];
        let val = &manifest.split("val").unwrap()[0];
        assert!(
            train.punch_radius != val.punch_radius,
            "independent per-split designs should not repeat the same draw"
        );
    }

    #[test]
    fn sampled_parameters_stay_within_the_configured_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.num_cases = SplitCounts { train: 6, val: 0, test: 0 };
        let manifest = gen_data(&cfg, dir.path()).unwrap();
        for r in manifest.split("train").unwrap() {
            assert!(r.punch_radius >= cfg.punch_radius[0] && r.punch_radius <= cfg.punch_radius[1]);
            assert!(r.punch_stroke >= cfg.punch_stroke[0] && r.punch_stroke <= cfg.punch_stroke[1]);
        }
        // The stratum audit: six samples partition each axis into six bins.
        let radii: Vec<f64> = manifest
            .split("train")
            .unwrap()
            .iter()
            .map(|r| (r.punch_radius - cfg.punch_radius[0]) / (cfg.punch_radius[1] - cfg.punch_radius[0]))
            .collect();
        let mut counts = [0usize; 6];
        for x in radii {
            counts[((x * 6.0) as usize).min(5)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1), "stratum counts {counts:?}");
    }

    #[test]
    fn hopeless_setups_exhaust_the_resample_budget() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.num_cases = SplitCounts { train: 1, val: 0, test: 0 };
        // A penalty stiffness far beyond what the stability rule accounts
        // for makes every contact substep explode, whatever the draw.
        cfg.tools.penalty_stiffness = 1.0e13;
        let err = gen_data(&cfg, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("train-000") && msg.contains("resamples"),
            "unexpected diagnostic: {msg}"
        );
    }
}
