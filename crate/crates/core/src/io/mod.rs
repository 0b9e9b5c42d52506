//! Binary artefact formats.
//!
//! Both artefacts share one layout: a single UTF-8 JSON header line
//! terminated by `\n`, followed by raw little-endian `f32` buffers
//! concatenated in the order declared by the header's array manifest.
//!
//! * `.bgt` — a recorded forming trajectory (reference or predicted):
//!   snapshot positions, increments, thinning, contact descriptors, punch
//!   travel, and the boundary mask, with mesh connectivity and tool
//!   definitions in the header.
//! * `.bgc` — a model checkpoint: configuration echo, feature-scaling
//!   statistics, the frozen coarsening hierarchy (when hierarchical), the
//!   epoch counter, and every parameter tensor.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{BlankMesh, ToolSet, Trajectory, NUM_TOOLS};
use crate::graph::FeatureScaler;
use crate::hier::GraphHierarchy;
use crate::model::ModelConfig;
use crate::nn::{Mat, ParamSet};
use crate::train::TrainConfig;

/// Version written into every trajectory header.
pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
/// Version written into every checkpoint header.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One entry of an array manifest: a named little-endian `f32` buffer of a
/// declared shape, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

impl ArraySpec {
    fn f32(name: &str, shape: &[usize]) -> ArraySpec {
        ArraySpec { name: name.to_string(), dtype: "f32".to_string(), shape: shape.to_vec() }
    }

    /// Number of scalar entries the buffer holds.
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Node/element/snapshot counts echoed in a trajectory header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryCounts {
    pub nodes: usize,
    pub elements: usize,
    pub snapshots: usize,
}

/// JSON header line of a `.bgt` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format_version: u32,
    pub case_id: String,
    pub counts: TrajectoryCounts,
    pub total_time: f64,
    /// Full mesh description; element connectivity lives here as integer
    /// lists.
    pub mesh: BlankMesh,
    pub tools: ToolSet,
    pub array_manifest: Vec<ArraySpec>,
}

/// JSON header line of a `.bgc` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epochs_completed: usize,
    pub scaler: FeatureScaler,
    pub hierarchy: Option<GraphHierarchy>,
    pub param_manifest: Vec<ArraySpec>,
}

/// Everything a `.bgc` file stores.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epochs already finished; resuming continues from here.
    pub epochs_completed: usize,
    pub scaler: FeatureScaler,
    /// Frozen coarsening structure for hierarchical models.
    pub hierarchy: Option<GraphHierarchy>,
    pub params: ParamSet<f32>,
}

fn manifest_for(counts: TrajectoryCounts) -> Vec<ArraySpec> {
    let TrajectoryCounts { nodes: v, elements: e, snapshots: s } = counts;
    vec![
        ArraySpec::f32("positions", &[s, v, 3]),
        ArraySpec::f32("increments", &[s, v, 3]),
        ArraySpec::f32("thinning", &[s, e]),
        ArraySpec::f32("contact_gap", &[s, v, NUM_TOOLS]),
        ArraySpec::f32("contact_normal", &[s, v, NUM_TOOLS, 3]),
        ArraySpec::f32("stroke", &[s]),
        ArraySpec::f32("boundary_mask", &[v, 3]),
    ]
}

fn write_buffer(w: &mut impl Write, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_buffer(r: &mut impl Read, len: usize, name: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes).map_err(|e| {
        Error::Format(format!("truncated buffer `{name}` ({len} entries expected): {e}"))
    })?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn read_header_line(r: &mut impl Read, what: &str) -> Result<Vec<u8>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(Error::Format(format!("{what}: header line missing its terminator")));
        }
        if byte[0] == b'\n' {
            return Ok(line);
        }
        line.push(byte[0]);
        if line.len() > 16 * 1024 * 1024 {
            return Err(Error::Format(format!("{what}: header line exceeds 16 MiB")));
        }
    }
}

fn expect_eof(r: &mut impl Read, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format(format!("{what}: trailing bytes after the declared buffers")));
    }
    Ok(())
}

/// Writes a trajectory as a `.bgt` file.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    let counts = TrajectoryCounts {
        nodes: traj.num_nodes(),
        elements: traj.num_elements(),
        snapshots: traj.num_snapshots(),
    };
    let header = TrajectoryHeader {
        format_version: TRAJECTORY_FORMAT_VERSION,
        case_id: traj.case_id.clone(),
        counts,
        total_time: traj.total_time,
        mesh: traj.mesh.clone(),
        tools: traj.tools.clone(),
        array_manifest: manifest_for(counts),
    };

    let mut w = BufWriter::new(File::create(path)?);
    let mut text = serde_json::to_string(&header)?;
    text.push('\n');
    w.write_all(text.as_bytes())?;

    let s = counts.snapshots;
    let v = counts.nodes;
    let e = counts.elements;

    let mut positions = Vec::with_capacity(s * v * 3);
    let mut increments = Vec::with_capacity(s * v * 3);
    let mut thinning = Vec::with_capacity(s * e);
    let mut gap = Vec::with_capacity(s * v * NUM_TOOLS);
    let mut normal = Vec::with_capacity(s * v * NUM_TOOLS * 3);
    let mut stroke = Vec::with_capacity(s);
    for k in 0..s {
        for n in 0..v {
            positions.extend(traj.positions[k][n].iter().map(|&x| x as f32));
            increments.extend(traj.increments[k][n].iter().map(|&x| x as f32));
            gap.extend(traj.contact_gap[k][n].iter().map(|&x| x as f32));
            for t in 0..NUM_TOOLS {
                normal.extend(traj.contact_normal[k][n][t].iter().map(|&x| x as f32));
            }
        }
        thinning.extend(traj.thinning[k].iter().map(|&x| x as f32));
        stroke.push(traj.stroke[k] as f32);
    }
    let mask: Vec<f32> = traj
        .mesh
        .boundary
        .iter()
        .flat_map(|b| b.iter().map(|&locked| if locked { 1.0 } else { 0.0 }))
        .collect();

    write_buffer(&mut w, &positions)?;
    write_buffer(&mut w, &increments)?;
    write_buffer(&mut w, &thinning)?;
    write_buffer(&mut w, &gap)?;
    write_buffer(&mut w, &normal)?;
    write_buffer(&mut w, &stroke)?;
    write_buffer(&mut w, &mask)?;
    w.flush()?;
    Ok(())
}

/// Reads a `.bgt` file back into a trajectory.
///
/// Array values come back as `f32` widened to `f64`; the header (mesh,
/// tools, timing) round-trips exactly.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let line = read_header_line(&mut r, "trajectory")?;
    let header: TrajectoryHeader = serde_json::from_slice(&line)?;
    if header.format_version != TRAJECTORY_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "trajectory format version {} unsupported (expected {})",
            header.format_version, TRAJECTORY_FORMAT_VERSION
        )));
    }
    let counts = header.counts;
    if counts.nodes != header.mesh.num_nodes() || counts.elements != header.mesh.num_elements() {
        return Err(Error::Format(format!(
            "trajectory counts ({} nodes, {} elements) disagree with the mesh ({}, {})",
            counts.nodes,
            counts.elements,
            header.mesh.num_nodes(),
            header.mesh.num_elements()
        )));
    }
    if header.array_manifest != manifest_for(counts) {
        return Err(Error::Format(
            "trajectory array manifest does not match the canonical layout".to_string(),
        ));
    }

    let s = counts.snapshots;
    let v = counts.nodes;
    let e = counts.elements;
    let positions = read_buffer(&mut r, s * v * 3, "positions")?;
    let increments = read_buffer(&mut r, s * v * 3, "increments")?;
    let thinning = read_buffer(&mut r, s * e, "thinning")?;
    let gap = read_buffer(&mut r, s * v * NUM_TOOLS, "contact_gap")?;
    let normal = read_buffer(&mut r, s * v * NUM_TOOLS * 3, "contact_normal")?;
    let stroke = read_buffer(&mut r, s, "stroke")?;
    let mask = read_buffer(&mut r, v * 3, "boundary_mask")?;
    expect_eof(&mut r, "trajectory")?;

    for (n, b) in header.mesh.boundary.iter().enumerate() {
        for c in 0..3 {
            let expected = if b[c] { 1.0 } else { 0.0 };
            if mask[n * 3 + c] != expected {
                return Err(Error::Format(format!(
                    "boundary mask disagrees with mesh locks at node {n} axis {c}"
                )));
            }
        }
    }

    let vec3 = |flat: &[f32], k: usize, n: usize| -> [f64; 3] {
        let base = (k * v + n) * 3;
        [flat[base] as f64, flat[base + 1] as f64, flat[base + 2] as f64]
    };
    let traj = Trajectory {
        case_id: header.case_id,
        mesh: header.mesh,
        tools: header.tools,
        total_time: header.total_time,
        positions: (0..s).map(|k| (0..v).map(|n| vec3(&positions, k, n)).collect()).collect(),
        increments: (0..s).map(|k| (0..v).map(|n| vec3(&increments, k, n)).collect()).collect(),
        thinning: (0..s)
            .map(|k| thinning[k * e..(k + 1) * e].iter().map(|&x| x as f64).collect())
            .collect(),
        contact_gap: (0..s)
            .map(|k| {
                (0..v)
                    .map(|n| {
                        let base = (k * v + n) * NUM_TOOLS;
                        std::array::from_fn(|t| gap[base + t] as f64)
                    })
                    .collect()
            })
            .collect(),
        contact_normal: (0..s)
            .map(|k| {
                (0..v)
                    .map(|n| {
                        std::array::from_fn(|t| {
                            let base = ((k * v + n) * NUM_TOOLS + t) * 3;
                            [
                                normal[base] as f64,
                                normal[base + 1] as f64,
                                normal[base + 2] as f64,
                            ]
                        })
                    })
                    .collect()
            })
            .collect(),
        stroke: stroke.iter().map(|&x| x as f64).collect(),
    };
    traj.validate()?;
    Ok(traj)
}

/// Writes a checkpoint as a `.bgc` file.
pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let manifest: Vec<ArraySpec> = ckpt
        .params
        .iter()
        .map(|(name, mat)| ArraySpec::f32(name, &[mat.rows(), mat.cols()]))
        .collect();
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        epochs_completed: ckpt.epochs_completed,
        scaler: ckpt.scaler.clone(),
        hierarchy: ckpt.hierarchy.clone(),
        param_manifest: manifest,
    };

    let mut w = BufWriter::new(File::create(path)?);
    let mut text = serde_json::to_string(&header)?;
    text.push('\n');
    w.write_all(text.as_bytes())?;
    for (_, mat) in ckpt.params.iter() {
        write_buffer(&mut w, mat.data())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `.bgc` file back into a checkpoint.
///
/// Parameter tensors are restored bit-exactly in manifest order.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let line = read_header_line(&mut r, "checkpoint")?;
    let header: CheckpointHeader = serde_json::from_slice(&line)?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {} unsupported (expected {})",
            header.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    let mut params = ParamSet::new();
    for spec in &header.param_manifest {
        if spec.dtype != "f32" || spec.shape.len() != 2 {
            return Err(Error::Format(format!(
                "parameter `{}` must be a 2-d f32 tensor, got {} {:?}",
                spec.name, spec.dtype, spec.shape
            )));
        }
        let data = read_buffer(&mut r, spec.len(), &spec.name)?;
        params.insert(&spec.name, Mat::from_vec(spec.shape[0], spec.shape[1], data)?)?;
    }
    expect_eof(&mut r, "checkpoint")?;
    Ok(Checkpoint {
        model: header.model,
        train: header.train,
        epochs_completed: header.epochs_completed,
        scaler: header.scaler,
        hierarchy: header.hierarchy,
        params,
    })
}
