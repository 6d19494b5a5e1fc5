//! Reader/writer for the dataset format: a `system_meta.json` metadata
//! document plus a `trajectories.npz` archive of named array records.
//!
//! Channels are always resolved through each trajectory's `field_keys`
//! mapping, never by name construction; several channels may reference the
//! same record (aliases and deduplicated static geometry). The writer pins
//! key order, float formatting, and archive layout so rewriting the same
//! bundle is byte-identical.

mod build;
mod ingest;
mod npy;
mod npz;

pub use build::{build_mesh_bundle, build_spring_bundle, build_wave_bundle, system_from_bundle};
pub use ingest::{ingest_external_ns, read_ns_solver_output, NsSolverOutput};
pub use npy::{read_npy, write_npy, Dtype, NdArray};
pub use npz::{read_npz, read_npz_file, write_npz, write_npz_file};

use crate::domain::{PhaseState, StateDerivative, TimeGrid, Trajectory};
use crate::systems::SystemKind;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const META_FILE: &str = "system_meta.json";
pub const ARCHIVE_FILE: &str = "trajectories.npz";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("metadata is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed metadata: {0}")]
    MalformedMeta(String),
    #[error("malformed NPY payload: {0}")]
    Npy(String),
    #[error("malformed NPZ archive: {0}")]
    Npz(String),
    #[error("trajectory {trajectory} channel {channel} references missing record {record}")]
    DanglingFieldKey {
        trajectory: String,
        channel: String,
        record: String,
    },
    #[error("bundle validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("solver output does not match the scene grid: {0}")]
    GridMismatch(String),
    #[error("solver output is missing snapshots: expected {expected}, got {got}")]
    MissingSnapshots { expected: usize, got: usize },
}

/// Per-trajectory metadata: standard fields, system-specific extras (in
/// stored order), generation timing, and the channel-to-record mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub name: String,
    pub num_time_steps: usize,
    pub time_step_size: f64,
    pub extras: Map<String, Value>,
    pub traj_gen_time: f64,
    pub field_keys: Vec<(String, String)>,
}

impl TrajectoryEntry {
    pub fn record_name(&self, channel: &str) -> Option<&str> {
        self.field_keys
            .iter()
            .find(|(c, _)| c == channel)
            .map(|(_, r)| r.as_str())
    }
}

/// A full dataset: metadata document plus named array records.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub system: SystemKind,
    pub system_args: Value,
    pub metadata: Value,
    pub trajectories: Vec<TrajectoryEntry>,
    pub records: BTreeMap<String, NdArray>,
}

impl DatasetBundle {
    /// Resolve a channel of one trajectory through its `field_keys`.
    pub fn channel(&self, traj: usize, channel: &str) -> Option<&NdArray> {
        let record = self.trajectories.get(traj)?.record_name(channel)?;
        self.records.get(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dim {
    /// num_time_steps of the trajectory.
    T,
    /// Number of spatial points, inferred per trajectory.
    P,
    /// Number of directed edges, inferred per trajectory.
    E,
    /// Literal 1.
    One,
    /// Literal 2.
    Two,
}

struct ChannelSpec {
    name: &'static str,
    dims: &'static [Dim],
    dtype: Dtype,
    alias_of: Option<&'static str>,
}

const fn chan(name: &'static str, dims: &'static [Dim], dtype: Dtype) -> ChannelSpec {
    ChannelSpec {
        name,
        dims,
        dtype,
        alias_of: None,
    }
}

const fn alias(
    name: &'static str,
    dims: &'static [Dim],
    dtype: Dtype,
    target: &'static str,
) -> ChannelSpec {
    ChannelSpec {
        name,
        dims,
        dtype,
        alias_of: Some(target),
    }
}

const SPRING_CHANNELS: &[ChannelSpec] = &[
    chan("q", &[Dim::T, Dim::One], Dtype::F64),
    chan("p", &[Dim::T, Dim::One], Dtype::F64),
    chan("dqdt", &[Dim::T, Dim::One], Dtype::F64),
    chan("dpdt", &[Dim::T, Dim::One], Dtype::F64),
    chan("t", &[Dim::T], Dtype::F64),
];

const WAVE_CHANNELS: &[ChannelSpec] = &[
    chan("q", &[Dim::T, Dim::P], Dtype::F64),
    chan("p", &[Dim::T, Dim::P], Dtype::F64),
    chan("dqdt", &[Dim::T, Dim::P], Dtype::F64),
    chan("dpdt", &[Dim::T, Dim::P], Dtype::F64),
    chan("t", &[Dim::T], Dtype::F64),
];

const MESH_CHANNELS: &[ChannelSpec] = &[
    chan("q", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("p", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("dqdt", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("dpdt", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("t", &[Dim::T], Dtype::F64),
    chan("edge_indices", &[Dim::Two, Dim::E], Dtype::I64),
    chan("masses", &[Dim::P], Dtype::F64),
    chan("fixed_mask", &[Dim::P], Dtype::Bool),
    chan("fixed_mask_q", &[Dim::P, Dim::Two], Dtype::Bool),
    alias("fixed_mask_p", &[Dim::P, Dim::Two], Dtype::Bool, "fixed_mask_q"),
    alias("extra_fixed_mask", &[Dim::P], Dtype::Bool, "fixed_mask"),
];

const NS_CHANNELS: &[ChannelSpec] = &[
    chan("solutions", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("pressures", &[Dim::T, Dim::P], Dtype::F64),
    chan("grads", &[Dim::T, Dim::P, Dim::Two], Dtype::F64),
    chan("pressures_grads", &[Dim::T, Dim::P], Dtype::F64),
    chan("t", &[Dim::T], Dtype::F64),
    alias("q", &[Dim::T, Dim::P], Dtype::F64, "pressures"),
    alias("p", &[Dim::T, Dim::P, Dim::Two], Dtype::F64, "solutions"),
    alias("dqdt", &[Dim::T, Dim::P], Dtype::F64, "pressures_grads"),
    alias("dpdt", &[Dim::T, Dim::P, Dim::Two], Dtype::F64, "grads"),
    chan("edge_indices", &[Dim::Two, Dim::E], Dtype::I64),
    chan("vertices", &[Dim::P, Dim::Two], Dtype::F64),
    chan("fixed_mask", &[Dim::P], Dtype::Bool),
    chan("fixed_mask_solutions", &[Dim::P, Dim::Two], Dtype::Bool),
    chan("fixed_mask_pressures", &[Dim::P], Dtype::Bool),
    alias("fixed_mask_q", &[Dim::P], Dtype::Bool, "fixed_mask_pressures"),
    alias("fixed_mask_p", &[Dim::P, Dim::Two], Dtype::Bool, "fixed_mask_solutions"),
    chan("extra_fixed_mask", &[Dim::P, Dim::Two], Dtype::Bool),
];

fn channel_specs(system: SystemKind) -> &'static [ChannelSpec] {
    match system {
        SystemKind::Spring => SPRING_CHANNELS,
        SystemKind::Wave => WAVE_CHANNELS,
        SystemKind::SpringMesh => MESH_CHANNELS,
        SystemKind::NavierStokes => NS_CHANNELS,
    }
}

fn shape_matches(
    dims: &[Dim],
    shape: &[usize],
    nt: usize,
    np: &mut Option<usize>,
    ne: &mut Option<usize>,
) -> Result<(), String> {
    if dims.len() != shape.len() {
        return Err(format!("rank {} (expected {})", shape.len(), dims.len()));
    }
    for (dim, &actual) in dims.iter().zip(shape) {
        match dim {
            Dim::T => {
                if actual != nt {
                    return Err(format!("time dimension {actual} (expected {nt})"));
                }
            }
            Dim::One => {
                if actual != 1 {
                    return Err(format!("dimension {actual} (expected 1)"));
                }
            }
            Dim::Two => {
                if actual != 2 {
                    return Err(format!("dimension {actual} (expected 2)"));
                }
            }
            Dim::P => match np {
                Some(v) if *v != actual => {
                    return Err(format!("point dimension {actual} (expected {v})"))
                }
                Some(_) => {}
                None => *np = Some(actual),
            },
            Dim::E => match ne {
                Some(v) if *v != actual => {
                    return Err(format!("edge dimension {actual} (expected {v})"))
                }
                Some(_) => {}
                None => *ne = Some(actual),
            },
        }
    }
    Ok(())
}

/// Check every channel-table and structural invariant, returning one message
/// per violation. Empty means the bundle is well formed.
pub fn validate_bundle(bundle: &DatasetBundle) -> Vec<String> {
    let mut violations = Vec::new();
    let specs = channel_specs(bundle.system);

    match bundle.system_args.as_object() {
        None => violations.push("system_args must be an object".to_string()),
        Some(args) => match args.get("trajectory_defs").and_then(Value::as_array) {
            None => violations.push("system_args.trajectory_defs must be an array".to_string()),
            Some(defs) => {
                if defs.len() != bundle.trajectories.len() {
                    violations.push(format!(
                        "trajectory_defs has {} entries for {} trajectories",
                        defs.len(),
                        bundle.trajectories.len()
                    ));
                }
            }
        },
    }
    if !bundle.metadata.is_object() {
        violations.push("metadata must be an object".to_string());
    }

    for entry in &bundle.trajectories {
        let mut np = None;
        let mut ne = None;
        for spec in specs {
            let Some(record_name) = entry.record_name(spec.name) else {
                violations.push(format!("{}: missing channel {}", entry.name, spec.name));
                continue;
            };
            let Some(record) = bundle.records.get(record_name) else {
                violations.push(format!(
                    "{}: channel {} references missing record {}",
                    entry.name, spec.name, record_name
                ));
                continue;
            };
            if record.dtype() != spec.dtype {
                violations.push(format!(
                    "{}: channel {} has dtype {} (expected {})",
                    entry.name,
                    spec.name,
                    record.dtype().descr(),
                    spec.dtype.descr()
                ));
            }
            if let Err(msg) = shape_matches(
                spec.dims,
                record.shape(),
                entry.num_time_steps,
                &mut np,
                &mut ne,
            ) {
                violations.push(format!(
                    "{}: channel {} has bad shape: {}",
                    entry.name, spec.name, msg
                ));
            }
            if let Some(target) = spec.alias_of {
                if entry.record_name(target) != Some(record_name) {
                    violations.push(format!(
                        "{}: channel {} must alias the record of {}",
                        entry.name, spec.name, target
                    ));
                }
            }
        }
        for (channel, _) in &entry.field_keys {
            if !specs.iter().any(|s| s.name == channel) {
                violations.push(format!("{}: unknown channel {}", entry.name, channel));
            }
        }
        if let Some(t) = entry
            .record_name("t")
            .and_then(|r| bundle.records.get(r))
            .and_then(NdArray::as_f64s)
        {
            if t.windows(2).any(|w| w[1] <= w[0]) {
                violations.push(format!("{}: t channel is not strictly increasing", entry.name));
            }
        }
    }
    violations
}

fn entry_to_json(entry: &TrajectoryEntry) -> Value {
    let mut obj = Map::new();
    obj.insert("name".into(), json!(entry.name));
    obj.insert("num_time_steps".into(), json!(entry.num_time_steps));
    obj.insert("time_step_size".into(), json!(entry.time_step_size));
    for (k, v) in &entry.extras {
        obj.insert(k.clone(), v.clone());
    }
    let mut timing = Map::new();
    timing.insert("traj_gen_time".into(), json!(entry.traj_gen_time));
    obj.insert("timing".into(), Value::Object(timing));
    let mut fk = Map::new();
    for (channel, record) in &entry.field_keys {
        fk.insert(channel.clone(), json!(record));
    }
    obj.insert("field_keys".into(), Value::Object(fk));
    Value::Object(obj)
}

/// Serialize the metadata document with the pinned top-level key order.
pub fn bundle_meta_json(bundle: &DatasetBundle) -> String {
    let mut top = Map::new();
    top.insert("system".into(), json!(bundle.system.as_str()));
    top.insert("system_args".into(), bundle.system_args.clone());
    top.insert("metadata".into(), bundle.metadata.clone());
    top.insert(
        "trajectories".into(),
        Value::Array(bundle.trajectories.iter().map(entry_to_json).collect()),
    );
    let mut out = serde_json::to_string_pretty(&Value::Object(top)).expect("bundle is serializable");
    out.push('\n');
    out
}

/// Validate and write a bundle into `directory` as `system_meta.json` plus
/// `trajectories.npz`. Nothing is written if validation fails.
pub fn write_bundle(bundle: &DatasetBundle, directory: &Path) -> Result<(), DatasetError> {
    let violations = validate_bundle(bundle);
    if !violations.is_empty() {
        return Err(DatasetError::Validation(violations));
    }
    fs::create_dir_all(directory)?;
    fs::write(directory.join(META_FILE), bundle_meta_json(bundle))?;
    npz::write_npz_file(&directory.join(ARCHIVE_FILE), &bundle.records)
}

fn parse_entry(value: &Value) -> Result<TrajectoryEntry, DatasetError> {
    let malformed = |msg: String| DatasetError::MalformedMeta(msg);
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("trajectory entry must be an object".into()))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("trajectory entry missing name".into()))?
        .to_string();
    let num_time_steps = obj
        .get("num_time_steps")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(format!("{name}: missing num_time_steps")))?
        as usize;
    let time_step_size = obj
        .get("time_step_size")
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed(format!("{name}: missing time_step_size")))?;
    let traj_gen_time = obj
        .get("timing")
        .and_then(|t| t.get("traj_gen_time"))
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed(format!("{name}: missing timing.traj_gen_time")))?;
    let field_keys_obj = obj
        .get("field_keys")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(format!("{name}: missing field_keys")))?;
    let mut field_keys = Vec::with_capacity(field_keys_obj.len());
    for (channel, record) in field_keys_obj {
        let record = record
            .as_str()
            .ok_or_else(|| malformed(format!("{name}: field_keys.{channel} must be a string")))?;
        field_keys.push((channel.clone(), record.to_string()));
    }
    let mut extras = Map::new();
    for (k, v) in obj {
        if !matches!(
            k.as_str(),
            "name" | "num_time_steps" | "time_step_size" | "timing" | "field_keys"
        ) {
            extras.insert(k.clone(), v.clone());
        }
    }
    Ok(TrajectoryEntry {
        name,
        num_time_steps,
        time_step_size,
        extras,
        traj_gen_time,
        field_keys,
    })
}

/// Load a bundle from a dataset directory, resolving and checking every
/// channel reference and the channel tables.
pub fn read_bundle(directory: &Path) -> Result<DatasetBundle, DatasetError> {
    let meta_path = directory.join(META_FILE);
    if !meta_path.exists() {
        return Err(DatasetError::MissingFile(meta_path));
    }
    let text = fs::read_to_string(&meta_path)?;
    let doc: Value = serde_json::from_str(&text)?;
    let obj = doc
        .as_object()
        .ok_or_else(|| DatasetError::MalformedMeta("top level must be an object".into()))?;
    let system_str = obj
        .get("system")
        .and_then(Value::as_str)
        .ok_or_else(|| DatasetError::MalformedMeta("missing system".into()))?;
    let system = SystemKind::parse(system_str)
        .ok_or_else(|| DatasetError::MalformedMeta(format!("unknown system {system_str:?}")))?;
    let system_args = obj
        .get("system_args")
        .cloned()
        .ok_or_else(|| DatasetError::MalformedMeta("missing system_args".into()))?;
    let metadata = obj
        .get("metadata")
        .cloned()
        .ok_or_else(|| DatasetError::MalformedMeta("missing metadata".into()))?;
    let trajectories = obj
        .get("trajectories")
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::MalformedMeta("missing trajectories".into()))?
        .iter()
        .map(parse_entry)
        .collect::<Result<Vec<_>, _>>()?;

    let records = npz::read_npz_file(&directory.join(ARCHIVE_FILE))?;

    for entry in &trajectories {
        for (channel, record) in &entry.field_keys {
            if !records.contains_key(record) {
                return Err(DatasetError::DanglingFieldKey {
                    trajectory: entry.name.clone(),
                    channel: channel.clone(),
                    record: record.clone(),
                });
            }
        }
    }

    let bundle = DatasetBundle {
        system,
        system_args,
        metadata,
        trajectories,
        records,
    };
    let violations = validate_bundle(&bundle);
    if !violations.is_empty() {
        return Err(DatasetError::Validation(violations));
    }
    Ok(bundle)
}

/// Reconstruct in-memory trajectories from a bundle via the `q`, `p`,
/// `dqdt`, `dpdt`, and `t` channels (the alias channels make this uniform
/// across all four systems).
pub fn bundle_trajectories(bundle: &DatasetBundle) -> Result<Vec<Trajectory>, DatasetError> {
    let mut out = Vec::with_capacity(bundle.trajectories.len());
    for (idx, entry) in bundle.trajectories.iter().enumerate() {
        let fetch = |channel: &str| -> Result<&NdArray, DatasetError> {
            bundle.channel(idx, channel).ok_or_else(|| {
                DatasetError::MalformedMeta(format!("{}: missing channel {channel}", entry.name))
            })
        };
        let q = fetch("q")?;
        let p = fetch("p")?;
        let dq = fetch("dqdt")?;
        let dp = fetch("dpdt")?;
        let nt = entry.num_time_steps;
        let per_snap = |arr: &NdArray| arr.element_count() / nt.max(1);
        let (qw, pw) = (per_snap(q), per_snap(p));
        let qs = q.as_f64s().expect("validated dtype");
        let ps = p.as_f64s().expect("validated dtype");
        let dqs = dq.as_f64s().expect("validated dtype");
        let dps = dp.as_f64s().expect("validated dtype");
        let grid = TimeGrid::new(entry.time_step_size, nt, 1)
            .map_err(|e| DatasetError::MalformedMeta(format!("{}: {e}", entry.name)))?;
        let mut states = Vec::with_capacity(nt);
        let mut derivatives = Vec::with_capacity(nt);
        for k in 0..nt {
            states.push(PhaseState::new(
                qs[k * qw..(k + 1) * qw].to_vec(),
                ps[k * pw..(k + 1) * pw].to_vec(),
            ));
            derivatives.push(StateDerivative::new(
                dqs[k * qw..(k + 1) * qw].to_vec(),
                dps[k * pw..(k + 1) * pw].to_vec(),
            ));
        }
        out.push(Trajectory {
            grid,
            states,
            derivatives,
            gen_time_seconds: entry.traj_gen_time,
        });
    }
    Ok(out)
}
