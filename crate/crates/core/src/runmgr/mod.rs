//! Three-phase run lifecycle: JSON run descriptions under `descr/`, state
//! scanning against launch/completion markers under `run/`, and local
//! execution. Runs are identified by a unique name per phase; a run whose
//! description file changed after launch is flagged as mismatched via a
//! canonical-JSON content hash.

mod descr;
mod launch;
mod scan;

pub use descr::{
    expand_spec, generate_descriptions, load_descriptions, ExperimentSpec, LearnerEntry,
    SystemSpecEntry,
};
pub use launch::{launch, timing, LaunchSummary, TimingRow};
pub use scan::{delete_runs, scan, DeleteTarget, RunStatus};

use crate::dataset::DatasetError;
use crate::integrators::{IntegratorError, IntegratorKind};
use crate::learners::{LearnerError, TaskKind, TrainConfig};
use crate::systems::{SystemError, SystemKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON failure: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("dependencies not complete: {}", .blockers.join(", "))]
    DependencyIncomplete { blockers: Vec<String> },
    #[error("{failed} of {launched} runs failed")]
    RunsFailed { failed: usize, launched: usize },
}

impl RunError {
    /// CLI exit code: 1 for validation-type refusals, 2 for execution
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) | RunError::DependencyIncomplete { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    DataGen,
    Train,
    Eval,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::DataGen, Phase::Train, Phase::Eval];

    pub fn dir_name(&self) -> &'static str {
        match self {
            Phase::DataGen => "data_gen",
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "data_gen" => Some(Phase::DataGen),
            "train" => Some(Phase::Train),
            "eval" => Some(Phase::Eval),
            _ => None,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Classification of one run by the scanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Outstanding,
    Running,
    Complete,
    /// Launched but unfinished, failed, or with corrupted outputs.
    Incomplete,
    /// Description file changed after the run was launched.
    Mismatched,
}

impl std::fmt::Display for RunState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunState::Outstanding => "outstanding",
            RunState::Running => "running",
            RunState::Complete => "complete",
            RunState::Incomplete => "incomplete",
            RunState::Mismatched => "mismatched",
        };
        f.write_str(s)
    }
}

/// Whether initial conditions come from the training distribution or the
/// out-of-distribution ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    InDistribution,
    OutOfDistribution,
}

/// System-specific generation parameters. The tag doubles as the system
/// identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system")]
pub enum SystemParams {
    #[serde(rename = "spring")]
    Spring {},
    #[serde(rename = "wave")]
    Wave {
        n_grid: usize,
        space_max: f64,
        wave_speed: f64,
    },
    #[serde(rename = "spring-mesh")]
    SpringMesh {
        width: usize,
        height: usize,
        vel_decay: f64,
        fix_top: bool,
    },
    #[serde(rename = "navier-stokes")]
    NavierStokes {
        obstacle_count: usize,
        viscosity: f64,
        in_velocity: f64,
        grid_resolution: f64,
        /// Directory of externally produced solver outputs
        /// (`traj#####.npz`), ingested into a dataset when present.
        solver_outputs: Option<PathBuf>,
    },
}

impl SystemParams {
    pub fn system_kind(&self) -> SystemKind {
        match self {
            SystemParams::Spring {} => SystemKind::Spring,
            SystemParams::Wave { .. } => SystemKind::Wave,
            SystemParams::SpringMesh { .. } => SystemKind::SpringMesh,
            SystemParams::NavierStokes { .. } => SystemKind::NavierStokes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenPayload {
    pub seed: u64,
    pub distribution: Distribution,
    pub trajectories: usize,
    pub num_time_steps: usize,
    pub time_step_size: f64,
    pub subsample: usize,
    pub integrator: IntegratorKind,
    pub system_params: SystemParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LearnerSpec {
    #[serde(rename = "mlp")]
    Mlp { depth: usize, width: usize },
    #[serde(rename = "random-features")]
    RandomFeatures {
        features: usize,
        lambda: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPayload {
    pub learner: LearnerSpec,
    pub task: TaskKind,
    /// Name of the data_gen run providing training trajectories.
    pub train_dataset: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EvalModelSource {
    /// A checkpoint from a completed training run.
    #[serde(rename = "train")]
    Train { run: String },
    /// A nearest-neighbor model fitted at evaluation time from a training
    /// dataset (KNNs have no training phase).
    #[serde(rename = "knn")]
    Knn { train_dataset: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPayload {
    pub task: TaskKind,
    pub source: EvalModelSource,
    /// Name of the data_gen run providing evaluation trajectories.
    pub eval_dataset: String,
    /// Integrator for derivative-prediction rollouts.
    pub integrator: Option<IntegratorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Payload {
    #[serde(rename = "data_gen")]
    DataGen(DataGenPayload),
    #[serde(rename = "train")]
    Train(TrainPayload),
    #[serde(rename = "eval")]
    Eval(EvalPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescription {
    pub phase: Phase,
    pub experiment: String,
    pub name: String,
    pub payload: Payload,
}

impl RunDescription {
    pub fn validate(&self) -> Result<(), RunError> {
        let phase_matches = matches!(
            (&self.phase, &self.payload),
            (Phase::DataGen, Payload::DataGen(_))
                | (Phase::Train, Payload::Train(_))
                | (Phase::Eval, Payload::Eval(_))
        );
        if !phase_matches {
            return Err(RunError::Validation(format!(
                "{}: payload kind does not match phase {}",
                self.name, self.phase
            )));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(RunError::Validation(format!(
                "run name {:?} must be a nonempty filesystem-safe token",
                self.name
            )));
        }
        if let Payload::Eval(eval) = &self.payload {
            if eval.task == TaskKind::DerivativePrediction && eval.integrator.is_none() {
                return Err(RunError::Validation(format!(
                    "{}: derivative-prediction evaluation needs an integrator",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Runs in earlier phases this run depends on, as `(phase, name)`.
    pub fn dependencies(&self) -> Vec<(Phase, String)> {
        match &self.payload {
            Payload::DataGen(_) => Vec::new(),
            Payload::Train(t) => vec![(Phase::DataGen, t.train_dataset.clone())],
            Payload::Eval(e) => {
                let mut deps = vec![(Phase::DataGen, e.eval_dataset.clone())];
                match &e.source {
                    EvalModelSource::Train { run } => deps.push((Phase::Train, run.clone())),
                    EvalModelSource::Knn { train_dataset } => {
                        deps.push((Phase::DataGen, train_dataset.clone()))
                    }
                }
                deps
            }
        }
    }
}

pub fn descr_dir(experiment_dir: &Path, phase: Phase) -> PathBuf {
    experiment_dir.join("descr").join(phase.dir_name())
}

pub fn run_dir(experiment_dir: &Path, phase: Phase, name: &str) -> PathBuf {
    experiment_dir.join("run").join(phase.dir_name()).join(name)
}

/// Canonical JSON: object keys sorted, no whitespace. The form that gets
/// hashed for mismatch detection.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string serializes"),
                        canonical_json(&map[k.as_str()])
                    )
                })
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => serde_json::to_string(other).expect("scalar serializes"),
    }
}

/// SHA-256 of the canonical form of a description document.
pub fn description_hash(text: &str) -> Result<String, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canonical = canonical_json(&value);
    Ok(hex_digest(canonical.as_bytes()))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Content digest of a run's output files (markers excluded): sorted
/// relative paths hashed with their lengths and contents.
pub fn digest_outputs(run_dir: &Path) -> Result<String, std::io::Error> {
    let mut files = Vec::new();
    collect_files(run_dir, run_dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in &files {
        let content = std::fs::read(run_dir.join(rel))?;
        hasher.update(rel.as_bytes());
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

const MARKER_FILES: [&str; 3] = ["launch.json", "complete.json", "alive"];

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), std::io::Error> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("path under root")
                .to_string_lossy()
                .replace('\\', "/");
            if dir == root && MARKER_FILES.contains(&rel.as_str()) {
                continue;
            }
            out.push(rel);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct LaunchMarker {
    pub description_hash: String,
    pub started_unix_seconds: f64,
    pub pid: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct CompleteMarker {
    pub exit_status: i32,
    pub wall_time_seconds: f64,
    pub results_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Small spring experiment used by the runmgr unit tests: `n_sizes` training
/// sets, one eval set, a KNN learner on the derivative task. Returns the
/// data_gen run names.
#[cfg(test)]
pub(crate) fn expand_test_experiment(dir: &Path, n_sizes: usize) -> Vec<String> {
    let spec = ExperimentSpec {
        experiment: "t".into(),
        seed: 5,
        systems: vec![SystemSpecEntry {
            params: SystemParams::Spring {},
            train_sizes: (1..=n_sizes).map(|i| i * 2).collect(),
            eval_size: 2,
            ood_eval_size: 0,
            num_time_steps: 4,
            time_step_size: 0.1,
            subsample: 1,
            integrator: IntegratorKind::Leapfrog,
        }],
        learners: vec![LearnerEntry::Knn],
        tasks: vec![TaskKind::DerivativePrediction],
        eval_integrator: IntegratorKind::Leapfrog,
    };
    let descriptions = generate_descriptions(&spec, dir).expect("spec expands");
    let mut names: Vec<String> = descriptions
        .iter()
        .filter(|d| d.phase == Phase::DataGen)
        .map(|d| d.name.clone())
        .collect();
    names.sort();
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_keys_and_strips_whitespace() {
        let value: serde_json::Value =
            serde_json::from_str(r#"{"b": [1, 2.5, {"z": 1, "a": 2}], "a": "x"}"#).unwrap();
        assert_eq!(
            canonical_json(&value),
            r#"{"a":"x","b":[1,2.5,{"a":2,"z":1}]}"#
        );
    }

    #[test]
    fn description_hash_ignores_formatting_but_not_content() {
        let a = r#"{"phase": "data_gen", "x": 1}"#;
        let b = "{\n  \"x\": 1,\n  \"phase\": \"data_gen\"\n}";
        let c = r#"{"phase": "data_gen", "x": 2}"#;
        assert_eq!(description_hash(a).unwrap(), description_hash(b).unwrap());
        assert_ne!(description_hash(a).unwrap(), description_hash(c).unwrap());
    }

    #[test]
    fn description_round_trips_through_serde() {
        let descr = RunDescription {
            phase: Phase::DataGen,
            experiment: "demo".into(),
            name: "demo-spring-train-00010".into(),
            payload: Payload::DataGen(DataGenPayload {
                seed: 7,
                distribution: Distribution::InDistribution,
                trajectories: 10,
                num_time_steps: 805,
                time_step_size: 0.00781,
                subsample: 128,
                integrator: IntegratorKind::Leapfrog,
                system_params: SystemParams::Spring {},
            }),
        };
        let text = serde_json::to_string_pretty(&descr).unwrap();
        let back: RunDescription = serde_json::from_str(&text).unwrap();
        assert_eq!(back, descr);
        assert!(back.validate().is_ok());
        assert!(back.dependencies().is_empty());
    }

    #[test]
    fn eval_dependencies_cover_model_and_dataset() {
        let descr = RunDescription {
            phase: Phase::Eval,
            experiment: "demo".into(),
            name: "e".into(),
            payload: Payload::Eval(EvalPayload {
                task: TaskKind::DerivativePrediction,
                source: EvalModelSource::Knn {
                    train_dataset: "d-train".into(),
                },
                eval_dataset: "d-eval".into(),
                integrator: Some(IntegratorKind::Leapfrog),
            }),
        };
        let deps = descr.dependencies();
        assert!(deps.contains(&(Phase::DataGen, "d-eval".into())));
        assert!(deps.contains(&(Phase::DataGen, "d-train".into())));
    }

    #[test]
    fn derivative_eval_without_integrator_is_invalid() {
        let descr = RunDescription {
            phase: Phase::Eval,
            experiment: "demo".into(),
            name: "e".into(),
            payload: Payload::Eval(EvalPayload {
                task: TaskKind::DerivativePrediction,
                source: EvalModelSource::Knn {
                    train_dataset: "d".into(),
                },
                eval_dataset: "d-eval".into(),
                integrator: None,
            }),
        };
        assert!(matches!(descr.validate(), Err(RunError::Validation(_))));
    }
}
