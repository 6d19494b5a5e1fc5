//! Run-state scanning: classify every description against the launch and
//! completion markers in its run directory, with optional deletion of runs
//! in an error state.
//!
//! A run is `running` when its launch marker is present, its completion
//! marker absent, and its liveness file names a process that still exists;
//! without liveness it is `incomplete`. Completed runs are re-verified
//! against the recorded output digest, so truncated or modified outputs are
//! also reported as `incomplete`. Failed runs (nonzero exit) show up as
//! `incomplete` with the failure in the detail column.

use super::{
    descr_dir, description_hash, digest_outputs, load_descriptions, run_dir, CompleteMarker,
    LaunchMarker, Phase, RunError, RunState,
};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RunStatus {
    pub phase: Phase,
    pub name: String,
    pub state: RunState,
    pub detail: String,
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

fn classify(experiment_dir: &Path, phase: Phase, name: &str) -> RunStatus {
    let status = |state, detail: String| RunStatus {
        phase,
        name: name.to_string(),
        state,
        detail,
    };
    let descr_path = descr_dir(experiment_dir, phase).join(format!("{name}.json"));
    let current_hash = match fs::read_to_string(&descr_path).map_err(|e| e.to_string()) {
        Ok(text) => match description_hash(&text) {
            Ok(h) => h,
            Err(e) => {
                return status(RunState::Incomplete, format!("malformed description: {e}"))
            }
        },
        Err(e) => return status(RunState::Incomplete, format!("unreadable description: {e}")),
    };

    let dir = run_dir(experiment_dir, phase, name);
    let launch_path = dir.join("launch.json");
    if !launch_path.exists() {
        return status(RunState::Outstanding, String::new());
    }
    let launch: LaunchMarker = match fs::read_to_string(&launch_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(l) => l,
        Err(e) => return status(RunState::Incomplete, format!("bad launch marker: {e}")),
    };
    if launch.description_hash != current_hash {
        return status(
            RunState::Mismatched,
            "description changed after launch".to_string(),
        );
    }

    let complete_path = dir.join("complete.json");
    if !complete_path.exists() {
        let alive_path = dir.join("alive");
        if alive_path.exists() {
            let pid = fs::read_to_string(&alive_path)
                .ok()
                .and_then(|t| t.trim().parse::<u32>().ok());
            if pid.is_some_and(process_alive) {
                return status(RunState::Running, format!("pid {}", pid.unwrap()));
            }
        }
        return status(RunState::Incomplete, "no completion marker".to_string());
    }
    let complete: CompleteMarker = match fs::read_to_string(&complete_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => return status(RunState::Incomplete, format!("bad completion marker: {e}")),
    };
    if complete.exit_status != 0 {
        let detail = complete
            .error
            .unwrap_or_else(|| format!("exit status {}", complete.exit_status));
        return status(RunState::Incomplete, format!("failed: {detail}"));
    }
    match digest_outputs(&dir) {
        Ok(digest) if digest == complete.results_digest => {
            status(RunState::Complete, String::new())
        }
        Ok(_) => status(
            RunState::Incomplete,
            "output digest mismatch".to_string(),
        ),
        Err(e) => status(RunState::Incomplete, format!("unreadable outputs: {e}")),
    }
}

/// Classify every description in the experiment directory, sorted by phase
/// then name. Malformed description files are reported, not fatal.
pub fn scan(experiment_dir: &Path) -> Result<Vec<RunStatus>, RunError> {
    let mut statuses = Vec::new();
    for phase in Phase::ALL {
        let (descriptions, malformed) = load_descriptions(experiment_dir, phase)?;
        for (file, error) in malformed {
            statuses.push(RunStatus {
                phase,
                name: file,
                state: RunState::Incomplete,
                detail: format!("malformed description: {error}"),
            });
        }
        for d in descriptions {
            statuses.push(classify(experiment_dir, phase, &d.name));
        }
    }
    Ok(statuses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteTarget {
    Incomplete,
    Mismatched,
}

impl DeleteTarget {
    pub fn parse(s: &str) -> Option<DeleteTarget> {
        match s {
            "incomplete" => Some(DeleteTarget::Incomplete),
            "mismatch" | "mismatched" => Some(DeleteTarget::Mismatched),
            _ => None,
        }
    }

    fn matches(&self, state: RunState) -> bool {
        match self {
            DeleteTarget::Incomplete => state == RunState::Incomplete,
            DeleteTarget::Mismatched => state == RunState::Mismatched,
        }
    }
}

/// Delete the run directories of every run in the targeted error state,
/// returning their names. Their descriptions stay, so they scan as
/// outstanding afterwards.
pub fn delete_runs(
    experiment_dir: &Path,
    target: DeleteTarget,
) -> Result<Vec<String>, RunError> {
    let statuses = scan(experiment_dir)?;
    let mut deleted = Vec::new();
    for s in statuses {
        if target.matches(s.state) {
            let dir = run_dir(experiment_dir, s.phase, &s.name);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            deleted.push(s.name);
        }
    }
    Ok(deleted)
}
