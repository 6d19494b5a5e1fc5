//! Local launch of outstanding runs: dependency checking against earlier
//! phases, marker bookkeeping, and the three phase executors (dataset
//! generation, training, evaluation). Runs execute serially in sorted name
//! order by default; `jobs > 1` runs independent runs on worker threads
//! (each run touches only its own directory).

use super::{
    load_descriptions, run_dir, scan, CompleteMarker, DataGenPayload, Distribution,
    EvalModelSource, EvalPayload, LaunchMarker, Payload, Phase, RunDescription, RunError,
    RunState, SystemParams, TrainPayload,
};
use crate::dataset::{
    build_mesh_bundle, build_spring_bundle, build_wave_bundle, bundle_trajectories,
    ingest_external_ns, read_bundle, read_ns_solver_output, system_from_bundle, write_bundle,
    write_npz_file, DatasetBundle, NdArray,
};
use crate::domain::{PhaseState, TimeGrid, Trajectory};
use crate::evaluation::{
    aggregate_report, rollout_derivative, rollout_step, timing_protocol, weighted_trajectory_mse,
    BoxSummary, RolloutResult, ScalingOutcome,
};
use crate::integrators::{integrate, IntegratorKind};
use crate::learners::{
    load_model, mlp_train, save_model, training_pairs, training_pairs_with_mask, DerivativeModel,
    KnnModel, MaskedPredictor, MlpModel, Predictor, RandomFeatureModel, TaskKind, TrainedModel,
    TrainingSet,
};
use crate::par::{map_indexed, Parallelism};
use crate::sampling::{MeshIcSource, NsIcSource, SpringIcSource, WaveIcSource};
use crate::systems::{
    emit_solver_scene, Dynamics, SpringMeshSystem, SystemKind, WaveSystem,
};
use serde_json::{json, Map, Value};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Default)]
pub struct LaunchSummary {
    pub launched: usize,
    pub succeeded: usize,
    pub failed: Vec<(String, String)>,
}

/// Launch every outstanding run of a phase. Refuses (listing the blockers)
/// when a referenced earlier-phase run is not complete. Individual run
/// failures are recorded in their completion markers and the remaining runs
/// continue.
pub fn launch(
    experiment_dir: &Path,
    phase: Phase,
    jobs: usize,
) -> Result<LaunchSummary, RunError> {
    let (descriptions, _malformed) = load_descriptions(experiment_dir, phase)?;
    for d in &descriptions {
        d.validate()?;
    }
    let statuses = scan(experiment_dir)?;
    let state_of: HashMap<(Phase, String), RunState> = statuses
        .into_iter()
        .map(|s| ((s.phase, s.name), s.state))
        .collect();

    let outstanding: Vec<&RunDescription> = descriptions
        .iter()
        .filter(|d| {
            state_of.get(&(phase, d.name.clone())) == Some(&RunState::Outstanding)
        })
        .collect();

    let mut blockers = Vec::new();
    for d in &outstanding {
        for (dep_phase, dep_name) in d.dependencies() {
            let state = state_of.get(&(dep_phase, dep_name.clone()));
            if state != Some(&RunState::Complete) {
                blockers.push(format!(
                    "{}/{} ({})",
                    dep_phase,
                    dep_name,
                    state.map_or("missing".to_string(), |s| s.to_string())
                ));
            }
        }
    }
    if !blockers.is_empty() {
        blockers.sort();
        blockers.dedup();
        return Err(RunError::DependencyIncomplete { blockers });
    }

    let mut summary = LaunchSummary {
        launched: outstanding.len(),
        ..Default::default()
    };
    if jobs <= 1 {
        for d in outstanding {
            match execute_run(experiment_dir, d) {
                Ok(()) => summary.succeeded += 1,
                Err(e) => summary.failed.push((d.name.clone(), e)),
            }
        }
    } else {
        let queue: Mutex<VecDeque<&RunDescription>> = Mutex::new(outstanding.into_iter().collect());
        let results: Mutex<Vec<(String, Result<(), String>)>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let next = queue.lock().expect("queue lock").pop_front();
                    let Some(d) = next else { break };
                    let outcome = execute_run(experiment_dir, d);
                    results
                        .lock()
                        .expect("results lock")
                        .push((d.name.clone(), outcome));
                });
            }
        });
        for (name, outcome) in results.into_inner().expect("results lock") {
            match outcome {
                Ok(()) => summary.succeeded += 1,
                Err(e) => summary.failed.push((name, e)),
            }
        }
        summary.failed.sort();
    }
    Ok(summary)
}

/// Run one description to completion, writing launch/alive/complete markers.
/// The returned error string is also recorded in the completion marker.
fn execute_run(experiment_dir: &Path, descr: &RunDescription) -> Result<(), String> {
    let dir = run_dir(experiment_dir, descr.phase, &descr.name);
    let io_err = |e: std::io::Error| format!("{}: {e}", descr.name);
    fs::create_dir_all(&dir).map_err(io_err)?;

    let descr_path = super::descr_dir(experiment_dir, descr.phase).join(format!("{}.json", descr.name));
    let text = fs::read_to_string(&descr_path).map_err(io_err)?;
    let hash = super::description_hash(&text).map_err(|e| e.to_string())?;
    let launch_marker = LaunchMarker {
        description_hash: hash,
        started_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        pid: std::process::id(),
    };
    fs::write(
        dir.join("launch.json"),
        serde_json::to_string_pretty(&launch_marker).map_err(|e| e.to_string())?,
    )
    .map_err(io_err)?;
    fs::write(dir.join("alive"), std::process::id().to_string()).map_err(io_err)?;

    let start = Instant::now();
    let outcome = match &descr.payload {
        Payload::DataGen(p) => exec_data_gen(p, &dir),
        Payload::Train(p) => exec_train(p, experiment_dir, &dir),
        Payload::Eval(p) => exec_eval(p, descr, experiment_dir, &dir),
    };
    let error = outcome.as_ref().err().map(|e| e.to_string());
    let digest = super::digest_outputs(&dir).unwrap_or_default();
    let complete = CompleteMarker {
        exit_status: if error.is_none() { 0 } else { 1 },
        wall_time_seconds: start.elapsed().as_secs_f64(),
        results_digest: digest,
        error: error.clone(),
    };
    let _ = fs::write(
        dir.join("complete.json"),
        serde_json::to_string_pretty(&complete).unwrap_or_default(),
    );
    let _ = fs::remove_file(dir.join("alive"));
    match error {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn generate_trajectories(
    system: &dyn Dynamics,
    integrator: IntegratorKind,
    states: &[PhaseState],
    grid: &TimeGrid,
) -> Result<Vec<Trajectory>, RunError> {
    map_indexed(Parallelism::default(), states.len(), |i| {
        integrate(system, integrator, &states[i], grid)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(Into::into)
}

fn exec_data_gen(payload: &DataGenPayload, dir: &Path) -> Result<(), RunError> {
    let grid = TimeGrid::new(
        payload.time_step_size,
        payload.num_time_steps,
        payload.subsample,
    )
    .map_err(|e| RunError::Validation(e.to_string()))?;
    let dataset_dir = dir.join("dataset");
    match &payload.system_params {
        SystemParams::Spring {} => {
            let mut source = match payload.distribution {
                Distribution::InDistribution => SpringIcSource::in_distribution(payload.seed),
                Distribution::OutOfDistribution => {
                    SpringIcSource::out_of_distribution(payload.seed)
                }
            };
            let states = source.draw(payload.trajectories).to_vec();
            let trajs = generate_trajectories(
                &crate::systems::SpringSystem,
                payload.integrator,
                &states,
                &grid,
            )?;
            write_bundle(&build_spring_bundle(&trajs), &dataset_dir)?;
        }
        SystemParams::Wave {
            n_grid,
            space_max,
            wave_speed,
        } => {
            let system = WaveSystem::new(*n_grid, *space_max, *wave_speed);
            let mut source = match payload.distribution {
                Distribution::InDistribution => WaveIcSource::in_distribution(payload.seed),
                Distribution::OutOfDistribution => WaveIcSource::out_of_distribution(payload.seed),
            };
            let pulses = source.draw(payload.trajectories).to_vec();
            let states: Vec<PhaseState> =
                pulses.iter().map(|p| p.to_state(system.n_grid)).collect();
            let trajs = generate_trajectories(&system, payload.integrator, &states, &grid)?;
            write_bundle(&build_wave_bundle(&system, &pulses, &trajs), &dataset_dir)?;
        }
        SystemParams::SpringMesh {
            width,
            height,
            vel_decay,
            fix_top,
        } => {
            let system = SpringMeshSystem::grid(*width, *height, *fix_top, *vel_decay);
            let mut source = match payload.distribution {
                Distribution::InDistribution => MeshIcSource::in_distribution(payload.seed, &system),
                Distribution::OutOfDistribution => {
                    MeshIcSource::out_of_distribution(payload.seed, &system)
                }
            };
            let states = source.draw_states(payload.trajectories, &system);
            let trajs = generate_trajectories(&system, payload.integrator, &states, &grid)?;
            write_bundle(&build_mesh_bundle(&system, &trajs), &dataset_dir)?;
        }
        SystemParams::NavierStokes {
            obstacle_count,
            viscosity,
            in_velocity,
            grid_resolution,
            solver_outputs,
        } => {
            let mut source = match payload.distribution {
                Distribution::InDistribution => {
                    NsIcSource::in_distribution(payload.seed, *obstacle_count)
                }
                Distribution::OutOfDistribution => {
                    NsIcSource::out_of_distribution(payload.seed, *obstacle_count)
                }
            };
            source.viscosity = *viscosity;
            source.in_velocity = *in_velocity;
            let mut scenes = source.draw(payload.trajectories)?.to_vec();
            for scene in &mut scenes {
                scene.grid_resolution = *grid_resolution;
            }
            // Always emit the solver job documents; ingest trajectories when
            // the external solver outputs are available.
            let scene_dir = dir.join("scenes");
            fs::create_dir_all(&scene_dir)?;
            for (i, scene) in scenes.iter().enumerate() {
                fs::write(
                    scene_dir.join(format!("scene{i:05}.json")),
                    emit_solver_scene(scene, &grid),
                )?;
            }
            if let Some(outputs) = solver_outputs {
                let mut inputs = Vec::with_capacity(scenes.len());
                for (i, scene) in scenes.iter().enumerate() {
                    let path = outputs.join(format!("traj{i:05}.npz"));
                    inputs.push((scene.clone(), read_ns_solver_output(&path)?));
                }
                let bundle = ingest_external_ns(&inputs, &grid)?;
                write_bundle(&bundle, &dataset_dir)?;
            }
        }
    }
    Ok(())
}

/// Per-point fixed mask of one trajectory, for the systems whose learners
/// receive it as extra input.
fn trajectory_mask(bundle: &DatasetBundle, traj: usize) -> Option<Vec<bool>> {
    if !matches!(
        bundle.system,
        SystemKind::SpringMesh | SystemKind::NavierStokes
    ) {
        return None;
    }
    bundle
        .channel(traj, "fixed_mask")
        .and_then(NdArray::as_bools)
        .map(<[bool]>::to_vec)
}

fn concat_training(mut sets: Vec<TrainingSet>) -> TrainingSet {
    let first = sets.remove(0);
    let mut inputs = first.inputs.data().to_vec();
    let mut targets = first.targets.data().to_vec();
    let mut rows = first.inputs.rows();
    for s in sets {
        assert_eq!(s.inputs.cols(), first.inputs.cols());
        inputs.extend_from_slice(s.inputs.data());
        targets.extend_from_slice(s.targets.data());
        rows += s.inputs.rows();
    }
    TrainingSet {
        inputs: crate::linalg::Mat::from_vec(rows, first.inputs.cols(), inputs),
        targets: crate::linalg::Mat::from_vec(rows, first.targets.cols(), targets),
        state_dim: first.state_dim,
    }
}

/// Assemble supervised pairs from a dataset bundle, appending each
/// trajectory's fixed mask when requested (masks vary per trajectory for
/// Navier-Stokes scenes).
fn assemble_pairs(
    bundle: &DatasetBundle,
    trajs: &[Trajectory],
    task: TaskKind,
    with_mask: bool,
) -> Result<TrainingSet, RunError> {
    if !with_mask {
        return Ok(training_pairs(trajs, task)?);
    }
    let mut sets = Vec::with_capacity(trajs.len());
    for (i, traj) in trajs.iter().enumerate() {
        let mask = trajectory_mask(bundle, i);
        sets.push(training_pairs_with_mask(
            std::slice::from_ref(traj),
            task,
            mask.as_deref(),
        )?);
    }
    Ok(concat_training(sets))
}

fn exec_train(payload: &TrainPayload, experiment_dir: &Path, dir: &Path) -> Result<(), RunError> {
    let dataset_dir = run_dir(experiment_dir, Phase::DataGen, &payload.train_dataset).join("dataset");
    let bundle = read_bundle(&dataset_dir)?;
    let trajs = bundle_trajectories(&bundle)?;
    let model_dir = dir.join("model");
    match &payload.learner {
        super::LearnerSpec::Mlp { depth, width } => {
            let pairs = assemble_pairs(&bundle, &trajs, payload.task, true)?;
            let mut model = MlpModel::new(
                pairs.inputs.cols(),
                pairs.targets.cols(),
                *depth,
                *width,
                payload.config.seed,
            );
            let history = mlp_train(&mut model, &pairs, payload.task, &payload.config)?;
            let mut doc = Map::new();
            doc.insert("epoch_loss".into(), json!(history));
            let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
            text.push('\n');
            fs::write(dir.join("loss_history.json"), text)?;
            save_model(
                &model_dir,
                &TrainedModel::Mlp(model),
                payload.task,
                payload.config.seed,
            )?;
        }
        super::LearnerSpec::RandomFeatures { features, lambda } => {
            let pairs = assemble_pairs(&bundle, &trajs, payload.task, false)?;
            let mut model =
                RandomFeatureModel::new(pairs.inputs.cols(), *features, payload.config.seed);
            match lambda {
                Some(l) => model.fit(&pairs.inputs, &pairs.targets, *l)?,
                None => {
                    model.fit_auto(&pairs.inputs, &pairs.targets)?;
                }
            }
            save_model(
                &model_dir,
                &TrainedModel::RandomFeatures(model),
                payload.task,
                payload.config.seed,
            )?;
        }
    }
    Ok(())
}

enum EvalModel {
    Trained(TrainedModel),
    Knn(KnnModel),
}

impl EvalModel {
    fn predictor(&self) -> &dyn Predictor {
        match self {
            EvalModel::Trained(m) => m,
            EvalModel::Knn(m) => m,
        }
    }
}

fn load_eval_model(
    source: &EvalModelSource,
    task: TaskKind,
    experiment_dir: &Path,
) -> Result<EvalModel, RunError> {
    match source {
        EvalModelSource::Train { run } => {
            let (model, stored_task, _) =
                load_model(&run_dir(experiment_dir, Phase::Train, run).join("model"))?;
            if stored_task != task {
                return Err(RunError::Validation(format!(
                    "model from {run} was trained for {} but evaluated for {}",
                    stored_task.as_str(),
                    task.as_str()
                )));
            }
            Ok(EvalModel::Trained(model))
        }
        EvalModelSource::Knn { train_dataset } => {
            let bundle = read_bundle(
                &run_dir(experiment_dir, Phase::DataGen, train_dataset).join("dataset"),
            )?;
            let trajs = bundle_trajectories(&bundle)?;
            Ok(EvalModel::Knn(KnnModel::fit(&trajs, task)?))
        }
    }
}

/// Roll the model out against every reference trajectory of the bundle.
fn compute_rollouts(
    bundle: &DatasetBundle,
    references: &[Trajectory],
    model: &dyn Predictor,
    task: TaskKind,
    integrator: Option<IntegratorKind>,
) -> Result<Vec<RolloutResult>, RunError> {
    if references.is_empty() {
        return Err(RunError::Validation(
            "evaluation dataset has no trajectories".into(),
        ));
    }
    let state_dim = references[0].states[0].dim();
    let nq = references[0].states[0].q.len();
    let np = references[0].states[0].p.len();
    let masked = model.input_dim() > state_dim;
    let rollouts = map_indexed(Parallelism::default(), references.len(), |i| {
        let reference = &references[i];
        let mask = if masked {
            trajectory_mask(bundle, i).unwrap_or_default()
        } else {
            Vec::new()
        };
        match task {
            TaskKind::DerivativePrediction => {
                let integ = integrator.expect("validated: derivative eval has an integrator");
                if masked {
                    let wrapped = MaskedPredictor::new(model, &mask);
                    let adapter = DerivativeModel::new(&wrapped, nq, np);
                    rollout_derivative(&adapter, integ, reference)
                } else {
                    let adapter = DerivativeModel::new(model, nq, np);
                    rollout_derivative(&adapter, integ, reference)
                }
            }
            TaskKind::StepPrediction => {
                if masked {
                    let wrapped = MaskedPredictor::new(model, &mask);
                    rollout_step(&wrapped, reference)
                } else {
                    rollout_step(model, reference)
                }
            }
        }
    });
    Ok(rollouts)
}

fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn summary_json(summary: &Option<BoxSummary>) -> Value {
    match summary {
        None => Value::Null,
        Some(s) => {
            let mut obj = Map::new();
            obj.insert("count".into(), json!(s.count));
            obj.insert("median".into(), json_f64(s.median));
            obj.insert("q1".into(), json_f64(s.q1));
            obj.insert("q3".into(), json_f64(s.q3));
            obj.insert("whisker_low".into(), json_f64(s.whisker_low));
            obj.insert("whisker_high".into(), json_f64(s.whisker_high));
            obj.insert(
                "outliers".into(),
                Value::Array(s.outliers.iter().map(|o| json_f64(*o)).collect()),
            );
            Value::Object(obj)
        }
    }
}

fn exec_eval(
    payload: &EvalPayload,
    descr: &RunDescription,
    experiment_dir: &Path,
    dir: &Path,
) -> Result<(), RunError> {
    let eval_dir = run_dir(experiment_dir, Phase::DataGen, &payload.eval_dataset).join("dataset");
    let bundle = read_bundle(&eval_dir)?;
    let references = bundle_trajectories(&bundle)?;
    let model = load_eval_model(&payload.source, payload.task, experiment_dir)?;
    let rollouts = compute_rollouts(
        &bundle,
        &references,
        model.predictor(),
        payload.task,
        payload.integrator,
    )?;

    let mut records: BTreeMap<String, NdArray> = BTreeMap::new();
    let mut traj_entries = Vec::with_capacity(rollouts.len());
    let mut mses = Vec::new();
    let mut weighted = Vec::new();
    let mut diverged = 0usize;
    for (i, r) in rollouts.iter().enumerate() {
        let name = bundle.trajectories[i].name.clone();
        let record = format!("{name}_per_step_mse");
        records.insert(
            record.clone(),
            NdArray::f64(vec![r.per_step_mse.len()], r.per_step_mse.clone()),
        );
        let weighted_mse = weighted_trajectory_mse(&r.per_step_mse);
        if r.trajectory_mse.is_finite() {
            mses.push(r.trajectory_mse);
        }
        if weighted_mse.is_finite() {
            weighted.push(weighted_mse);
        }
        if r.diverged_at.is_some() {
            diverged += 1;
        }
        let mut entry = Map::new();
        entry.insert("name".into(), json!(name));
        entry.insert("trajectory_mse".into(), json_f64(r.trajectory_mse));
        entry.insert("weighted_mse".into(), json_f64(weighted_mse));
        entry.insert("diverged_at".into(), match r.diverged_at {
            Some(k) => json!(k),
            None => Value::Null,
        });
        let mut fk = Map::new();
        fk.insert("per_step_mse".into(), json!(record));
        entry.insert("field_keys".into(), Value::Object(fk));
        traj_entries.push(Value::Object(entry));
    }

    let summary = (!mses.is_empty()).then(|| aggregate_report(&mses));
    let weighted_summary = (!weighted.is_empty()).then(|| aggregate_report(&weighted));

    let mut doc = Map::new();
    doc.insert("experiment".into(), json!(descr.experiment));
    doc.insert("run".into(), json!(descr.name));
    doc.insert("task".into(), json!(payload.task.as_str()));
    doc.insert("integrator".into(), match payload.integrator {
        Some(i) => json!(i.as_str()),
        None => Value::Null,
    });
    doc.insert("eval_dataset".into(), json!(payload.eval_dataset));
    doc.insert("trajectory_count".into(), json!(rollouts.len()));
    doc.insert("diverged_count".into(), json!(diverged));
    doc.insert("summary".into(), summary_json(&summary));
    doc.insert("weighted_summary".into(), summary_json(&weighted_summary));
    doc.insert("trajectories".into(), Value::Array(traj_entries));
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    fs::write(dir.join("results.json"), text)?;
    write_npz_file(&dir.join("results.npz"), &records)?;
    Ok(())
}

/// One row of the timing report produced by the `timing` subcommand.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub run: String,
    pub integrator: IntegratorKind,
    pub time_ratio: f64,
    pub modal_scaling: ScalingOutcome,
    pub per_trajectory: Vec<ScalingOutcome>,
}

/// Run the timing/scaling protocol over every complete derivative-prediction
/// evaluation run and write `timing.json` at the experiment root.
pub fn timing(experiment_dir: &Path, max_power: u32) -> Result<Vec<TimingRow>, RunError> {
    let statuses = scan(experiment_dir)?;
    let complete: std::collections::HashSet<(Phase, String)> = statuses
        .into_iter()
        .filter(|s| s.state == RunState::Complete)
        .map(|s| (s.phase, s.name))
        .collect();
    let (descriptions, _) = load_descriptions(experiment_dir, Phase::Eval)?;

    let mut rows = Vec::new();
    for descr in &descriptions {
        if !complete.contains(&(Phase::Eval, descr.name.clone())) {
            continue;
        }
        let Payload::Eval(payload) = &descr.payload else {
            continue;
        };
        if payload.task != TaskKind::DerivativePrediction {
            continue;
        }
        let Some(integrator) = payload.integrator else {
            continue;
        };
        let eval_dir =
            run_dir(experiment_dir, Phase::DataGen, &payload.eval_dataset).join("dataset");
        let bundle = read_bundle(&eval_dir)?;
        // Systems whose ground truth is external have no dynamics to scale.
        let Some(system) = system_from_bundle(&bundle)? else {
            continue;
        };
        let references = bundle_trajectories(&bundle)?;
        let model = load_eval_model(&payload.source, payload.task, experiment_dir)?;
        let rollouts = compute_rollouts(
            &bundle,
            &references,
            model.predictor(),
            payload.task,
            payload.integrator,
        )?;
        let nq = references[0].states[0].q.len();
        let np = references[0].states[0].p.len();
        let state_dim = nq + np;
        let masked = model.predictor().input_dim() > state_dim;
        let mask = if masked {
            trajectory_mask(&bundle, 0).unwrap_or_default()
        } else {
            Vec::new()
        };
        // Cost measurement uses the first trajectory's mask; per-step cost is
        // mask independent.
        let masked_wrap;
        let masked_adapter;
        let plain_adapter;
        let learned_dynamics: &dyn Dynamics = if masked {
            masked_wrap = MaskedPredictor::new(model.predictor(), &mask);
            masked_adapter = DerivativeModel::new(&masked_wrap, nq, np);
            &masked_adapter
        } else {
            plain_adapter = DerivativeModel::new(model.predictor(), nq, np);
            &plain_adapter
        };
        let report = timing_protocol(
            &*system,
            integrator,
            learned_dynamics,
            &references,
            &rollouts,
            max_power,
        );
        rows.push(TimingRow {
            run: descr.name.clone(),
            integrator,
            time_ratio: report.time_ratio,
            modal_scaling: report.modal_scaling,
            per_trajectory: report.per_trajectory,
        });
    }

    let entries: Vec<Value> = rows
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            obj.insert("run".into(), json!(row.run));
            obj.insert("integrator".into(), json!(row.integrator.as_str()));
            obj.insert("time_ratio".into(), json_f64(row.time_ratio));
            obj.insert("scaling".into(), json!(row.modal_scaling.to_string()));
            obj.insert(
                "per_trajectory_scaling".into(),
                Value::Array(
                    row.per_trajectory
                        .iter()
                        .map(|o| json!(o.to_string()))
                        .collect(),
                ),
            );
            Value::Object(obj)
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&Value::Array(entries))?;
    text.push('\n');
    fs::write(experiment_dir.join("timing.json"), text)?;
    Ok(rows)
}
