//! Expansion of an experiment specification into per-run description files:
//! one data_gen description per dataset (all training sizes of a system
//! share one cached initial-condition seed so larger sets are strict
//! supersets), one train description per learner/task/size, and one eval
//! description per fitted model (KNNs get evaluation-time descriptions that
//! reference their training dataset directly).

use super::{
    descr_dir, DataGenPayload, Distribution, EvalModelSource, EvalPayload, LearnerSpec, Payload,
    Phase, RunDescription, RunError, SystemParams, TrainPayload,
};
use crate::integrators::IntegratorKind;
use crate::learners::{TaskKind, TrainConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpecEntry {
    #[serde(flatten)]
    pub params: SystemParams,
    pub train_sizes: Vec<usize>,
    pub eval_size: usize,
    #[serde(default)]
    pub ood_eval_size: usize,
    pub num_time_steps: usize,
    pub time_step_size: f64,
    #[serde(default = "one")]
    pub subsample: usize,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorKind,
}

fn one() -> usize {
    1
}

fn default_integrator() -> IntegratorKind {
    IntegratorKind::Leapfrog
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LearnerEntry {
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "mlp")]
    Mlp {
        depth: usize,
        width: usize,
        epochs: usize,
        #[serde(default)]
        batch_size: Option<usize>,
        #[serde(default)]
        learning_rate: Option<f64>,
        #[serde(default)]
        noise_variance: Option<f64>,
    },
    #[serde(rename = "random-features")]
    RandomFeatures {
        features: usize,
        #[serde(default)]
        lambda: Option<f64>,
    },
}

impl LearnerEntry {
    fn label(&self) -> String {
        match self {
            LearnerEntry::Knn => "knn".to_string(),
            LearnerEntry::Mlp { depth, width, .. } => format!("mlp-{depth}-{width}"),
            LearnerEntry::RandomFeatures { features, .. } => format!("rf-{features}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub seed: u64,
    pub systems: Vec<SystemSpecEntry>,
    #[serde(default)]
    pub learners: Vec<LearnerEntry>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskKind>,
    #[serde(default = "default_integrator")]
    pub eval_integrator: IntegratorKind,
}

fn default_tasks() -> Vec<TaskKind> {
    vec![TaskKind::DerivativePrediction, TaskKind::StepPrediction]
}

/// Stable derived seed for a named role under the experiment master seed.
fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut text = master.to_string();
    for p in parts {
        text.push('/');
        text.push_str(p);
    }
    let hex = super::hex_digest(text.as_bytes());
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

fn sanitize(tag: &str) -> String {
    tag.replace([' ', '/'], "-")
}

/// Expand a spec into run descriptions (deterministic given the spec).
pub fn expand_spec(spec: &ExperimentSpec) -> Result<Vec<RunDescription>, RunError> {
    let mut descriptions = Vec::new();
    let exp = sanitize(&spec.experiment);
    if exp.is_empty() {
        return Err(RunError::Validation("experiment name must be nonempty".into()));
    }

    for entry in &spec.systems {
        let sys = entry.params.system_kind();
        let sys_tag = sanitize(sys.as_str());
        let train_seed = derive_seed(spec.seed, &[&sys_tag, "train"]);
        let eval_seed = derive_seed(spec.seed, &[&sys_tag, "eval"]);
        let ood_seed = derive_seed(spec.seed, &[&sys_tag, "eval-ood"]);

        let data_gen = |name: String, seed, distribution, trajectories| RunDescription {
            phase: Phase::DataGen,
            experiment: spec.experiment.clone(),
            name,
            payload: Payload::DataGen(DataGenPayload {
                seed,
                distribution,
                trajectories,
                num_time_steps: entry.num_time_steps,
                time_step_size: entry.time_step_size,
                subsample: entry.subsample,
                integrator: entry.integrator,
                system_params: entry.params.clone(),
            }),
        };

        let train_set_name = |size: usize| format!("{exp}-{sys_tag}-train-{size:05}");
        // Training sets of every size share one cached source seed, so each
        // larger set is a strict superset of the smaller ones.
        for &size in &entry.train_sizes {
            descriptions.push(data_gen(
                train_set_name(size),
                train_seed,
                Distribution::InDistribution,
                size,
            ));
        }
        let eval_set_name = format!("{exp}-{sys_tag}-eval-{:05}", entry.eval_size);
        descriptions.push(data_gen(
            eval_set_name.clone(),
            eval_seed,
            Distribution::InDistribution,
            entry.eval_size,
        ));
        let ood_set_name = format!("{exp}-{sys_tag}-eval-ood-{:05}", entry.ood_eval_size);
        if entry.ood_eval_size > 0 {
            descriptions.push(data_gen(
                ood_set_name.clone(),
                ood_seed,
                Distribution::OutOfDistribution,
                entry.ood_eval_size,
            ));
        }

        for learner in &spec.learners {
            let label = learner.label();
            for &task in &spec.tasks {
                let task_tag = task.as_str();
                let integrator = match task {
                    TaskKind::DerivativePrediction => Some(spec.eval_integrator),
                    TaskKind::StepPrediction => None,
                };
                for &size in &entry.train_sizes {
                    let source = match learner {
                        LearnerEntry::Knn => EvalModelSource::Knn {
                            train_dataset: train_set_name(size),
                        },
                        LearnerEntry::Mlp {
                            depth,
                            width,
                            epochs,
                            batch_size,
                            learning_rate,
                            noise_variance,
                        } => {
                            let train_name =
                                format!("{exp}-{sys_tag}-{label}-{task_tag}-{size:05}");
                            let mut config =
                                TrainConfig::new(*epochs, derive_seed(spec.seed, &[&train_name]));
                            if let Some(b) = batch_size {
                                config.batch_size = *b;
                            }
                            if let Some(lr) = learning_rate {
                                config.learning_rate = *lr;
                            }
                            match noise_variance {
                                Some(v) => config.noise_variance = *v,
                                // Noise injection is a Navier-Stokes default.
                                None if sys == crate::systems::SystemKind::NavierStokes => {
                                    config.noise_variance = 1e-3
                                }
                                None => {}
                            }
                            descriptions.push(RunDescription {
                                phase: Phase::Train,
                                experiment: spec.experiment.clone(),
                                name: train_name.clone(),
                                payload: Payload::Train(TrainPayload {
                                    learner: LearnerSpec::Mlp {
                                        depth: *depth,
                                        width: *width,
                                    },
                                    task,
                                    train_dataset: train_set_name(size),
                                    config,
                                }),
                            });
                            EvalModelSource::Train { run: train_name }
                        }
                        LearnerEntry::RandomFeatures { features, lambda } => {
                            let train_name =
                                format!("{exp}-{sys_tag}-{label}-{task_tag}-{size:05}");
                            let config =
                                TrainConfig::new(0, derive_seed(spec.seed, &[&train_name]));
                            descriptions.push(RunDescription {
                                phase: Phase::Train,
                                experiment: spec.experiment.clone(),
                                name: train_name.clone(),
                                payload: Payload::Train(TrainPayload {
                                    learner: LearnerSpec::RandomFeatures {
                                        features: *features,
                                        lambda: *lambda,
                                    },
                                    task,
                                    train_dataset: train_set_name(size),
                                    config,
                                }),
                            });
                            EvalModelSource::Train { run: train_name }
                        }
                    };
                    descriptions.push(RunDescription {
                        phase: Phase::Eval,
                        experiment: spec.experiment.clone(),
                        name: format!("{exp}-{sys_tag}-eval-{label}-{task_tag}-{size:05}"),
                        payload: Payload::Eval(EvalPayload {
                            task,
                            source: source.clone(),
                            eval_dataset: eval_set_name.clone(),
                            integrator,
                        }),
                    });
                    // Out-of-distribution evaluation only for the largest
                    // training set.
                    if entry.ood_eval_size > 0 && Some(&size) == entry.train_sizes.iter().max() {
                        descriptions.push(RunDescription {
                            phase: Phase::Eval,
                            experiment: spec.experiment.clone(),
                            name: format!(
                                "{exp}-{sys_tag}-eval-ood-{label}-{task_tag}-{size:05}"
                            ),
                            payload: Payload::Eval(EvalPayload {
                                task,
                                source: source.clone(),
                                eval_dataset: ood_set_name.clone(),
                                integrator,
                            }),
                        });
                    }
                }
            }
        }
    }

    let mut seen: BTreeSet<(Phase, &str)> = BTreeSet::new();
    for d in &descriptions {
        d.validate()?;
        if !seen.insert((d.phase, d.name.as_str())) {
            return Err(RunError::Validation(format!(
                "duplicate run name {:?} in phase {}",
                d.name, d.phase
            )));
        }
    }
    Ok(descriptions)
}

/// Expand a spec and write one JSON description per run under
/// `<dir>/descr/<phase>/`.
pub fn generate_descriptions(
    spec: &ExperimentSpec,
    experiment_dir: &Path,
) -> Result<Vec<RunDescription>, RunError> {
    let descriptions = expand_spec(spec)?;
    for phase in Phase::ALL {
        fs::create_dir_all(descr_dir(experiment_dir, phase))?;
    }
    for d in &descriptions {
        let path = descr_dir(experiment_dir, d.phase).join(format!("{}.json", d.name));
        let mut text = serde_json::to_string_pretty(d)?;
        text.push('\n');
        fs::write(path, text)?;
    }
    Ok(descriptions)
}

/// Load every description of one phase, sorted by run name. Unreadable
/// files are returned separately as `(file name, error)`.
pub fn load_descriptions(
    experiment_dir: &Path,
    phase: Phase,
) -> Result<(Vec<RunDescription>, Vec<(String, String)>), RunError> {
    let dir = descr_dir(experiment_dir, phase);
    let mut descriptions = Vec::new();
    let mut malformed = Vec::new();
    if !dir.exists() {
        return Ok((descriptions, malformed));
    }
    let mut paths: Vec<_> = fs::read_dir(&dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let file_name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                malformed.push((file_name, e.to_string()));
                continue;
            }
        };
        match serde_json::from_str::<RunDescription>(&text) {
            Ok(d) if d.phase == phase => descriptions.push(d),
            Ok(d) => malformed.push((
                file_name,
                format!("description phase {} does not match directory", d.phase),
            )),
            Err(e) => malformed.push((file_name, e.to_string())),
        }
    }
    Ok((descriptions, malformed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_spec() -> ExperimentSpec {
        ExperimentSpec {
            experiment: "demo".into(),
            seed: 99,
            systems: vec![SystemSpecEntry {
                params: SystemParams::Spring {},
                train_sizes: vec![10, 500, 1000],
                eval_size: 30,
                ood_eval_size: 5,
                num_time_steps: 20,
                time_step_size: 0.1,
                subsample: 2,
                integrator: IntegratorKind::Leapfrog,
            }],
            learners: vec![
                LearnerEntry::Knn,
                LearnerEntry::Mlp {
                    depth: 3,
                    width: 16,
                    epochs: 5,
                    batch_size: None,
                    learning_rate: None,
                    noise_variance: None,
                },
            ],
            tasks: vec![TaskKind::DerivativePrediction],
            eval_integrator: IntegratorKind::Leapfrog,
        }
    }

    #[test]
    fn table_row_expansion_shares_the_ic_seed() {
        let descriptions = expand_spec(&demo_spec()).unwrap();
        let data_gen: Vec<_> = descriptions
            .iter()
            .filter(|d| d.phase == Phase::DataGen)
            .collect();
        // Three training sizes plus in-distribution and OOD eval sets.
        assert_eq!(data_gen.len(), 5);
        let seeds: Vec<u64> = data_gen
            .iter()
            .filter(|d| d.name.contains("-train-"))
            .map(|d| match &d.payload {
                Payload::DataGen(p) => p.seed,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seeds.len(), 3);
        assert!(seeds.windows(2).all(|w| w[0] == w[1]), "shared source seed");
        // Eval sets draw from different seeds.
        let eval_seed = data_gen
            .iter()
            .find(|d| d.name.contains("-eval-00030"))
            .map(|d| match &d.payload {
                Payload::DataGen(p) => p.seed,
                _ => unreachable!(),
            })
            .unwrap();
        assert_ne!(eval_seed, seeds[0]);
    }

    #[test]
    fn knn_evals_reference_their_training_dataset() {
        let descriptions = expand_spec(&demo_spec()).unwrap();
        let knn_evals: Vec<_> = descriptions
            .iter()
            .filter(|d| d.phase == Phase::Eval && d.name.contains("-knn-"))
            .collect();
        assert_eq!(knn_evals.len(), 4, "3 sizes + 1 ood for the largest");
        for d in knn_evals {
            match &d.payload {
                Payload::Eval(e) => match &e.source {
                    EvalModelSource::Knn { train_dataset } => {
                        assert!(train_dataset.contains("-train-"))
                    }
                    _ => panic!("knn eval must carry its training set"),
                },
                _ => unreachable!(),
            }
        }
        // No training phase for KNNs.
        assert!(!descriptions
            .iter()
            .any(|d| d.phase == Phase::Train && d.name.contains("knn")));
    }

    #[test]
    fn empty_spec_produces_no_descriptions() {
        let spec = ExperimentSpec {
            experiment: "empty".into(),
            seed: 1,
            systems: vec![],
            learners: vec![],
            tasks: vec![],
            eval_integrator: IntegratorKind::Leapfrog,
        };
        assert!(expand_spec(&spec).unwrap().is_empty());
    }

    #[test]
    fn generation_is_deterministic_and_loadable() {
        let spec = demo_spec();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        generate_descriptions(&spec, dir1.path()).unwrap();
        generate_descriptions(&spec, dir2.path()).unwrap();
        for phase in Phase::ALL {
            let d1 = descr_dir(dir1.path(), phase);
            let mut names: Vec<_> = std::fs::read_dir(&d1)
                .unwrap()
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            for name in names {
                let a = std::fs::read(d1.join(&name)).unwrap();
                let b = std::fs::read(descr_dir(dir2.path(), phase).join(&name)).unwrap();
                assert_eq!(a, b, "{name:?} must be byte-identical across generations");
            }
            let (loaded, malformed) = load_descriptions(dir1.path(), phase).unwrap();
            assert!(malformed.is_empty());
            for d in loaded {
                d.validate().unwrap();
            }
        }
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut spec = demo_spec();
        spec.systems.push(spec.systems[0].clone());
        assert!(matches!(
            expand_spec(&spec),
            Err(RunError::Validation(msg)) if msg.contains("duplicate")
        ));
    }

    #[test]
    fn mlp_on_navier_stokes_defaults_to_noise_injection() {
        let spec = ExperimentSpec {
            experiment: "ns".into(),
            seed: 3,
            systems: vec![SystemSpecEntry {
                params: SystemParams::NavierStokes {
                    obstacle_count: 1,
                    viscosity: 0.001,
                    in_velocity: 1.5,
                    grid_resolution: 0.01,
                    solver_outputs: None,
                },
                train_sizes: vec![2],
                eval_size: 1,
                ood_eval_size: 0,
                num_time_steps: 5,
                time_step_size: 0.08,
                subsample: 1,
                integrator: IntegratorKind::Leapfrog,
            }],
            learners: vec![LearnerEntry::Mlp {
                depth: 2,
                width: 8,
                epochs: 1,
                batch_size: None,
                learning_rate: None,
                noise_variance: None,
            }],
            tasks: vec![TaskKind::StepPrediction],
            eval_integrator: IntegratorKind::Leapfrog,
        };
        let descriptions = expand_spec(&spec).unwrap();
        let train = descriptions
            .iter()
            .find(|d| d.phase == Phase::Train)
            .unwrap();
        match &train.payload {
            Payload::Train(t) => assert_eq!(t.config.noise_variance, 1e-3),
            _ => unreachable!(),
        }
    }
}
