//! Model checkpoints: a self-describing `model_meta.json` plus a
//! `params.npz` archive reusing the dataset array format. Checkpoints record
//! the architecture, the training seed, and every parameter.

use super::{LearnerError, MlpModel, Predictor, RandomFeatureModel, TaskKind};
use crate::dataset::{read_npz_file, write_npz_file, NdArray};
use crate::linalg::Mat;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const MODEL_META_FILE: &str = "model_meta.json";
pub const MODEL_PARAMS_FILE: &str = "params.npz";

/// A trained predictor that can be checkpointed and reloaded.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Mlp(MlpModel),
    RandomFeatures(RandomFeatureModel),
}

impl Predictor for TrainedModel {
    fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Mlp(m) => m.input_dim(),
            TrainedModel::RandomFeatures(m) => m.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            TrainedModel::Mlp(m) => m.output_dim(),
            TrainedModel::RandomFeatures(m) => m.output_dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TrainedModel::Mlp(m) => m.predict(x),
            TrainedModel::RandomFeatures(m) => m.predict(x),
        }
    }
}

fn err(msg: impl Into<String>) -> LearnerError {
    LearnerError::Checkpoint(msg.into())
}

/// Write `model_meta.json` and `params.npz` into `dir`.
pub fn save_model(
    dir: &Path,
    model: &TrainedModel,
    task: TaskKind,
    seed: u64,
) -> Result<(), LearnerError> {
    fs::create_dir_all(dir).map_err(|e| err(format!("create {dir:?}: {e}")))?;
    let mut meta = Map::new();
    let mut records: BTreeMap<String, NdArray> = BTreeMap::new();
    match model {
        TrainedModel::Mlp(m) => {
            meta.insert("kind".into(), json!("mlp"));
            meta.insert("task".into(), json!(task.as_str()));
            meta.insert("seed".into(), json!(seed));
            meta.insert("dims".into(), json!(m.dims()));
            for l in 0..m.depth() {
                let (w, b) = m.layer(l);
                records.insert(
                    format!("w{l}"),
                    NdArray::f64(vec![w.rows(), w.cols()], w.data().to_vec()),
                );
                records.insert(format!("b{l}"), NdArray::f64(vec![b.len()], b.to_vec()));
            }
        }
        TrainedModel::RandomFeatures(m) => {
            meta.insert("kind".into(), json!("random-features"));
            meta.insert("task".into(), json!(task.as_str()));
            meta.insert("seed".into(), json!(seed));
            meta.insert("feature_count".into(), json!(m.feature_count));
            meta.insert("input_dim".into(), json!(m.input_dim()));
            meta.insert("lambda".into(), match m.fitted_lambda() {
                Some(l) => json!(l),
                None => Value::Null,
            });
            let z = m.projection();
            records.insert(
                "projection".to_string(),
                NdArray::f64(vec![z.rows(), z.cols()], z.data().to_vec()),
            );
            if let Some(w) = m.weights() {
                records.insert(
                    "weights".to_string(),
                    NdArray::f64(vec![w.rows(), w.cols()], w.data().to_vec()),
                );
            }
        }
    }
    let mut text =
        serde_json::to_string_pretty(&Value::Object(meta)).map_err(|e| err(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join(MODEL_META_FILE), text).map_err(|e| err(e.to_string()))?;
    write_npz_file(&dir.join(MODEL_PARAMS_FILE), &records).map_err(|e| err(e.to_string()))
}

/// Load a checkpoint written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<(TrainedModel, TaskKind, u64), LearnerError> {
    let text = fs::read_to_string(dir.join(MODEL_META_FILE))
        .map_err(|e| err(format!("read {MODEL_META_FILE}: {e}")))?;
    let meta: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let kind = meta
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| err("meta missing kind"))?;
    let task = meta
        .get("task")
        .and_then(Value::as_str)
        .and_then(TaskKind::parse)
        .ok_or_else(|| err("meta missing task"))?;
    let seed = meta
        .get("seed")
        .and_then(Value::as_u64)
        .ok_or_else(|| err("meta missing seed"))?;
    let records =
        read_npz_file(&dir.join(MODEL_PARAMS_FILE)).map_err(|e| err(e.to_string()))?;

    let fetch_f64 = |name: &str| -> Result<(&Vec<usize>, &Vec<f64>), LearnerError> {
        match records.get(name) {
            Some(NdArray::F64 { shape, data }) => Ok((shape, data)),
            Some(_) => Err(err(format!("record {name} must be float64"))),
            None => Err(err(format!("missing record {name}"))),
        }
    };

    let model = match kind {
        "mlp" => {
            let dims: Vec<usize> = meta
                .get("dims")
                .and_then(Value::as_array)
                .ok_or_else(|| err("mlp meta missing dims"))?
                .iter()
                .map(|v| v.as_u64().map(|u| u as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| err("malformed dims"))?;
            let mut m = MlpModel::from_dims(dims.clone(), seed);
            for l in 0..dims.len() - 1 {
                let (wshape, wdata) = fetch_f64(&format!("w{l}"))?;
                if wshape != &vec![dims[l + 1], dims[l]] {
                    return Err(err(format!("w{l} has unexpected shape {wshape:?}")));
                }
                let (bshape, bdata) = fetch_f64(&format!("b{l}"))?;
                if bshape != &vec![dims[l + 1]] {
                    return Err(err(format!("b{l} has unexpected shape {bshape:?}")));
                }
                m.set_layer(
                    l,
                    Mat::from_vec(dims[l + 1], dims[l], wdata.clone()),
                    bdata.clone(),
                );
            }
            TrainedModel::Mlp(m)
        }
        "random-features" => {
            let (zshape, zdata) = fetch_f64("projection")?;
            if zshape.len() != 2 {
                return Err(err("projection must be 2-d"));
            }
            let projection = Mat::from_vec(zshape[0], zshape[1], zdata.clone());
            let weights = match records.get("weights") {
                Some(NdArray::F64 { shape, data }) if shape.len() == 2 => {
                    Some(Mat::from_vec(shape[0], shape[1], data.clone()))
                }
                Some(_) => return Err(err("weights must be a 2-d float64 record")),
                None => None,
            };
            let lambda = meta.get("lambda").and_then(Value::as_f64);
            TrainedModel::RandomFeatures(RandomFeatureModel::from_parts(
                projection, weights, seed, lambda,
            ))
        }
        other => return Err(err(format!("unknown model kind {other:?}"))),
    };
    Ok((model, task, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{mlp_train, TrainConfig, TrainingSet};
    use crate::sampling::child_rng;
    use rand::Rng;

    #[test]
    fn mlp_checkpoint_round_trips() {
        let mut rng = child_rng(1, 0);
        let n = 32;
        let inputs = Mat::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let targets = Mat::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let data = TrainingSet {
            inputs,
            targets,
            state_dim: 2,
        };
        let mut model = MlpModel::new(2, 2, 3, 8, 77);
        mlp_train(&mut model, &data, TaskKind::StepPrediction, &TrainConfig::new(3, 77)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_model(
            dir.path(),
            &TrainedModel::Mlp(model.clone()),
            TaskKind::StepPrediction,
            77,
        )
        .unwrap();
        let (loaded, task, seed) = load_model(dir.path()).unwrap();
        assert_eq!(task, TaskKind::StepPrediction);
        assert_eq!(seed, 77);
        match &loaded {
            TrainedModel::Mlp(m) => assert_eq!(m.params_flat(), model.params_flat()),
            _ => panic!("wrong kind"),
        }
        let x = [0.3, -0.8];
        assert_eq!(loaded.predict(&x), model.predict(&x));
    }

    #[test]
    fn rf_checkpoint_round_trips() {
        let mut rng = child_rng(2, 0);
        let n = 64;
        let inputs = Mat::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let targets = Mat::from_fn(n, 1, |i, _| inputs.get(i, 0) * 0.5);
        let mut model = RandomFeatureModel::new(2, 32, 5);
        model.fit(&inputs, &targets, 1e-8).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_model(
            dir.path(),
            &TrainedModel::RandomFeatures(model.clone()),
            TaskKind::DerivativePrediction,
            5,
        )
        .unwrap();
        let (loaded, task, _) = load_model(dir.path()).unwrap();
        assert_eq!(task, TaskKind::DerivativePrediction);
        let x = [0.4, 0.1];
        assert_eq!(loaded.predict(&x), model.predict(&x));
        match &loaded {
            TrainedModel::RandomFeatures(m) => {
                assert_eq!(m.fitted_lambda(), Some(1e-8));
                assert_eq!(m.projection(), model.projection());
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_model(dir.path()),
            Err(LearnerError::Checkpoint(_))
        ));
    }
}
