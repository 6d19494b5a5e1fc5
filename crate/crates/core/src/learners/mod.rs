//! Baseline predictors for the two learning problems: nearest-neighbor
//! lookup, random-feature kernel ridge regression, and a from-scratch MLP
//! trained with Adam. All learners operate on packed state vectors; the
//! adapters at the bottom connect fitted models back to the integrators
//! (derivative prediction) or to recurrent stepping (step prediction).

mod checkpoint;
mod knn;
mod mlp;
mod rf;

pub use checkpoint::{load_model, save_model, TrainedModel, MODEL_META_FILE, MODEL_PARAMS_FILE};
pub use knn::KnnModel;
pub use mlp::{
    mlp_gradient_vector, mlp_train, AdamOptimizer, AdamParams, MlpGradients, MlpModel,
    OptimizerKind, TrainConfig, NAMED_ARCHITECTURES,
};
pub use rf::{default_ridge_lambda, RandomFeatureModel, RfSgdConfig};

use crate::domain::{unpack_state, PhaseState, StateDerivative, Trajectory};
use crate::linalg::{LinalgError, Mat};
use crate::systems::{Dynamics, SystemError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("normal equations are ill-conditioned ({0}); increase the ridge lambda")]
    IllConditioned(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// The two learning problems: approximating the right-hand side `f` (rolled
/// out through an integrator) or the discrete step map `x_k -> x_{k+1}`
/// (rolled out recurrently).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "derivative")]
    DerivativePrediction,
    #[serde(rename = "step")]
    StepPrediction,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::DerivativePrediction => "derivative",
            TaskKind::StepPrediction => "step",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "derivative" => Some(TaskKind::DerivativePrediction),
            "step" => Some(TaskKind::StepPrediction),
            _ => None,
        }
    }
}

/// A fitted model mapping packed inputs to packed outputs.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Vec<f64>;
}

/// Supervised pairs assembled from trajectories. `state_dim` is the width of
/// the packed state; inputs may carry extra mask columns beyond it.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Mat,
    pub targets: Mat,
    pub state_dim: usize,
}

/// Build training pairs. Derivative prediction pairs every stored snapshot
/// with its stored derivative; step prediction pairs each snapshot with its
/// successor, dropping the final snapshot of every trajectory.
pub fn training_pairs(trajs: &[Trajectory], task: TaskKind) -> Result<TrainingSet, LearnerError> {
    training_pairs_with_mask(trajs, task, None)
}

/// Same as [`training_pairs`], optionally appending a per-point fixed mask
/// (as 0/1 columns) to every input row.
pub fn training_pairs_with_mask(
    trajs: &[Trajectory],
    task: TaskKind,
    mask: Option<&[bool]>,
) -> Result<TrainingSet, LearnerError> {
    let first = trajs
        .iter()
        .find(|t| !t.is_empty())
        .ok_or(LearnerError::EmptyTrainingSet)?;
    let state_dim = first.states[0].dim();
    let mask_cols: Vec<f64> = mask
        .map(|m| m.iter().map(|b| f64::from(u8::from(*b))).collect())
        .unwrap_or_default();
    let input_dim = state_dim + mask_cols.len();

    let sample_count: usize = trajs
        .iter()
        .map(|t| match task {
            TaskKind::DerivativePrediction => t.len(),
            TaskKind::StepPrediction => t.len().saturating_sub(1),
        })
        .sum();
    if sample_count == 0 {
        return Err(LearnerError::EmptyTrainingSet);
    }

    let mut inputs = Mat::zeros(sample_count, input_dim);
    let mut targets = Mat::zeros(sample_count, state_dim);
    let mut row = 0;
    for traj in trajs {
        let last = match task {
            TaskKind::DerivativePrediction => traj.len(),
            TaskKind::StepPrediction => traj.len().saturating_sub(1),
        };
        for k in 0..last {
            let state = traj.packed_state(k);
            if state.len() != state_dim {
                return Err(LearnerError::Dimension {
                    expected: state_dim,
                    got: state.len(),
                });
            }
            let target = match task {
                TaskKind::DerivativePrediction => traj.packed_derivative(k),
                TaskKind::StepPrediction => traj.packed_state(k + 1),
            };
            let irow = inputs.row_mut(row);
            irow[..state_dim].copy_from_slice(&state);
            irow[state_dim..].copy_from_slice(&mask_cols);
            targets.row_mut(row).copy_from_slice(&target);
            row += 1;
        }
    }
    Ok(TrainingSet {
        inputs,
        targets,
        state_dim,
    })
}

/// Wrap a predictor so that a fixed mask vector is appended to every query,
/// matching training inputs that carried mask columns.
pub struct MaskedPredictor<'a, P: Predictor + ?Sized> {
    inner: &'a P,
    mask: Vec<f64>,
}

impl<'a, P: Predictor + ?Sized> MaskedPredictor<'a, P> {
    pub fn new(inner: &'a P, mask: &[bool]) -> Self {
        Self {
            inner,
            mask: mask.iter().map(|b| f64::from(u8::from(*b))).collect(),
        }
    }
}

impl<P: Predictor + ?Sized> Predictor for MaskedPredictor<'_, P> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim() - self.mask.len()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(x.len() + self.mask.len());
        full.extend_from_slice(x);
        full.extend_from_slice(&self.mask);
        self.inner.predict(&full)
    }
}

/// Adapter exposing a derivative-prediction model as a dynamical system, so
/// the standard integrators can roll it out.
pub struct DerivativeModel<'a, P: Predictor + ?Sized> {
    model: &'a P,
    nq: usize,
    np: usize,
}

impl<'a, P: Predictor + ?Sized> DerivativeModel<'a, P> {
    pub fn new(model: &'a P, nq: usize, np: usize) -> Self {
        debug_assert_eq!(model.input_dim(), nq + np);
        debug_assert_eq!(model.output_dim(), nq + np);
        Self { model, nq, np }
    }
}

impl<P: Predictor + ?Sized> Dynamics for DerivativeModel<'_, P> {
    fn dim_q(&self) -> usize {
        self.nq
    }

    fn dim_p(&self) -> usize {
        self.np
    }

    fn derivative(&self, state: &PhaseState) -> Result<StateDerivative, SystemError> {
        self.check_dim(state)?;
        let mut packed = Vec::with_capacity(state.dim());
        packed.extend_from_slice(&state.q);
        packed.extend_from_slice(&state.p);
        let out = self.model.predict(&packed);
        let d = unpack_state(&out, self.nq).map_err(|_| SystemError::Dimension {
            expected: self.dim(),
            got: out.len(),
        })?;
        Ok(StateDerivative::new(d.q, d.p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;
    use crate::integrators::{integrate, IntegratorKind};
    use crate::systems::SpringSystem;

    fn spring_traj(count: usize) -> Trajectory {
        let grid = TimeGrid::new(0.1, count, 1).unwrap();
        let x0 = PhaseState::new(vec![0.3], vec![0.8]);
        integrate(&SpringSystem, IntegratorKind::Leapfrog, &x0, &grid).unwrap()
    }

    #[test]
    fn derivative_pairs_use_all_snapshots() {
        let traj = spring_traj(5);
        let set = training_pairs(&[traj.clone()], TaskKind::DerivativePrediction).unwrap();
        assert_eq!(set.inputs.rows(), 5);
        assert_eq!(set.inputs.row(2), traj.packed_state(2).as_slice());
        assert_eq!(set.targets.row(2), traj.packed_derivative(2).as_slice());
    }

    #[test]
    fn step_pairs_drop_final_snapshot() {
        let traj = spring_traj(5);
        let set = training_pairs(&[traj.clone()], TaskKind::StepPrediction).unwrap();
        assert_eq!(set.inputs.rows(), 4);
        assert_eq!(set.targets.row(3), traj.packed_state(4).as_slice());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(
            training_pairs(&[], TaskKind::DerivativePrediction),
            Err(LearnerError::EmptyTrainingSet)
        ));
        let traj = spring_traj(1);
        assert!(matches!(
            training_pairs(&[traj], TaskKind::StepPrediction),
            Err(LearnerError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn mask_columns_are_appended() {
        let traj = spring_traj(3);
        let set =
            training_pairs_with_mask(&[traj], TaskKind::DerivativePrediction, Some(&[true, false]))
                .unwrap();
        assert_eq!(set.inputs.cols(), 4);
        assert_eq!(set.state_dim, 2);
        assert_eq!(&set.inputs.row(0)[2..], &[1.0, 0.0]);
    }
}
