//! Rollout generation from learned models and the error metrics: per-step
//! MSE against a reference trajectory, trajectory MSE (their mean), the
//! exponentially weighted variant, and box-plot aggregation.
//!
//! Per-step errors cover the predicted snapshots (one entry per step taken,
//! so a rollout of `count` snapshots has `count - 1` entries). A rollout
//! counts as diverged when a state goes non-finite or its norm exceeds
//! `1e6` times the initial norm; errors past that point are discarded.

mod stats;
mod timing;

pub use stats::{aggregate_report, quantile, BoxSummary};
pub use timing::{
    measure_time_ratio, scaling_power, timing_protocol, ScalingOutcome, TimingReport,
};

use crate::domain::{pack_state, unpack_state, PhaseState, StateDerivative, TimeGrid, Trajectory};
use crate::integrators::{ImplicitSolveConfig, IntegratorKind, Stepper};
use crate::learners::Predictor;
use crate::par::{map_indexed, Parallelism};
use crate::systems::Dynamics;

const DIVERGENCE_NORM_FACTOR: f64 = 1e6;

/// One learned rollout compared against its reference trajectory.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub predicted: Trajectory,
    pub reference: Trajectory,
    pub per_step_mse: Vec<f64>,
    pub trajectory_mse: f64,
    pub diverged_at: Option<usize>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn state_mse(a: &PhaseState, b: &PhaseState) -> f64 {
    let dim = a.dim();
    debug_assert_eq!(dim, b.dim());
    let mut acc = 0.0;
    for (x, y) in a.q.iter().zip(&b.q) {
        let d = x - y;
        acc += d * d;
    }
    for (x, y) in a.p.iter().zip(&b.p) {
        let d = x - y;
        acc += d * d;
    }
    acc / dim as f64
}

fn finish(reference: &Trajectory, grid: TimeGrid, states: Vec<PhaseState>, derivatives: Vec<StateDerivative>, diverged_at: Option<usize>) -> RolloutResult {
    let shared = states.len().min(reference.len());
    let per_step_mse: Vec<f64> = (1..shared)
        .map(|k| state_mse(&states[k], &reference.states[k]))
        .collect();
    let trajectory_mse = if per_step_mse.is_empty() {
        f64::NAN
    } else {
        per_step_mse.iter().sum::<f64>() / per_step_mse.len() as f64
    };
    let predicted_grid = TimeGrid {
        step: grid.step,
        count: states.len(),
        subsample: 1,
    };
    RolloutResult {
        predicted: Trajectory {
            grid: predicted_grid,
            states,
            derivatives,
            gen_time_seconds: 0.0,
        },
        reference: reference.clone(),
        per_step_mse,
        trajectory_mse,
        diverged_at,
    }
}

/// Roll a derivative-prediction model out with a numerical integrator at the
/// reference's stored stride, starting from the reference's initial state.
/// With the exact system derivative as the model this reproduces the
/// baseline integrator trajectory bit for bit.
pub fn rollout_derivative(
    model: &dyn Dynamics,
    integrator: IntegratorKind,
    reference: &Trajectory,
) -> RolloutResult {
    let grid = TimeGrid {
        step: reference.grid.step,
        count: reference.len(),
        subsample: 1,
    };
    let x0 = &reference.states[0];
    let initial_norm = {
        let n = x0.norm();
        if n > 0.0 {
            n
        } else {
            1.0
        }
    };
    let limit = DIVERGENCE_NORM_FACTOR * initial_norm;

    let mut states = Vec::with_capacity(grid.count);
    let mut derivatives = Vec::with_capacity(grid.count);
    let mut diverged_at = None;
    match model.derivative(x0) {
        Ok(d) if d.is_finite() => {
            states.push(x0.clone());
            derivatives.push(d);
        }
        _ => {
            return finish(reference, grid, states, derivatives, Some(0));
        }
    }
    let stepper = Stepper::new(model, integrator, grid.step, ImplicitSolveConfig::default());
    let mut stepper = match stepper {
        Ok(s) => s,
        Err(_) => return finish(reference, grid, states, derivatives, Some(0)),
    };
    let mut x = pack_state(x0);
    for k in 1..grid.count {
        let next = match stepper.step(&x) {
            Ok(v) => v,
            Err(_) => {
                diverged_at = Some(k);
                break;
            }
        };
        if !next.iter().all(|v| v.is_finite()) || norm(&next) > limit {
            diverged_at = Some(k);
            break;
        }
        let state = unpack_state(&next, model.dim_q()).expect("stepper preserves dimension");
        match model.derivative(&state) {
            Ok(d) if d.is_finite() => derivatives.push(d),
            _ => {
                diverged_at = Some(k);
                break;
            }
        }
        states.push(state);
        x = next;
    }
    finish(reference, grid, states, derivatives, diverged_at)
}

/// Roll a step-prediction model out recurrently: `x_{k+1} = model(x_k)`.
/// The predicted trajectory's derivative channel is zero (step models carry
/// no derivative information).
pub fn rollout_step(model: &dyn Predictor, reference: &Trajectory) -> RolloutResult {
    let grid = TimeGrid {
        step: reference.grid.step,
        count: reference.len(),
        subsample: 1,
    };
    let x0 = &reference.states[0];
    let nq = x0.q.len();
    let np = x0.p.len();
    let initial_norm = {
        let n = x0.norm();
        if n > 0.0 {
            n
        } else {
            1.0
        }
    };
    let limit = DIVERGENCE_NORM_FACTOR * initial_norm;

    let mut states = vec![x0.clone()];
    let mut derivatives = vec![StateDerivative::zeros(nq, np)];
    let mut diverged_at = None;
    let mut x = pack_state(x0);
    for k in 1..grid.count {
        let next = model.predict(&x);
        if next.len() != x.len() || !next.iter().all(|v| v.is_finite()) || norm(&next) > limit {
            diverged_at = Some(k);
            break;
        }
        states.push(unpack_state(&next, nq).expect("length checked"));
        derivatives.push(StateDerivative::zeros(nq, np));
        x = next;
    }
    finish(reference, grid, states, derivatives, diverged_at)
}

/// Batch rollouts over an evaluation set.
pub fn evaluate_derivative_rollouts(
    model: &dyn Dynamics,
    integrator: IntegratorKind,
    references: &[Trajectory],
    par: Parallelism,
) -> Vec<RolloutResult> {
    map_indexed(par, references.len(), |i| {
        rollout_derivative(model, integrator, &references[i])
    })
}

pub fn evaluate_step_rollouts(
    model: &dyn Predictor,
    references: &[Trajectory],
    par: Parallelism,
) -> Vec<RolloutResult> {
    map_indexed(par, references.len(), |i| rollout_step(model, &references[i]))
}

/// Exponentially weighted trajectory error: step `k` of `K - 1` gets weight
/// `0.01^(k / (K - 1))`, so the final step contributes two orders of
/// magnitude less than the first; returns the mean of the weighted errors.
pub fn weighted_trajectory_mse(per_step_mse: &[f64]) -> f64 {
    if per_step_mse.is_empty() {
        return f64::NAN;
    }
    let k_max = per_step_mse.len() - 1;
    let mut acc = 0.0;
    for (k, mse) in per_step_mse.iter().enumerate() {
        acc += step_weight(k, k_max) * mse;
    }
    acc / per_step_mse.len() as f64
}

/// Weight of proportional time `p_t = k / k_max`, i.e.
/// `1 / exp(ln(100) p_t) = 0.01^(p_t)`.
pub fn step_weight(k: usize, k_max: usize) -> f64 {
    if k_max == 0 {
        return 1.0;
    }
    let p_t = k as f64 / k_max as f64;
    0.01f64.powf(p_t)
}
