//! Timing and scaling protocol: run the baseline integrator at time steps
//! scaled by powers of two and report, per trajectory, the smallest scaling
//! at which the integrator's error at the final shared time step exceeds the
//! learned method's error there, plus the per-step cost ratio between the
//! learned model and the integrator.

use super::RolloutResult;
use crate::domain::{pack_state, Trajectory};
use crate::integrators::{ImplicitSolveConfig, IntegratorKind, Stepper};
use crate::systems::{eval_packed, Dynamics};
use std::time::Instant;

/// Per-trajectory outcome: the crossing scaling factor `2^power`, or a
/// sentinel when no crossing occurred within the probed powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalingOutcome {
    /// The integrator first underperformed the learned method at `2^power`.
    Power(u32),
    /// No crossing up to `2^power`: reported as `>= 2^power`.
    AtLeast(u32),
}

impl ScalingOutcome {
    pub fn factor(&self) -> u64 {
        match self {
            ScalingOutcome::Power(p) | ScalingOutcome::AtLeast(p) => 1u64 << p,
        }
    }
}

impl std::fmt::Display for ScalingOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalingOutcome::Power(p) => write!(f, "{}x", 1u64 << p),
            ScalingOutcome::AtLeast(p) => write!(f, ">={}x", 1u64 << p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimingReport {
    pub per_trajectory: Vec<ScalingOutcome>,
    /// The most common per-trajectory outcome (ties break to the smallest).
    pub modal_scaling: ScalingOutcome,
    /// Median learned per-step cost over median integrator per-step cost.
    pub time_ratio: f64,
}

/// Pure crossing rule on an error curve: `integrator_errors[j]` is the
/// integrator's error at scaling `2^j`, and the result is the smallest
/// scaling at which that error exceeds the learned method's error.
///
/// Consequences: an exactly-zero learned error is unbeatable, so the
/// integrator cannot be sped up at all (scaling 1); a diverged learned
/// method (infinite error) is never exceeded, so the integrator wins at
/// every tested speedup (sentinel). Scaling grows with the learned error.
pub fn scaling_power(learned_error: f64, integrator_errors: &[f64]) -> ScalingOutcome {
    let max_power = integrator_errors.len().saturating_sub(1) as u32;
    match integrator_errors
        .iter()
        .position(|e| *e > learned_error)
    {
        Some(j) => ScalingOutcome::Power(j as u32),
        None => ScalingOutcome::AtLeast(max_power),
    }
}

fn final_state_mse(state: &[f64], reference: &Trajectory, index: usize) -> f64 {
    let target = pack_state(&reference.states[index]);
    let mut acc = 0.0;
    for (a, b) in state.iter().zip(&target) {
        let d = a - b;
        acc += d * d;
    }
    acc / target.len() as f64
}

/// Integrate `system` from the reference initial state for `steps` steps of
/// size `dt`; non-finite states or solver failures count as infinite error.
fn integrator_final_error(
    system: &dyn Dynamics,
    integrator: IntegratorKind,
    reference: &Trajectory,
    dt: f64,
    steps: usize,
    shared_index: usize,
) -> f64 {
    let mut stepper = match Stepper::new(system, integrator, dt, ImplicitSolveConfig::default()) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    let mut x = pack_state(&reference.states[0]);
    for _ in 0..steps {
        x = match stepper.step(&x) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        if !x.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
    }
    final_state_mse(&x, reference, shared_index)
}

fn trajectory_scaling(
    system: &dyn Dynamics,
    integrator: IntegratorKind,
    reference: &Trajectory,
    learned: &RolloutResult,
    max_power: u32,
) -> ScalingOutcome {
    let k_max = reference.len() - 1;
    for power in 0..=max_power {
        let stride = 1usize << power;
        let steps = k_max / stride;
        if steps == 0 {
            break;
        }
        let shared = steps * stride;
        // A rollout truncated by divergence has effectively infinite error
        // at the shared step; the integrator never exceeds it.
        let learned_error = match learned.per_step_mse.get(shared - 1) {
            Some(e) if e.is_finite() => *e,
            _ => continue,
        };
        let dt = reference.grid.step * stride as f64;
        let integrator_error =
            integrator_final_error(system, integrator, reference, dt, steps, shared);
        if integrator_error > learned_error {
            return ScalingOutcome::Power(power);
        }
    }
    ScalingOutcome::AtLeast(max_power)
}

fn modal(outcomes: &[ScalingOutcome]) -> ScalingOutcome {
    let mut counts: Vec<(ScalingOutcome, usize)> = Vec::new();
    for o in outcomes {
        match counts.iter_mut().find(|(k, _)| k == o) {
            Some((_, c)) => *c += 1,
            None => counts.push((*o, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(o, _)| o)
        .expect("at least one trajectory")
}

/// Measure the learned model's per-step evaluation cost against the
/// integrator's per-step cost (median over trajectories of each, then the
/// ratio). Only bare model evaluations are timed on the learned side.
pub fn measure_time_ratio(
    system: &dyn Dynamics,
    integrator: IntegratorKind,
    learned_model: &dyn Dynamics,
    references: &[Trajectory],
) -> f64 {
    let mut learned_costs = Vec::with_capacity(references.len());
    let mut integrator_costs = Vec::with_capacity(references.len());
    for reference in references {
        let steps = reference.len().saturating_sub(1).max(1);
        let start = Instant::now();
        for state in reference.states.iter().take(steps) {
            let packed = pack_state(state);
            let _ = std::hint::black_box(eval_packed(learned_model, &packed));
        }
        learned_costs.push(start.elapsed().as_secs_f64() / steps as f64);

        let mut stepper = match Stepper::new(
            system,
            integrator,
            reference.grid.step,
            ImplicitSolveConfig::default(),
        ) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let mut x = pack_state(&reference.states[0]);
        let start = Instant::now();
        for _ in 0..steps {
            match stepper.step(&x) {
                Ok(v) => x = std::hint::black_box(v),
                Err(_) => break,
            }
        }
        integrator_costs.push(start.elapsed().as_secs_f64() / steps as f64);
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            f64::NAN
        } else {
            v[v.len() / 2]
        }
    };
    median(learned_costs) / median(integrator_costs)
}

/// Full timing protocol over an evaluation set: per-trajectory scaling
/// factors against ground truth, their mode, and the measured per-step time
/// ratio.
pub fn timing_protocol(
    system: &dyn Dynamics,
    integrator: IntegratorKind,
    learned_model: &dyn Dynamics,
    references: &[Trajectory],
    learned: &[RolloutResult],
    max_power: u32,
) -> TimingReport {
    assert_eq!(references.len(), learned.len());
    assert!(!references.is_empty(), "timing needs at least one trajectory");
    let per_trajectory: Vec<ScalingOutcome> = references
        .iter()
        .zip(learned)
        .map(|(reference, rollout)| {
            trajectory_scaling(system, integrator, reference, rollout, max_power)
        })
        .collect();
    let modal_scaling = modal(&per_trajectory);
    let time_ratio = measure_time_ratio(system, integrator, learned_model, references);
    TimingReport {
        per_trajectory,
        modal_scaling,
        time_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PhaseState, TimeGrid};
    use crate::evaluation::rollout_derivative;
    use crate::integrators::integrate;
    use crate::systems::SpringSystem;

    #[test]
    fn crossing_rules_on_synthetic_curves() {
        let curve = [1e-6, 1e-5, 1e-4, 1e-3];
        // Learned error strictly between curve[1] and curve[2] crosses at
        // the next power.
        assert_eq!(scaling_power(5e-5, &curve), ScalingOutcome::Power(2));
        assert_eq!(scaling_power(5e-7, &curve), ScalingOutcome::Power(0));
        assert_eq!(scaling_power(0.5, &curve), ScalingOutcome::AtLeast(3));
        // A perfect learned method is unbeatable: no speedup at all.
        assert_eq!(scaling_power(0.0, &curve), ScalingOutcome::Power(0));
        // A diverged learned method is never exceeded: sentinel.
        assert_eq!(scaling_power(f64::INFINITY, &curve), ScalingOutcome::AtLeast(3));
    }

    #[test]
    fn scaling_grows_with_learned_error() {
        // Worse learned methods allow more integrator speedup before the
        // integrator's error exceeds theirs.
        let curve = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
        let mut previous = 0u64;
        for e in [0.0, 1e-9, 5e-8, 5e-7, 5e-6, 5e-5, 1.0, f64::INFINITY] {
            let outcome = scaling_power(e, &curve);
            assert!(
                outcome.factor() >= previous,
                "scaling must not decrease with learned error"
            );
            previous = outcome.factor();
        }
    }

    #[test]
    fn modal_breaks_ties_toward_the_smallest() {
        let outcomes = [
            ScalingOutcome::Power(2),
            ScalingOutcome::Power(4),
            ScalingOutcome::Power(2),
            ScalingOutcome::Power(4),
            ScalingOutcome::AtLeast(6),
        ];
        assert_eq!(modal(&outcomes), ScalingOutcome::Power(2));
    }

    #[test]
    fn exact_model_crosses_at_the_first_coarsening() {
        // The learned model IS the true system rolled out at the stored
        // stride, so its error is exactly zero and so is the base-stride
        // integrator's (bit-identical paths). The first coarsening already
        // exceeds zero error: scaling 2x.
        let grid = TimeGrid::new(0.05, 65, 1).unwrap();
        let x0 = PhaseState::new(vec![0.7], vec![0.0]);
        let reference = integrate(&SpringSystem, IntegratorKind::Leapfrog, &x0, &grid).unwrap();
        let rollout = rollout_derivative(&SpringSystem, IntegratorKind::Leapfrog, &reference);
        assert!(rollout.per_step_mse.iter().all(|e| *e == 0.0));
        let report = timing_protocol(
            &SpringSystem,
            IntegratorKind::Leapfrog,
            &SpringSystem,
            std::slice::from_ref(&reference),
            std::slice::from_ref(&rollout),
            4,
        );
        assert_eq!(report.per_trajectory, vec![ScalingOutcome::Power(1)]);
        assert!(report.time_ratio.is_finite() && report.time_ratio > 0.0);
    }

    #[test]
    fn noisy_model_crosses_at_a_finite_scaling() {
        // Perturbed derivative: persistent error that a fine integrator
        // beats, a very coarse one does not.
        struct Biased;
        impl Dynamics for Biased {
            fn dim_q(&self) -> usize {
                1
            }
            fn dim_p(&self) -> usize {
                1
            }
            fn derivative(
                &self,
                s: &PhaseState,
            ) -> Result<crate::domain::StateDerivative, crate::systems::SystemError> {
                self.check_dim(s)?;
                Ok(crate::domain::StateDerivative::new(
                    vec![s.p[0] + 2e-3],
                    vec![-s.q[0] - 2e-3],
                ))
            }
        }
        let grid = TimeGrid::new(0.05, 129, 32).unwrap();
        let x0 = PhaseState::new(vec![0.7], vec![0.0]);
        let reference = integrate(&SpringSystem, IntegratorKind::Leapfrog, &x0, &grid).unwrap();
        let rollout = rollout_derivative(&Biased, IntegratorKind::Leapfrog, &reference);
        let report = timing_protocol(
            &SpringSystem,
            IntegratorKind::Leapfrog,
            &Biased,
            std::slice::from_ref(&reference),
            std::slice::from_ref(&rollout),
            7,
        );
        match report.per_trajectory[0] {
            ScalingOutcome::Power(p) => assert!(p > 0, "biased model beats the base stride"),
            ScalingOutcome::AtLeast(_) => panic!("a coarse enough integrator must lose"),
        }
    }
}
