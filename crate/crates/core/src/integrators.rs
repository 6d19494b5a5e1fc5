//! The five time-integration schemes (forward Euler, leapfrog, RK4, backward
//! Euler, BDF2) and the rollout driver implementing the subsample convention:
//! integrate internally at `step / subsample` and keep every `subsample`-th
//! snapshot.
//!
//! The implicit schemes solve their stage equations by Newton iteration with
//! a forward-difference Jacobian; systems exposing a linear right-hand side
//! `f(x) = A x` get a direct pre-factored solve with identical results to
//! tolerance.

use crate::domain::{pack_state, unpack_state, PhaseState, TimeGrid, Trajectory};
use crate::linalg::{LinalgError, LuFactors, Mat};
use crate::systems::{eval_packed, Dynamics, SystemError};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("state diverged (non-finite entry) at inner step {step}")]
    Divergence { step: usize },
    #[error("implicit solve did not converge: residual {residual:e} after {iterations} iterations")]
    SolverFailed { residual: f64, iterations: usize },
    #[error("leapfrog requires a separable (q, p) system")]
    LeapfrogUnsupported,
    #[error("linear solve failed: {0}")]
    Linear(#[from] LinalgError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegratorKind {
    #[serde(rename = "forward-euler")]
    ForwardEuler,
    #[serde(rename = "leapfrog")]
    Leapfrog,
    #[serde(rename = "rk4")]
    Rk4,
    #[serde(rename = "backward-euler")]
    BackwardEuler,
    #[serde(rename = "bdf2")]
    Bdf2,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 5] = [
        IntegratorKind::ForwardEuler,
        IntegratorKind::Leapfrog,
        IntegratorKind::Rk4,
        IntegratorKind::BackwardEuler,
        IntegratorKind::Bdf2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IntegratorKind::ForwardEuler => "forward-euler",
            IntegratorKind::Leapfrog => "leapfrog",
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::BackwardEuler => "backward-euler",
            IntegratorKind::Bdf2 => "bdf2",
        }
    }

    pub fn parse(s: &str) -> Option<IntegratorKind> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which fourth stage the RK4 scheme evaluates.
///
/// `Classical` evaluates `h4 = f(x + dt * h3)` (order 4). `HalfStepH4`
/// evaluates `h4 = f(x + dt/2 * h3)`; the convergence-order tests document
/// what each variant achieves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Rk4Variant {
    #[default]
    #[serde(rename = "classical")]
    Classical,
    #[serde(rename = "half-step-h4")]
    HalfStepH4,
}

/// Newton-solver settings for the implicit schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSolveConfig {
    /// Convergence threshold on the residual infinity norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Forward-difference step scale; the per-component step is
    /// `jacobian_epsilon * (1 + |x_i|)`.
    pub jacobian_epsilon: f64,
}

impl Default for ImplicitSolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            jacobian_epsilon: 1e-7,
        }
    }
}

fn ensure_finite(x: &[f64]) -> Result<(), IntegratorError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IntegratorError::Divergence { step: 0 })
    }
}

/// One explicit Euler step `x + dt f(x)`.
pub fn euler_step(f: &dyn Dynamics, x: &[f64], dt: f64) -> Result<Vec<f64>, IntegratorError> {
    let d = eval_packed(f, x)?;
    let next: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + dt * di).collect();
    ensure_finite(&next)?;
    Ok(next)
}

/// One classical RK4 step.
pub fn rk4_step(f: &dyn Dynamics, x: &[f64], dt: f64) -> Result<Vec<f64>, IntegratorError> {
    rk4_step_variant(f, x, dt, Rk4Variant::Classical)
}

pub fn rk4_step_variant(
    f: &dyn Dynamics,
    x: &[f64],
    dt: f64,
    variant: Rk4Variant,
) -> Result<Vec<f64>, IntegratorError> {
    let advance = |base: &[f64], dir: &[f64], scale: f64| -> Vec<f64> {
        base.iter()
            .zip(dir)
            .map(|(b, d)| b + scale * d)
            .collect::<Vec<f64>>()
    };
    let h1 = eval_packed(f, x)?;
    let h2 = eval_packed(f, &advance(x, &h1, dt / 2.0))?;
    let h3 = eval_packed(f, &advance(x, &h2, dt / 2.0))?;
    let h4_scale = match variant {
        Rk4Variant::Classical => dt,
        Rk4Variant::HalfStepH4 => dt / 2.0,
    };
    let h4 = eval_packed(f, &advance(x, &h3, h4_scale))?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + dt / 6.0 * (h1[i] + 2.0 * h2[i] + 2.0 * h3[i] + h4[i]))
        .collect();
    ensure_finite(&next)?;
    Ok(next)
}

/// One leapfrog (kick-drift-kick) step on the separable state:
/// `p_half = p + dt/2 p'(q, p)`, `q1 = q + dt q'(q, p_half)`,
/// `p1 = p_half + dt/2 p'(q1, p_half)`.
pub fn leapfrog_step(
    f: &dyn Dynamics,
    s: &PhaseState,
    dt: f64,
) -> Result<PhaseState, IntegratorError> {
    if !f.leapfrog_compatible() {
        return Err(IntegratorError::LeapfrogUnsupported);
    }
    f.check_dim(s)?;
    let d0 = f.derivative(s)?;
    let p_half: Vec<f64> = s
        .p
        .iter()
        .zip(&d0.dp)
        .map(|(p, dp)| p + dt / 2.0 * dp)
        .collect();
    let mid = PhaseState::new(s.q.clone(), p_half);
    let d1 = f.derivative(&mid)?;
    let q_next: Vec<f64> = s
        .q
        .iter()
        .zip(&d1.dq)
        .map(|(q, dq)| q + dt * dq)
        .collect();
    let end = PhaseState::new(q_next, mid.p);
    let d2 = f.derivative(&end)?;
    let p_next: Vec<f64> = end
        .p
        .iter()
        .zip(&d2.dp)
        .map(|(p, dp)| p + dt / 2.0 * dp)
        .collect();
    let out = PhaseState::new(end.q, p_next);
    if !out.is_finite() {
        return Err(IntegratorError::Divergence { step: 0 });
    }
    Ok(out)
}

/// One backward Euler step: solves `y - dt f(y) = x` with initial guess `x`.
pub fn backward_euler_step(
    f: &dyn Dynamics,
    x: &[f64],
    dt: f64,
    cfg: &ImplicitSolveConfig,
) -> Result<Vec<f64>, IntegratorError> {
    let lin = f
        .linear_rhs()
        .map(|a| implicit_matrix(&a, dt).lu_factor())
        .transpose()?;
    solve_implicit(f, dt, x, x, cfg, lin.as_ref())
}

/// One BDF2 step: solves `y - (4/3) x_prev1 + (1/3) x_prev2 = (2/3) dt f(y)`.
pub fn bdf2_step(
    f: &dyn Dynamics,
    x_prev2: &[f64],
    x_prev1: &[f64],
    dt: f64,
    cfg: &ImplicitSolveConfig,
) -> Result<Vec<f64>, IntegratorError> {
    let coeff = 2.0 / 3.0 * dt;
    let lin = f
        .linear_rhs()
        .map(|a| implicit_matrix(&a, coeff).lu_factor())
        .transpose()?;
    let b: Vec<f64> = x_prev1
        .iter()
        .zip(x_prev2)
        .map(|(x1, x2)| 4.0 / 3.0 * x1 - 1.0 / 3.0 * x2)
        .collect();
    solve_implicit(f, coeff, &b, x_prev1, cfg, lin.as_ref())
}

/// `I - coeff * A`.
fn implicit_matrix(a: &Mat, coeff: f64) -> Mat {
    let n = a.rows();
    Mat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - coeff * a.get(i, j)
    })
}

/// Solve `y - coeff f(y) = b`. With a pre-factored linear system the solve is
/// direct; otherwise Newton iteration with a forward-difference Jacobian.
fn solve_implicit(
    f: &dyn Dynamics,
    coeff: f64,
    b: &[f64],
    guess: &[f64],
    cfg: &ImplicitSolveConfig,
    lin: Option<&LuFactors>,
) -> Result<Vec<f64>, IntegratorError> {
    if let Some(factors) = lin {
        let y = factors.solve(b);
        ensure_finite(&y)?;
        return Ok(y);
    }
    let n = b.len();
    let mut y = guess.to_vec();
    for iteration in 0..=cfg.max_iterations {
        let fy = eval_packed(f, &y)?;
        let residual: Vec<f64> = (0..n).map(|i| y[i] - coeff * fy[i] - b[i]).collect();
        let rnorm = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if rnorm <= cfg.tolerance {
            return Ok(y);
        }
        if iteration == cfg.max_iterations {
            return Err(IntegratorError::SolverFailed {
                residual: rnorm,
                iterations: iteration,
            });
        }
        let mut jac = Mat::zeros(n, n);
        for j in 0..n {
            let eps = cfg.jacobian_epsilon * (1.0 + y[j].abs());
            let mut yp = y.clone();
            yp[j] += eps;
            let fp = eval_packed(f, &yp)?;
            for i in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                jac.set(i, j, id - coeff * (fp[i] - fy[i]) / eps);
            }
        }
        let neg_residual: Vec<f64> = residual.iter().map(|r| -r).collect();
        let delta = jac.lu_solve(&neg_residual)?;
        for i in 0..n {
            y[i] += delta[i];
        }
        ensure_finite(&y)?;
    }
    unreachable!("loop returns or errors at max_iterations");
}

/// Repeated stepping with one integrator at a fixed stride. Holds the BDF2
/// history and the pre-factored linear solves.
pub struct Stepper<'a> {
    f: &'a dyn Dynamics,
    kind: IntegratorKind,
    dt: f64,
    cfg: ImplicitSolveConfig,
    rk4_variant: Rk4Variant,
    prev: Option<Vec<f64>>,
    lin_be: Option<LuFactors>,
    lin_bdf2: Option<LuFactors>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        f: &'a dyn Dynamics,
        kind: IntegratorKind,
        dt: f64,
        cfg: ImplicitSolveConfig,
    ) -> Result<Self, IntegratorError> {
        Self::with_rk4_variant(f, kind, dt, cfg, Rk4Variant::default())
    }

    pub fn with_rk4_variant(
        f: &'a dyn Dynamics,
        kind: IntegratorKind,
        dt: f64,
        cfg: ImplicitSolveConfig,
        rk4_variant: Rk4Variant,
    ) -> Result<Self, IntegratorError> {
        if kind == IntegratorKind::Leapfrog && !f.leapfrog_compatible() {
            return Err(IntegratorError::LeapfrogUnsupported);
        }
        let needs_be = matches!(kind, IntegratorKind::BackwardEuler | IntegratorKind::Bdf2);
        let needs_bdf2 = kind == IntegratorKind::Bdf2;
        let linear = if needs_be { f.linear_rhs() } else { None };
        let lin_be = linear
            .as_ref()
            .map(|a| implicit_matrix(a, dt).lu_factor())
            .transpose()?;
        let lin_bdf2 = if needs_bdf2 {
            linear
                .as_ref()
                .map(|a| implicit_matrix(a, 2.0 / 3.0 * dt).lu_factor())
                .transpose()?
        } else {
            None
        };
        Ok(Self {
            f,
            kind,
            dt,
            cfg,
            rk4_variant,
            prev: None,
            lin_be,
            lin_bdf2,
        })
    }

    /// Advance one step from `x`. For BDF2 the first call performs the
    /// backward Euler kickstart.
    pub fn step(&mut self, x: &[f64]) -> Result<Vec<f64>, IntegratorError> {
        match self.kind {
            IntegratorKind::ForwardEuler => euler_step(self.f, x, self.dt),
            IntegratorKind::Rk4 => rk4_step_variant(self.f, x, self.dt, self.rk4_variant),
            IntegratorKind::Leapfrog => {
                let state = unpack_state(x, self.f.dim_q()).map_err(|_| {
                    IntegratorError::System(SystemError::Dimension {
                        expected: self.f.dim(),
                        got: x.len(),
                    })
                })?;
                let next = leapfrog_step(self.f, &state, self.dt)?;
                Ok(pack_state(&next))
            }
            IntegratorKind::BackwardEuler => {
                solve_implicit(self.f, self.dt, x, x, &self.cfg, self.lin_be.as_ref())
            }
            IntegratorKind::Bdf2 => {
                let next = match self.prev.take() {
                    None => solve_implicit(self.f, self.dt, x, x, &self.cfg, self.lin_be.as_ref())?,
                    Some(prev) => {
                        let b: Vec<f64> = x
                            .iter()
                            .zip(&prev)
                            .map(|(x1, x2)| 4.0 / 3.0 * x1 - 1.0 / 3.0 * x2)
                            .collect();
                        solve_implicit(
                            self.f,
                            2.0 / 3.0 * self.dt,
                            &b,
                            x,
                            &self.cfg,
                            self.lin_bdf2.as_ref(),
                        )?
                    }
                };
                self.prev = Some(x.to_vec());
                Ok(next)
            }
        }
    }
}

/// Integrate from `x0` over the grid, storing every `subsample`-th state and
/// the system derivative at each stored state. The first stored state is
/// `x0` itself. Divergence is reported with the failing inner step.
pub fn integrate(
    f: &dyn Dynamics,
    kind: IntegratorKind,
    x0: &PhaseState,
    grid: &TimeGrid,
) -> Result<Trajectory, IntegratorError> {
    integrate_with(f, kind, x0, grid, ImplicitSolveConfig::default(), Rk4Variant::default())
}

pub fn integrate_with(
    f: &dyn Dynamics,
    kind: IntegratorKind,
    x0: &PhaseState,
    grid: &TimeGrid,
    cfg: ImplicitSolveConfig,
    rk4_variant: Rk4Variant,
) -> Result<Trajectory, IntegratorError> {
    let start = Instant::now();
    f.check_dim(x0)?;
    if !x0.is_finite() {
        return Err(IntegratorError::Divergence { step: 0 });
    }
    let mut stepper = Stepper::with_rk4_variant(f, kind, grid.inner_step(), cfg, rk4_variant)?;
    let mut states = Vec::with_capacity(grid.count);
    states.push(x0.clone());
    let mut x = pack_state(x0);
    for k in 1..=grid.inner_count() {
        x = stepper.step(&x).map_err(|e| match e {
            IntegratorError::Divergence { .. } => IntegratorError::Divergence { step: k },
            other => other,
        })?;
        if k % grid.subsample == 0 {
            states.push(unpack_state(&x, f.dim_q()).expect("stepper preserves dimension"));
        }
    }
    let derivatives = states
        .iter()
        .map(|s| f.derivative(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        grid: *grid,
        states,
        derivatives,
        gen_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Wrapper hiding the inner system's linear fast path, forcing the Newton
/// route through the implicit solvers.
pub struct WithoutLinearSolve<S>(pub S);

impl<S: Dynamics> Dynamics for WithoutLinearSolve<S> {
    fn dim_q(&self) -> usize {
        self.0.dim_q()
    }

    fn dim_p(&self) -> usize {
        self.0.dim_p()
    }

    fn derivative(
        &self,
        state: &PhaseState,
    ) -> Result<crate::domain::StateDerivative, SystemError> {
        self.0.derivative(state)
    }

    fn leapfrog_compatible(&self) -> bool {
        self.0.leapfrog_compatible()
    }
}
