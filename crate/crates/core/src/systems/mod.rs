//! The four benchmark systems: right-hand-side functions, closed forms and
//! oracles where available, geometry, and Navier-Stokes scene construction.

mod navier_stokes;
mod spring;
mod spring_mesh;
mod wave;

pub use navier_stokes::{
    emit_solver_scene, inflow_profile, parse_solver_scene, sample_obstacles, NavierStokesScene,
    NsGrid, Obstacle, DOMAIN_HEIGHT, DOMAIN_WIDTH, OBSTACLE_GAP, SIDE_MARGIN, TOP_BOTTOM_MARGIN,
};
pub use spring::{spring_closed_form, SpringSystem};
pub use spring_mesh::{MeshSpring, Particle, SpringMeshSystem};
pub use wave::{spline_pulse, wave_spline_pulse, WaveSystem};

use crate::domain::{pack_derivative, unpack_state, PhaseState, StateDerivative};
use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("coincident particles {a} and {b}: spring direction is undefined")]
    CoincidentParticles { a: usize, b: usize },
    #[error("obstacle sampling exhausted after {scene_restarts} scene restarts")]
    SamplingExhausted { scene_restarts: usize },
}

/// Identifier for one of the four benchmark systems, matching the `system`
/// strings of the dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "spring")]
    Spring,
    #[serde(rename = "wave")]
    Wave,
    #[serde(rename = "spring-mesh")]
    SpringMesh,
    #[serde(rename = "navier-stokes")]
    NavierStokes,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Spring => "spring",
            SystemKind::Wave => "wave",
            SystemKind::SpringMesh => "spring-mesh",
            SystemKind::NavierStokes => "navier-stokes",
        }
    }

    pub fn parse(s: &str) -> Option<SystemKind> {
        match s {
            "spring" => Some(SystemKind::Spring),
            "wave" => Some(SystemKind::Wave),
            "spring-mesh" => Some(SystemKind::SpringMesh),
            "navier-stokes" => Some(SystemKind::NavierStokes),
            _ => None,
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A first-order dynamical system `x' = f(x)` on phase states.
///
/// Implemented both by the benchmark systems and by learned derivative
/// models, so the same integrators drive ground-truth generation and
/// learned-model rollouts.
pub trait Dynamics: Sync {
    fn dim_q(&self) -> usize;
    fn dim_p(&self) -> usize;

    fn derivative(&self, state: &PhaseState) -> Result<StateDerivative, SystemError>;

    /// For linear systems `f(x) = A x` on the packed state, the matrix `A`.
    /// Enables the direct-solve fast path in the implicit integrators.
    fn linear_rhs(&self) -> Option<Mat> {
        None
    }

    /// Whether the leapfrog splitting applies (separable `(q, p)` structure).
    fn leapfrog_compatible(&self) -> bool {
        true
    }

    fn dim(&self) -> usize {
        self.dim_q() + self.dim_p()
    }

    fn check_dim(&self, state: &PhaseState) -> Result<(), SystemError> {
        if state.q.len() != self.dim_q() || state.p.len() != self.dim_p() {
            return Err(SystemError::Dimension {
                expected: self.dim(),
                got: state.dim(),
            });
        }
        Ok(())
    }
}

/// Evaluate `f` on a packed state vector `[q; p]`.
pub fn eval_packed(f: &dyn Dynamics, x: &[f64]) -> Result<Vec<f64>, SystemError> {
    if x.len() != f.dim() {
        return Err(SystemError::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    let state = unpack_state(x, f.dim_q()).expect("length checked above");
    let d = f.derivative(&state)?;
    Ok(pack_derivative(&d))
}
