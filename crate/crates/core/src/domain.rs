//! Core state, trajectory, and time-grid types shared by every other module.
//!
//! States are split into position and momentum components `(q, p)`; the packed
//! form is the concatenation `[q; p]`. All numerics are `f64`, and stored
//! snapshot times are always computed multiplicatively (`t_k = k * step`) so
//! that time channels are bit-stable across platforms.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("dimension mismatch: expected at least {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(&'static str),
}

/// Position/momentum pair making up one system state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        Self { q, p }
    }

    pub fn zeros(nq: usize, np: usize) -> Self {
        Self {
            q: vec![0.0; nq],
            p: vec![0.0; np],
        }
    }

    /// Total packed dimension `|q| + |p|`.
    pub fn dim(&self) -> usize {
        self.q.len() + self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }

    /// Euclidean norm of the packed state.
    pub fn norm(&self) -> f64 {
        self.q
            .iter()
            .chain(self.p.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Time derivative of a [`PhaseState`], in state units per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
}

impl StateDerivative {
    pub fn new(dq: Vec<f64>, dp: Vec<f64>) -> Self {
        Self { dq, dp }
    }

    pub fn zeros(nq: usize, np: usize) -> Self {
        Self {
            dq: vec![0.0; nq],
            dp: vec![0.0; np],
        }
    }

    pub fn dim(&self) -> usize {
        self.dq.len() + self.dp.len()
    }

    pub fn is_finite(&self) -> bool {
        self.dq.iter().chain(self.dp.iter()).all(|v| v.is_finite())
    }
}

/// Concatenate `[q; p]` into a flat vector.
pub fn pack_state(s: &PhaseState) -> Vec<f64> {
    let mut v = Vec::with_capacity(s.dim());
    v.extend_from_slice(&s.q);
    v.extend_from_slice(&s.p);
    v
}

/// Split a packed vector back into `(q, p)` with `|q| = nq`.
pub fn unpack_state(v: &[f64], nq: usize) -> Result<PhaseState, DomainError> {
    if v.len() < nq {
        return Err(DomainError::Dimension {
            expected: nq,
            got: v.len(),
        });
    }
    Ok(PhaseState {
        q: v[..nq].to_vec(),
        p: v[nq..].to_vec(),
    })
}

pub fn pack_derivative(d: &StateDerivative) -> Vec<f64> {
    let mut v = Vec::with_capacity(d.dim());
    v.extend_from_slice(&d.dq);
    v.extend_from_slice(&d.dp);
    v
}

pub fn unpack_derivative(v: &[f64], nq: usize) -> Result<StateDerivative, DomainError> {
    if v.len() < nq {
        return Err(DomainError::Dimension {
            expected: nq,
            got: v.len(),
        });
    }
    Ok(StateDerivative {
        dq: v[..nq].to_vec(),
        dp: v[nq..].to_vec(),
    })
}

/// Uniform stored time grid starting at t = 0.
///
/// `step` is the stored snapshot stride; integration runs internally at
/// `step / subsample` and keeps every `subsample`-th state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub step: f64,
    pub count: usize,
    pub subsample: usize,
}

impl TimeGrid {
    pub fn new(step: f64, count: usize, subsample: usize) -> Result<Self, DomainError> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(DomainError::InvalidGrid("step must be positive and finite"));
        }
        if count < 1 {
            return Err(DomainError::InvalidGrid("count must be at least 1"));
        }
        if subsample < 1 {
            return Err(DomainError::InvalidGrid("subsample must be at least 1"));
        }
        Ok(Self {
            step,
            count,
            subsample,
        })
    }

    /// Time of the k-th stored snapshot, computed as `k * step` (never by
    /// accumulation).
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|k| self.time_at(k))
    }

    /// Internal integration stride.
    pub fn inner_step(&self) -> f64 {
        self.step / self.subsample as f64
    }

    /// Number of internal integration steps needed to fill the grid.
    pub fn inner_count(&self) -> usize {
        (self.count - 1) * self.subsample
    }
}

/// A uniformly gridded sequence of states plus the target derivatives at each
/// stored snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<PhaseState>,
    pub derivatives: Vec<StateDerivative>,
    pub gen_time_seconds: f64,
}

impl Trajectory {
    pub fn packed_state(&self, k: usize) -> Vec<f64> {
        pack_state(&self.states[k])
    }

    pub fn packed_derivative(&self, k: usize) -> Vec<f64> {
        pack_derivative(&self.derivatives[k])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Check every trajectory invariant, returning one message per violation.
/// An empty result means the trajectory is well formed.
pub fn validate_trajectory(tr: &Trajectory) -> Vec<String> {
    let mut violations = Vec::new();
    if tr.states.len() != tr.grid.count {
        violations.push(format!(
            "state count {} does not match grid count {}",
            tr.states.len(),
            tr.grid.count
        ));
    }
    if tr.states.len() != tr.derivatives.len() {
        violations.push(format!(
            "length mismatch: {} states vs {} derivatives",
            tr.states.len(),
            tr.derivatives.len()
        ));
    }
    if !(tr.gen_time_seconds >= 0.0) {
        violations.push(format!(
            "gen_time_seconds must be non-negative, got {}",
            tr.gen_time_seconds
        ));
    }
    let (nq, np) = match tr.states.first() {
        Some(s) => (s.q.len(), s.p.len()),
        None => return violations,
    };
    for (k, s) in tr.states.iter().enumerate() {
        if s.q.len() != nq || s.p.len() != np {
            violations.push(format!("state dimension mismatch at {k}"));
        }
        if !s.is_finite() {
            violations.push(format!("non-finite state at {k}"));
        }
    }
    for (k, d) in tr.derivatives.iter().enumerate() {
        if d.dq.len() != nq || d.dp.len() != np {
            violations.push(format!("derivative dimension mismatch at {k}"));
        }
        if !d.is_finite() {
            violations.push(format!("non-finite derivative at {k}"));
        }
    }
    violations
}
