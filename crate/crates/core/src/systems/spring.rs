//! One-dimensional oscillating spring with zero rest length, unit mass, and
//! unit spring constant: `q' = p`, `p' = -q`.

use super::{Dynamics, SystemError};
use crate::domain::{PhaseState, StateDerivative};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, Default)]
pub struct SpringSystem;

impl Dynamics for SpringSystem {
    fn dim_q(&self) -> usize {
        1
    }

    fn dim_p(&self) -> usize {
        1
    }

    fn derivative(&self, state: &PhaseState) -> Result<StateDerivative, SystemError> {
        self.check_dim(state)?;
        Ok(StateDerivative {
            dq: vec![state.p[0]],
            dp: vec![-state.q[0]],
        })
    }

    fn linear_rhs(&self) -> Option<Mat> {
        Some(Mat::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]))
    }
}

/// Exact solution `(q, p) = (r sin(t + theta0), r cos(t + theta0))`.
///
/// The phase-space radius `r` (squared energy radius `q^2 + p^2 = r^2`) is
/// conserved for all `t`.
pub fn spring_closed_form(r: f64, theta0: f64, t: f64) -> PhaseState {
    PhaseState {
        q: vec![r * (t + theta0).sin()],
        p: vec![r * (t + theta0).cos()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_matches_equations() {
        let sys = SpringSystem;
        let d = sys
            .derivative(&PhaseState::new(vec![0.0], vec![1.0]))
            .unwrap();
        assert_eq!((d.dq[0], d.dp[0]), (1.0, 0.0));
        let d = sys
            .derivative(&PhaseState::new(vec![0.0], vec![0.0]))
            .unwrap();
        assert_eq!((d.dq[0], d.dp[0]), (0.0, 0.0));
        let d = sys
            .derivative(&PhaseState::new(vec![1.0], vec![1.0]))
            .unwrap();
        assert_eq!((d.dq[0], d.dp[0]), (1.0, -1.0));
    }

    #[test]
    fn derivative_rejects_wrong_dimension() {
        let sys = SpringSystem;
        let err = sys
            .derivative(&PhaseState::new(vec![1.0, 2.0], vec![0.0]))
            .unwrap_err();
        assert!(matches!(err, SystemError::Dimension { .. }));
    }

    #[test]
    fn closed_form_values() {
        let s = spring_closed_form(1.0, 0.0, 0.0);
        assert!((s.q[0] - 0.0).abs() < 1e-15);
        assert!((s.p[0] - 1.0).abs() < 1e-15);

        let s = spring_closed_form(1.0, 0.0, std::f64::consts::FRAC_PI_2);
        assert!((s.q[0] - 1.0).abs() < 1e-15);
        assert!(s.p[0].abs() < 1e-15);

        // r=0.5, theta0=pi, t=pi: sin(2pi)=0, cos(2pi)=1.
        let s = spring_closed_form(0.5, std::f64::consts::PI, std::f64::consts::PI);
        assert!(s.q[0].abs() < 1e-15);
        assert!((s.p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_conserves_energy() {
        for (r, theta0) in [(0.3, 0.0), (1.0, 1.7), (1.2, -2.0)] {
            for k in 0..50 {
                let t = k as f64 * 0.37;
                let s = spring_closed_form(r, theta0, t);
                let energy = s.q[0] * s.q[0] + s.p[0] * s.p[0];
                assert!((energy - r * r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_satisfies_ode() {
        let sys = SpringSystem;
        let h = 1e-6;
        for t in [0.0, 0.5, 2.0, 5.5] {
            let s = spring_closed_form(0.8, 0.3, t);
            let d = sys.derivative(&s).unwrap();
            let splus = spring_closed_form(0.8, 0.3, t + h);
            let sminus = spring_closed_form(0.8, 0.3, t - h);
            let dq_fd = (splus.q[0] - sminus.q[0]) / (2.0 * h);
            let dp_fd = (splus.p[0] - sminus.p[0]) / (2.0 * h);
            assert!((d.dq[0] - dq_fd).abs() < 1e-8);
            assert!((d.dp[0] - dp_fd).abs() < 1e-8);
        }
    }
}
