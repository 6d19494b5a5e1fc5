//! One-dimensional linear wave equation on a periodic grid, reduced to first
//! order: `q' = p`, `p' = c^2 D_xx q`, with the three-point central-difference
//! Laplacian `D_xx`.

use super::{Dynamics, SystemError};
use crate::domain::{PhaseState, StateDerivative};
use crate::linalg::Mat;

#[derive(Debug, Clone)]
pub struct WaveSystem {
    pub n_grid: usize,
    pub space_max: f64,
    pub wave_speed: f64,
}

impl WaveSystem {
    pub fn new(n_grid: usize, space_max: f64, wave_speed: f64) -> Self {
        assert!(n_grid >= 3, "periodic stencil needs at least 3 points");
        assert!(space_max > 0.0);
        Self {
            n_grid,
            space_max,
            wave_speed,
        }
    }

    /// The paper's configuration: 125 grid points on [0, 1), c = 0.1.
    pub fn standard() -> Self {
        Self::new(125, 1.0, 0.1)
    }

    pub fn dx(&self) -> f64 {
        self.space_max / self.n_grid as f64
    }

    /// Apply the periodic three-point Laplacian scaled by `1/dx^2`.
    pub fn apply_dxx(&self, q: &[f64], out: &mut [f64]) {
        let n = self.n_grid;
        debug_assert_eq!(q.len(), n);
        debug_assert_eq!(out.len(), n);
        let inv_dx2 = 1.0 / (self.dx() * self.dx());
        for i in 0..n {
            let left = q[(i + n - 1) % n];
            let right = q[(i + 1) % n];
            out[i] = (left - 2.0 * q[i] + right) * inv_dx2;
        }
    }

    /// Dense `D_xx`, for tests and the linear fast path.
    pub fn dxx_dense(&self) -> Mat {
        let n = self.n_grid;
        let inv_dx2 = 1.0 / (self.dx() * self.dx());
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                -2.0 * inv_dx2
            } else if j == (i + 1) % n || i == (j + 1) % n {
                inv_dx2
            } else {
                0.0
            }
        })
    }
}

impl Dynamics for WaveSystem {
    fn dim_q(&self) -> usize {
        self.n_grid
    }

    fn dim_p(&self) -> usize {
        self.n_grid
    }

    fn derivative(&self, state: &PhaseState) -> Result<StateDerivative, SystemError> {
        self.check_dim(state)?;
        let mut dp = vec![0.0; self.n_grid];
        self.apply_dxx(&state.q, &mut dp);
        let c2 = self.wave_speed * self.wave_speed;
        for v in &mut dp {
            *v *= c2;
        }
        Ok(StateDerivative {
            dq: state.p.clone(),
            dp,
        })
    }

    fn linear_rhs(&self) -> Option<Mat> {
        let n = self.n_grid;
        let dxx = self.dxx_dense();
        let c2 = self.wave_speed * self.wave_speed;
        let mut a = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            a.set(i, n + i, 1.0);
            for j in 0..n {
                a.set(n + i, j, c2 * dxx.get(i, j));
            }
        }
        Some(a)
    }
}

/// Spline-kernel pulse evaluated on the grid points `x_i = i / n_grid`:
/// `s(x) = (10 / p_w) |x - 0.5|` and a piecewise-cubic bump `h(s)` scaled to
/// height `p_h`, compactly supported on `s <= 2`.
pub fn wave_spline_pulse(p_w: f64, p_h: f64, n_grid: usize) -> Vec<f64> {
    spline_pulse(p_w, p_h, 0.5, n_grid)
}

/// Same pulse with a configurable center position.
pub fn spline_pulse(width: f64, height: f64, position: f64, n_grid: usize) -> Vec<f64> {
    assert!(width > 0.0, "pulse width must be positive");
    (0..n_grid)
        .map(|i| {
            let x = i as f64 / n_grid as f64;
            let s = (10.0 / width) * (x - position).abs();
            height * spline_kernel(s)
        })
        .collect()
}

fn spline_kernel(s: f64) -> f64 {
    if s <= 1.0 {
        1.0 - 1.5 * s * s + 0.75 * s * s * s
    } else if s <= 2.0 {
        0.25 * (2.0 - s) * (2.0 - s) * (2.0 - s)
    } else {
        0.0
    }
}
