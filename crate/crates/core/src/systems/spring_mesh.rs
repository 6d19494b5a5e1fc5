//! Square grid of unit masses connected by springs (axis-aligned plus
//! diagonals across each grid square), with velocity-proportional damping.
//!
//! The force on particle `a` from the spring to `b` is
//! `-k (|q_a - q_b| - l_ab) (q_a - q_b) / |q_a - q_b|`; the damping term
//! `-gamma q'_a` is applied once per particle in the net force, so decay does
//! not scale with vertex degree. Fixed particles have zero derivatives.

use super::{Dynamics, SystemError};
use crate::domain::{PhaseState, StateDerivative};

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position0: [f64; 2],
    pub mass: f64,
    pub is_fixed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpring {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
    pub spring_const: f64,
}

#[derive(Debug, Clone)]
pub struct SpringMeshSystem {
    pub particles: Vec<Particle>,
    pub springs: Vec<MeshSpring>,
    pub vel_decay: f64,
    width: usize,
    height: usize,
}

impl SpringMeshSystem {
    /// Unit grid of `width x height` particles. Axis-aligned springs get rest
    /// length 1 and the diagonals sqrt(2), so the regular grid is force-free.
    /// With `fix_top` the row with the largest y coordinate is pinned.
    pub fn grid(width: usize, height: usize, fix_top: bool, vel_decay: f64) -> Self {
        assert!(width >= 2 && height >= 2);
        let mut particles = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                particles.push(Particle {
                    position0: [x as f64, y as f64],
                    mass: 1.0,
                    is_fixed: fix_top && y == height - 1,
                });
            }
        }
        let index = |x: usize, y: usize| y * width + x;
        let mut springs = Vec::new();
        let mut push = |a: usize, b: usize, rest: f64| {
            springs.push(MeshSpring {
                a,
                b,
                rest_length: rest,
                spring_const: 1.0,
            });
        };
        for y in 0..height {
            for x in 0..width {
                if x + 1 < width {
                    push(index(x, y), index(x + 1, y), 1.0);
                }
                if y + 1 < height {
                    push(index(x, y), index(x, y + 1), 1.0);
                }
                if x + 1 < width && y + 1 < height {
                    push(index(x, y), index(x + 1, y + 1), std::f64::consts::SQRT_2);
                    push(index(x + 1, y), index(x, y + 1), std::f64::consts::SQRT_2);
                }
            }
        }
        Self {
            particles,
            springs,
            vel_decay,
            width,
            height,
        }
    }

    /// The paper's configuration: 10x10 unit grid, fixed top row, gamma 0.1.
    pub fn standard() -> Self {
        Self::grid(10, 10, true, 0.1)
    }

    /// Arbitrary particle/spring lists (used when reloading dataset
    /// definitions and in small hand-built tests).
    pub fn from_parts(particles: Vec<Particle>, springs: Vec<MeshSpring>, vel_decay: f64) -> Self {
        Self {
            particles,
            springs,
            vel_decay,
            width: 0,
            height: 0,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        if self.width > 0 {
            Some((self.width, self.height))
        } else {
            None
        }
    }

    /// State with all particles at their rest positions and zero momentum.
    pub fn rest_state(&self) -> PhaseState {
        let mut q = Vec::with_capacity(2 * self.n_particles());
        for part in &self.particles {
            q.push(part.position0[0]);
            q.push(part.position0[1]);
        }
        let np = q.len();
        PhaseState::new(q, vec![0.0; np])
    }

    /// State from explicit particle positions, zero momentum.
    pub fn state_from_positions(&self, positions: &[[f64; 2]]) -> PhaseState {
        assert_eq!(positions.len(), self.n_particles());
        let mut q = Vec::with_capacity(2 * positions.len());
        for pos in positions {
            q.push(pos[0]);
            q.push(pos[1]);
        }
        let np = q.len();
        PhaseState::new(q, vec![0.0; np])
    }

    pub fn fixed_mask(&self) -> Vec<bool> {
        self.particles.iter().map(|p| p.is_fixed).collect()
    }

    /// Directed axis-aligned grid edges (each one-hop neighbor pair in both
    /// orders), the convention of the stored `edge_indices` channel. The
    /// diagonal dynamics springs are not part of this list.
    pub fn grid_edges_directed(&self) -> Vec<[i64; 2]> {
        let mut undirected = Vec::new();
        if self.width > 0 {
            let index = |x: usize, y: usize| (y * self.width + x) as i64;
            for y in 0..self.height {
                for x in 0..self.width {
                    if x + 1 < self.width {
                        undirected.push([index(x, y), index(x + 1, y)]);
                    }
                    if y + 1 < self.height {
                        undirected.push([index(x, y), index(x, y + 1)]);
                    }
                }
            }
        } else {
            // Fallback for hand-built meshes: every spring with rest length
            // closest to the axis-aligned unit spacing.
            for s in &self.springs {
                if (s.rest_length - 1.0).abs() < 1e-9 {
                    undirected.push([s.a as i64, s.b as i64]);
                }
            }
        }
        let mut directed = Vec::with_capacity(2 * undirected.len());
        for [a, b] in undirected {
            directed.push([a, b]);
            directed.push([b, a]);
        }
        directed
    }

    /// Kinetic plus elastic energy of a state.
    pub fn mechanical_energy(&self, state: &PhaseState) -> f64 {
        let mut energy = 0.0;
        for (i, part) in self.particles.iter().enumerate() {
            let px = state.p[2 * i];
            let py = state.p[2 * i + 1];
            energy += (px * px + py * py) / (2.0 * part.mass);
        }
        for s in &self.springs {
            let dx = state.q[2 * s.a] - state.q[2 * s.b];
            let dy = state.q[2 * s.a + 1] - state.q[2 * s.b + 1];
            let dist = (dx * dx + dy * dy).sqrt();
            let stretch = dist - s.rest_length;
            energy += 0.5 * s.spring_const * stretch * stretch;
        }
        energy
    }

    /// Total linear momentum (sum of per-particle momenta).
    pub fn total_momentum(&self, state: &PhaseState) -> [f64; 2] {
        let mut m = [0.0, 0.0];
        for i in 0..self.n_particles() {
            m[0] += state.p[2 * i];
            m[1] += state.p[2 * i + 1];
        }
        m
    }
}

impl Dynamics for SpringMeshSystem {
    fn dim_q(&self) -> usize {
        2 * self.n_particles()
    }

    fn dim_p(&self) -> usize {
        2 * self.n_particles()
    }

    fn derivative(&self, state: &PhaseState) -> Result<StateDerivative, SystemError> {
        self.check_dim(state)?;
        let n = self.n_particles();
        let mut force = vec![0.0; 2 * n];
        for s in &self.springs {
            let dx = state.q[2 * s.a] - state.q[2 * s.b];
            let dy = state.q[2 * s.a + 1] - state.q[2 * s.b + 1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist == 0.0 {
                return Err(SystemError::CoincidentParticles { a: s.a, b: s.b });
            }
            let scale = -s.spring_const * (dist - s.rest_length) / dist;
            let fx = scale * dx;
            let fy = scale * dy;
            force[2 * s.a] += fx;
            force[2 * s.a + 1] += fy;
            force[2 * s.b] -= fx;
            force[2 * s.b + 1] -= fy;
        }
        let mut dq = vec![0.0; 2 * n];
        let mut dp = vec![0.0; 2 * n];
        for (i, part) in self.particles.iter().enumerate() {
            if part.is_fixed {
                continue;
            }
            let vx = state.p[2 * i] / part.mass;
            let vy = state.p[2 * i + 1] / part.mass;
            dq[2 * i] = vx;
            dq[2 * i + 1] = vy;
            dp[2 * i] = force[2 * i] - self.vel_decay * vx;
            dp[2 * i + 1] = force[2 * i + 1] - self.vel_decay * vy;
        }
        Ok(StateDerivative { dq, dp })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_configuration_is_force_free() {
        let sys = SpringMeshSystem::standard();
        let d = sys.derivative(&sys.rest_state()).unwrap();
        assert!(d.dq.iter().all(|v| *v == 0.0));
        assert!(d.dp.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stretched_chain_pulls_back() {
        // Particle 0 free at origin, particle 1 fixed at distance l + eps on
        // the x axis: the net force on 0 has magnitude k*eps toward 1.
        let eps = 0.01;
        let particles = vec![
            Particle {
                position0: [0.0, 0.0],
                mass: 1.0,
                is_fixed: false,
            },
            Particle {
                position0: [1.0 + eps, 0.0],
                mass: 1.0,
                is_fixed: true,
            },
        ];
        let springs = vec![MeshSpring {
            a: 0,
            b: 1,
            rest_length: 1.0,
            spring_const: 1.0,
        }];
        let sys = SpringMeshSystem::from_parts(particles, springs, 0.1);
        let d = sys.derivative(&sys.rest_state()).unwrap();
        assert!((d.dp[0] - eps).abs() < 1e-12, "pull toward +x, got {}", d.dp[0]);
        assert!(d.dp[1].abs() < 1e-15);
        // Fixed particle stays put.
        assert_eq!(&d.dp[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn damping_survives_at_rest_positions() {
        let sys = SpringMeshSystem::standard();
        let mut state = sys.rest_state();
        // Find a non-fixed particle and give it unit x momentum.
        let idx = sys.particles.iter().position(|p| !p.is_fixed).unwrap();
        state.p[2 * idx] = 1.0;
        let d = sys.derivative(&state).unwrap();
        assert!((d.dp[2 * idx] + sys.vel_decay).abs() < 1e-12);
        assert!(d.dp[2 * idx + 1].abs() < 1e-12);
        assert_eq!(d.dq[2 * idx], 1.0);
    }

    #[test]
    fn coincident_particles_error() {
        let particles = vec![
            Particle {
                position0: [0.0, 0.0],
                mass: 1.0,
                is_fixed: false,
            },
            Particle {
                position0: [0.0, 0.0],
                mass: 1.0,
                is_fixed: false,
            },
        ];
        let springs = vec![MeshSpring {
            a: 0,
            b: 1,
            rest_length: 1.0,
            spring_const: 1.0,
        }];
        let sys = SpringMeshSystem::from_parts(particles, springs, 0.0);
        let err = sys.derivative(&sys.rest_state()).unwrap_err();
        assert_eq!(err, SystemError::CoincidentParticles { a: 0, b: 1 });
    }

    #[test]
    fn forces_are_equal_and_opposite() {
        // Free-floating mesh without damping: the total momentum derivative
        // vanishes for any configuration.
        let sys = SpringMeshSystem::grid(4, 4, false, 0.0);
        let mut state = sys.rest_state();
        for (i, v) in state.q.iter_mut().enumerate() {
            *v += ((i * 2654435761) % 1000) as f64 / 1000.0 * 0.3 - 0.15;
        }
        let d = sys.derivative(&state).unwrap();
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..sys.n_particles() {
            sx += d.dp[2 * i];
            sy += d.dp[2 * i + 1];
        }
        assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12, "net force ({sx}, {sy})");
    }

    #[test]
    fn standard_mesh_counts() {
        let sys = SpringMeshSystem::standard();
        assert_eq!(sys.n_particles(), 100);
        // 2*9*10 axis-aligned + 2*81 diagonals.
        assert_eq!(sys.springs.len(), 180 + 162);
        assert_eq!(sys.fixed_mask().iter().filter(|f| **f).count(), 10);
        // Spring list is duplicate-free as undirected pairs.
        let mut seen = std::collections::HashSet::new();
        for s in &sys.springs {
            let key = (s.a.min(s.b), s.a.max(s.b));
            assert!(seen.insert(key), "duplicate spring {key:?}");
        }
        assert_eq!(sys.grid_edges_directed().len(), 2 * 180);
    }

    #[test]
    fn diagonal_rest_lengths() {
        let sys = SpringMeshSystem::standard();
        for s in &sys.springs {
            let expect_axis = (s.rest_length - 1.0).abs() < 1e-15;
            let expect_diag = (s.rest_length - std::f64::consts::SQRT_2).abs() < 1e-15;
            assert!(expect_axis || expect_diag);
        }
    }
}
