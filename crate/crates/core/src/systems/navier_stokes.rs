//! Navier-Stokes scene construction: obstacle sampling with margins, the
//! inflow boundary profile, the regular sampling grid, and the scene job
//! document consumed by an external finite-element solver. The flow solve
//! itself is never performed here; trajectories are ingested from solver
//! output files.

use super::SystemError;
use crate::domain::TimeGrid;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const DOMAIN_WIDTH: f64 = 2.2;
pub const DOMAIN_HEIGHT: f64 = 0.41;
/// Required clearance between an obstacle surface and the left/right walls.
pub const SIDE_MARGIN: f64 = 0.25;
/// Required clearance between an obstacle surface and the top/bottom walls.
pub const TOP_BOTTOM_MARGIN: f64 = 0.05;
/// Required surface-to-surface gap between obstacles.
pub const OBSTACLE_GAP: f64 = 0.05;

const OBSTACLE_ATTEMPTS: usize = 1_000;
const SCENE_RESTARTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// One flow problem: a rectangular channel with circular obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct NavierStokesScene {
    pub obstacles: Vec<Obstacle>,
    pub viscosity: f64,
    pub in_velocity: f64,
    pub grid_resolution: f64,
}

impl NavierStokesScene {
    pub fn new(obstacles: Vec<Obstacle>, viscosity: f64, in_velocity: f64) -> Self {
        Self {
            obstacles,
            viscosity,
            in_velocity,
            grid_resolution: 0.01,
        }
    }

    /// Check the margin invariants for every obstacle and pair.
    pub fn margin_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            let [cx, cy] = o.center;
            if cx - o.radius < SIDE_MARGIN || cx + o.radius > DOMAIN_WIDTH - SIDE_MARGIN {
                out.push(format!("obstacle {i} violates side margins"));
            }
            if cy - o.radius < TOP_BOTTOM_MARGIN
                || cy + o.radius > DOMAIN_HEIGHT - TOP_BOTTOM_MARGIN
            {
                out.push(format!("obstacle {i} violates top/bottom margins"));
            }
        }
        for i in 0..self.obstacles.len() {
            for j in (i + 1)..self.obstacles.len() {
                let a = &self.obstacles[i];
                let b = &self.obstacles[j];
                let dx = a.center[0] - b.center[0];
                let dy = a.center[1] - b.center[1];
                let dist = (dx * dx + dy * dy).sqrt();
                if dist < a.radius + b.radius + OBSTACLE_GAP {
                    out.push(format!("obstacles {i} and {j} closer than the gap"));
                }
            }
        }
        out
    }
}

/// Rejection-sample `count` obstacles satisfying all margin invariants.
///
/// Each obstacle draws a radius uniformly from `radius_range`, then a center
/// uniformly from the margin-shrunk box; a draw conflicting with an already
/// placed obstacle is discarded and retried. After 1,000 failed attempts for
/// one obstacle the whole scene restarts; after 100 restarts sampling fails.
pub fn sample_obstacles(
    rng: &mut ChaCha12Rng,
    count: usize,
    radius_range: (f64, f64),
) -> Result<Vec<Obstacle>, SystemError> {
    assert!(
        radius_range.0 > 0.0 && radius_range.1 >= radius_range.0,
        "radius range must be positive and ordered"
    );
    for _restart in 0..SCENE_RESTARTS {
        if let Some(obstacles) = try_sample_scene(rng, count, radius_range) {
            return Ok(obstacles);
        }
    }
    Err(SystemError::SamplingExhausted {
        scene_restarts: SCENE_RESTARTS,
    })
}

fn try_sample_scene(
    rng: &mut ChaCha12Rng,
    count: usize,
    radius_range: (f64, f64),
) -> Option<Vec<Obstacle>> {
    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(count);
    'next_obstacle: for _ in 0..count {
        for _ in 0..OBSTACLE_ATTEMPTS {
            let radius = if radius_range.0 == radius_range.1 {
                radius_range.0
            } else {
                rng.gen_range(radius_range.0..radius_range.1)
            };
            let x_lo = SIDE_MARGIN + radius;
            let x_hi = DOMAIN_WIDTH - SIDE_MARGIN - radius;
            let y_lo = TOP_BOTTOM_MARGIN + radius;
            let y_hi = DOMAIN_HEIGHT - TOP_BOTTOM_MARGIN - radius;
            if x_lo >= x_hi || y_lo >= y_hi {
                continue;
            }
            let center = [rng.gen_range(x_lo..x_hi), rng.gen_range(y_lo..y_hi)];
            let ok = obstacles.iter().all(|o| {
                let dx = o.center[0] - center[0];
                let dy = o.center[1] - center[1];
                let dist = (dx * dx + dy * dy).sqrt();
                dist >= o.radius + radius + OBSTACLE_GAP
            });
            if ok {
                obstacles.push(Obstacle { center, radius });
                continue 'next_obstacle;
            }
        }
        return None;
    }
    Some(obstacles)
}

/// Velocity prescribed on the left boundary:
/// `(6 (1 - e^{-5t}) (0.41 - y) y / 0.1681, 0)`.
pub fn inflow_profile(y: f64, t: f64) -> [f64; 2] {
    let ramp = 1.0 - (-5.0 * t).exp();
    [6.0 * ramp * (DOMAIN_HEIGHT - y) * y / 0.1681, 0.0]
}

#[derive(Debug, Error)]
pub enum SceneDocError {
    #[error("scene document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scene document is missing field `{0}`")]
    MissingField(&'static str),
    #[error("scene document field `{0}` has the wrong type")]
    BadField(&'static str),
}

/// Emit the solver job document for a scene: a JSON object with the keys
/// `mesh`, `viscosity`, `in_velocity`, `num_time_steps`, `time_step_size`.
/// Emitting, parsing, and emitting again is byte-identical.
pub fn emit_solver_scene(scene: &NavierStokesScene, grid: &TimeGrid) -> String {
    let mesh: Vec<Value> = scene
        .obstacles
        .iter()
        .map(|o| {
            let mut m = Map::new();
            m.insert("radius".into(), json!(o.radius));
            m.insert("center".into(), json!([o.center[0], o.center[1]]));
            Value::Object(m)
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("mesh".into(), Value::Array(mesh));
    doc.insert("viscosity".into(), json!(scene.viscosity));
    doc.insert("in_velocity".into(), json!(scene.in_velocity));
    doc.insert("num_time_steps".into(), json!(grid.count));
    doc.insert("time_step_size".into(), json!(grid.step));
    let mut out = serde_json::to_string_pretty(&Value::Object(doc)).expect("static document");
    out.push('\n');
    out
}

/// Parse a solver job document back into a scene and its time grid. The
/// sampling-grid resolution is not part of the document and defaults to 0.01.
pub fn parse_solver_scene(doc: &str) -> Result<(NavierStokesScene, TimeGrid), SceneDocError> {
    let value: Value = serde_json::from_str(doc)?;
    let obj = value
        .as_object()
        .ok_or(SceneDocError::BadField("document"))?;
    let mesh = obj
        .get("mesh")
        .ok_or(SceneDocError::MissingField("mesh"))?
        .as_array()
        .ok_or(SceneDocError::BadField("mesh"))?;
    let mut obstacles = Vec::with_capacity(mesh.len());
    for entry in mesh {
        let radius = entry
            .get("radius")
            .and_then(Value::as_f64)
            .ok_or(SceneDocError::BadField("mesh.radius"))?;
        let center = entry
            .get("center")
            .and_then(Value::as_array)
            .ok_or(SceneDocError::BadField("mesh.center"))?;
        if center.len() != 2 {
            return Err(SceneDocError::BadField("mesh.center"));
        }
        let cx = center[0]
            .as_f64()
            .ok_or(SceneDocError::BadField("mesh.center"))?;
        let cy = center[1]
            .as_f64()
            .ok_or(SceneDocError::BadField("mesh.center"))?;
        obstacles.push(Obstacle {
            center: [cx, cy],
            radius,
        });
    }
    let viscosity = obj
        .get("viscosity")
        .and_then(Value::as_f64)
        .ok_or(SceneDocError::MissingField("viscosity"))?;
    let in_velocity = obj
        .get("in_velocity")
        .and_then(Value::as_f64)
        .ok_or(SceneDocError::MissingField("in_velocity"))?;
    let count = obj
        .get("num_time_steps")
        .and_then(Value::as_u64)
        .ok_or(SceneDocError::MissingField("num_time_steps"))?;
    let step = obj
        .get("time_step_size")
        .and_then(Value::as_f64)
        .ok_or(SceneDocError::MissingField("time_step_size"))?;
    let grid = TimeGrid::new(step, count as usize, 1)
        .map_err(|_| SceneDocError::BadField("time_step_size"))?;
    Ok((NavierStokesScene::new(obstacles, viscosity, in_velocity), grid))
}

/// The regular grid on which solver solutions are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsGrid {
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
}

impl NsGrid {
    pub fn from_resolution(resolution: f64) -> Self {
        assert!(resolution > 0.0);
        let nx = (DOMAIN_WIDTH / resolution).round() as usize + 1;
        let ny = (DOMAIN_HEIGHT / resolution).round() as usize + 1;
        Self { resolution, nx, ny }
    }

    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    /// Vertex coordinates in storage order: y-major rows, x fastest.
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.n_points());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push([ix as f64 * self.resolution, iy as f64 * self.resolution]);
            }
        }
        out
    }

    /// Directed axis-aligned neighbor edges (each pair in both orders).
    pub fn directed_edges(&self) -> Vec<[i64; 2]> {
        let index = |ix: usize, iy: usize| (iy * self.nx + ix) as i64;
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if ix + 1 < self.nx {
                    out.push([index(ix, iy), index(ix + 1, iy)]);
                    out.push([index(ix + 1, iy), index(ix, iy)]);
                }
                if iy + 1 < self.ny {
                    out.push([index(ix, iy), index(ix, iy + 1)]);
                    out.push([index(ix, iy + 1), index(ix, iy)]);
                }
            }
        }
        out
    }

    /// True for grid points on the domain boundary.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.n_points());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(ix == 0 || ix + 1 == self.nx || iy == 0 || iy + 1 == self.ny);
            }
        }
        out
    }

    /// True for grid points inside (or on) any obstacle.
    pub fn obstacle_mask(&self, scene: &NavierStokesScene) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.n_points());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let x = ix as f64 * self.resolution;
                let y = iy as f64 * self.resolution;
                let inside = scene.obstacles.iter().any(|o| {
                    let dx = x - o.center[0];
                    let dy = y - o.center[1];
                    dx * dx + dy * dy <= o.radius * o.radius
                });
                out.push(inside);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_obstacle_respects_margins() {
        let mut r = rng(7);
        let obstacles = sample_obstacles(&mut r, 1, (0.05, 0.1)).unwrap();
        assert_eq!(obstacles.len(), 1);
        let o = &obstacles[0];
        assert!(o.center[0] >= SIDE_MARGIN + o.radius);
        assert!(o.center[0] <= DOMAIN_WIDTH - SIDE_MARGIN - o.radius);
        assert!(o.center[1] >= TOP_BOTTOM_MARGIN + o.radius);
        assert!(o.center[1] <= DOMAIN_HEIGHT - TOP_BOTTOM_MARGIN - o.radius);
    }

    #[test]
    fn four_obstacles_keep_pairwise_gap() {
        let mut r = rng(11);
        for _ in 0..50 {
            let obstacles = sample_obstacles(&mut r, 4, (0.025, 0.05)).unwrap();
            assert_eq!(obstacles.len(), 4);
            let scene = NavierStokesScene::new(obstacles, 0.001, 1.5);
            assert!(scene.margin_violations().is_empty());
        }
    }

    #[test]
    fn margin_invariants_hold_over_many_draws() {
        // 10^4 draws across both configurations.
        let mut r = rng(23);
        for i in 0..10_000 {
            let count = if i % 2 == 0 { 1 } else { 4 };
            let range = if i % 2 == 0 { (0.05, 0.1) } else { (0.025, 0.05) };
            let obstacles = sample_obstacles(&mut r, count, range).unwrap();
            let scene = NavierStokesScene::new(obstacles, 0.001, 1.5);
            let violations = scene.margin_violations();
            assert!(violations.is_empty(), "draw {i}: {violations:?}");
        }
    }

    #[test]
    fn infeasible_geometry_exhausts() {
        let mut r = rng(3);
        let err = sample_obstacles(&mut r, 1, (0.3, 0.4)).unwrap_err();
        assert!(matches!(err, SystemError::SamplingExhausted { .. }));
    }

    #[test]
    fn inflow_profile_values() {
        assert_eq!(inflow_profile(0.0, 3.0), [0.0, 0.0]);
        assert_eq!(inflow_profile(DOMAIN_HEIGHT, 3.0), [0.0, 0.0]);
        assert_eq!(inflow_profile(0.2, 0.0), [0.0, 0.0]);
        // Centerline limit as t -> infinity: 6 * 0.205^2 / 0.1681 = 1.5.
        let v = inflow_profile(0.205, 1e9);
        assert!((v[0] - 1.5).abs() < 1e-12);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn scene_document_round_trips() {
        let scene = NavierStokesScene::new(
            vec![Obstacle {
                center: [1.1, 0.2],
                radius: 0.07,
            }],
            0.001,
            1.5,
        );
        let grid = TimeGrid::new(0.08, 65, 1).unwrap();
        let doc = emit_solver_scene(&scene, &grid);
        assert!(doc.contains("\"mesh\""));
        assert!(doc.contains("\"radius\""));
        let (parsed, parsed_grid) = parse_solver_scene(&doc).unwrap();
        assert_eq!(parsed.obstacles, scene.obstacles);
        assert_eq!(parsed_grid, grid);
        let doc2 = emit_solver_scene(&parsed, &parsed_grid);
        assert_eq!(doc, doc2, "emit -> parse -> emit must be byte-identical");
    }

    #[test]
    fn empty_obstacle_list_is_valid() {
        let scene = NavierStokesScene::new(vec![], 0.001, 1.5);
        let grid = TimeGrid::new(0.08, 65, 1).unwrap();
        let doc = emit_solver_scene(&scene, &grid);
        let (parsed, _) = parse_solver_scene(&doc).unwrap();
        assert!(parsed.obstacles.is_empty());
    }

    #[test]
    fn standard_grid_has_expected_point_count() {
        let grid = NsGrid::from_resolution(0.01);
        assert_eq!((grid.nx, grid.ny), (221, 42));
        assert_eq!(grid.n_points(), 9282);
        assert_eq!(grid.vertices().len(), 9282);
        let boundary = grid.boundary_mask();
        let count = boundary.iter().filter(|b| **b).count();
        assert_eq!(count, 2 * 221 + 2 * 42 - 4);
    }

    #[test]
    fn obstacle_mask_marks_interior_points() {
        let grid = NsGrid::from_resolution(0.01);
        let scene = NavierStokesScene::new(
            vec![Obstacle {
                center: [1.0, 0.2],
                radius: 0.05,
            }],
            0.001,
            1.5,
        );
        let mask = grid.obstacle_mask(&scene);
        let inside = mask.iter().filter(|b| **b).count();
        // Roughly pi r^2 / res^2 = ~78 points.
        assert!(inside > 50 && inside < 110, "got {inside}");
        // Center point itself must be flagged.
        let ix = 100;
        let iy = 20;
        assert!(mask[iy * grid.nx + ix]);
    }
}
