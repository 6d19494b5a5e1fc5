//! Ingestion of externally produced Navier-Stokes trajectories: velocity and
//! pressure fields sampled on the regular scene grid, one snapshot per stored
//! time step. Time derivatives are approximated from neighboring snapshots
//! (central differences in the interior, one-sided second order at the
//! endpoints) and the stencil choice is recorded in the bundle metadata.

use super::npy::NdArray;
use super::npz::read_npz_file;
use super::{DatasetBundle, DatasetError, TrajectoryEntry};
use crate::domain::TimeGrid;
use crate::systems::{NavierStokesScene, NsGrid, SystemKind};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::Path;

const STENCIL_NOTE: &str = "central interior, one-sided second order at endpoints";

/// Velocity and pressure snapshots from one external solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct NsSolverOutput {
    /// Shape `(N_t, N_p, 2)`.
    pub solutions: NdArray,
    /// Shape `(N_t, N_p)`.
    pub pressures: NdArray,
}

/// Load solver output from an NPZ file holding `solutions` and `pressures`
/// records.
pub fn read_ns_solver_output(path: &Path) -> Result<NsSolverOutput, DatasetError> {
    let mut records = read_npz_file(path)?;
    let solutions = records
        .remove("solutions")
        .ok_or_else(|| DatasetError::MalformedMeta(format!("{path:?} lacks a solutions record")))?;
    let pressures = records
        .remove("pressures")
        .ok_or_else(|| DatasetError::MalformedMeta(format!("{path:?} lacks a pressures record")))?;
    Ok(NsSolverOutput {
        solutions,
        pressures,
    })
}

/// Finite-difference time derivative of `(nt, width)` row-major data.
fn time_derivative(data: &[f64], nt: usize, width: usize, dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    if nt < 2 {
        return out;
    }
    let row = |k: usize| &data[k * width..(k + 1) * width];
    if nt == 2 {
        for j in 0..width {
            let d = (row(1)[j] - row(0)[j]) / dt;
            out[j] = d;
            out[width + j] = d;
        }
        return out;
    }
    for j in 0..width {
        out[j] = (-3.0 * row(0)[j] + 4.0 * row(1)[j] - row(2)[j]) / (2.0 * dt);
        out[(nt - 1) * width + j] =
            (3.0 * row(nt - 1)[j] - 4.0 * row(nt - 2)[j] + row(nt - 3)[j]) / (2.0 * dt);
    }
    for k in 1..nt - 1 {
        for j in 0..width {
            out[k * width + j] = (row(k + 1)[j] - row(k - 1)[j]) / (2.0 * dt);
        }
    }
    out
}

fn check_output(
    scene: &NavierStokesScene,
    output: &NsSolverOutput,
    grid: &TimeGrid,
    ns_grid: &NsGrid,
) -> Result<(), DatasetError> {
    let np = ns_grid.n_points();
    let sol_shape = output.solutions.shape();
    if sol_shape.len() != 3 || sol_shape[2] != 2 {
        return Err(DatasetError::GridMismatch(format!(
            "solutions must have shape (N_t, N_p, 2), got {sol_shape:?}"
        )));
    }
    let pres_shape = output.pressures.shape();
    if pres_shape.len() != 2 {
        return Err(DatasetError::GridMismatch(format!(
            "pressures must have shape (N_t, N_p), got {pres_shape:?}"
        )));
    }
    if sol_shape[1] != np || pres_shape[1] != np {
        return Err(DatasetError::GridMismatch(format!(
            "solver output has {} points but the scene grid at resolution {} has {np}",
            sol_shape[1], scene.grid_resolution
        )));
    }
    if sol_shape[0] != grid.count || pres_shape[0] != grid.count {
        return Err(DatasetError::MissingSnapshots {
            expected: grid.count,
            got: sol_shape[0].min(pres_shape[0]),
        });
    }
    if output.solutions.as_f64s().is_none() || output.pressures.as_f64s().is_none() {
        return Err(DatasetError::GridMismatch(
            "solver output records must be float64".to_string(),
        ));
    }
    Ok(())
}

/// Build a Navier-Stokes dataset bundle from per-scene solver outputs.
pub fn ingest_external_ns(
    inputs: &[(NavierStokesScene, NsSolverOutput)],
    grid: &TimeGrid,
) -> Result<DatasetBundle, DatasetError> {
    let resolution = inputs
        .first()
        .map(|(scene, _)| scene.grid_resolution)
        .unwrap_or(0.01);
    for (scene, _) in inputs {
        if scene.grid_resolution != resolution {
            return Err(DatasetError::GridMismatch(
                "all scenes in one bundle must share a grid resolution".to_string(),
            ));
        }
    }
    let ns_grid = NsGrid::from_resolution(resolution);
    let np = ns_grid.n_points();

    let mut records = BTreeMap::new();
    let vertices = ns_grid.vertices();
    records.insert(
        "vertices".to_string(),
        NdArray::f64(vec![np, 2], vertices.iter().flat_map(|v| [v[0], v[1]]).collect()),
    );
    let edges = ns_grid.directed_edges();
    let mut edge_data = Vec::with_capacity(2 * edges.len());
    edge_data.extend(edges.iter().map(|e| e[0]));
    edge_data.extend(edges.iter().map(|e| e[1]));
    records.insert(
        "edge_indices".to_string(),
        NdArray::i64(vec![2, edges.len()], edge_data),
    );
    let boundary = ns_grid.boundary_mask();

    let mut entries = Vec::with_capacity(inputs.len());
    let mut defs = Vec::with_capacity(inputs.len());
    for (i, (scene, output)) in inputs.iter().enumerate() {
        check_output(scene, output, grid, &ns_grid)?;
        let name = format!("traj{i:05}");
        let nt = grid.count;
        let solutions = output.solutions.as_f64s().expect("checked above");
        let pressures = output.pressures.as_f64s().expect("checked above");

        let grads = time_derivative(solutions, nt, np * 2, grid.step);
        let pressures_grads = time_derivative(pressures, nt, np, grid.step);
        let t: Vec<f64> = (0..nt).map(|k| grid.time_at(k)).collect();

        let obstacle = ns_grid.obstacle_mask(scene);
        let fixed: Vec<bool> = boundary
            .iter()
            .zip(&obstacle)
            .map(|(b, o)| *b || *o)
            .collect();
        let fixed_solutions: Vec<bool> = fixed.iter().flat_map(|f| [*f, *f]).collect();
        let extra: Vec<bool> = fixed
            .iter()
            .zip(&obstacle)
            .flat_map(|(f, o)| [*f, *o])
            .collect();

        let mut insert = |suffix: &str, arr: NdArray| -> String {
            let record = format!("{name}_{suffix}");
            records.insert(record.clone(), arr);
            record
        };
        let sol_rec = insert("solutions", output.solutions.clone());
        let pres_rec = insert("pressures", output.pressures.clone());
        let grads_rec = insert("grads", NdArray::f64(vec![nt, np, 2], grads));
        let pgrads_rec = insert("pressures_grads", NdArray::f64(vec![nt, np], pressures_grads));
        let t_rec = insert("t", NdArray::f64(vec![nt], t));
        let fixed_rec = insert("fixed_mask", NdArray::bool(vec![np], fixed.clone()));
        let fixed_sol_rec = insert(
            "fixed_mask_solutions",
            NdArray::bool(vec![np, 2], fixed_solutions),
        );
        let fixed_pres_rec = insert("fixed_mask_pressures", NdArray::bool(vec![np], fixed));
        let extra_rec = insert("extra_fixed_mask", NdArray::bool(vec![np, 2], extra));

        let field_keys = vec![
            ("solutions".to_string(), sol_rec.clone()),
            ("pressures".to_string(), pres_rec.clone()),
            ("grads".to_string(), grads_rec.clone()),
            ("pressures_grads".to_string(), pgrads_rec.clone()),
            ("t".to_string(), t_rec),
            ("q".to_string(), pres_rec),
            ("p".to_string(), sol_rec),
            ("dqdt".to_string(), pgrads_rec),
            ("dpdt".to_string(), grads_rec),
            ("edge_indices".to_string(), "edge_indices".to_string()),
            ("vertices".to_string(), "vertices".to_string()),
            ("fixed_mask".to_string(), fixed_rec.clone()),
            ("fixed_mask_solutions".to_string(), fixed_sol_rec.clone()),
            ("fixed_mask_pressures".to_string(), fixed_pres_rec.clone()),
            ("fixed_mask_q".to_string(), fixed_pres_rec),
            ("fixed_mask_p".to_string(), fixed_sol_rec),
            ("extra_fixed_mask".to_string(), extra_rec),
        ];

        let mesh: Vec<Value> = scene
            .obstacles
            .iter()
            .map(|o| {
                let mut obj = Map::new();
                obj.insert("radius".into(), json!(o.radius));
                obj.insert("center".into(), json!([o.center[0], o.center[1]]));
                Value::Object(obj)
            })
            .collect();
        let mut def = Map::new();
        def.insert("num_time_steps".into(), json!(grid.count));
        def.insert("time_step_size".into(), json!(grid.step));
        def.insert("subsample".into(), json!(grid.subsample));
        def.insert("viscosity".into(), json!(scene.viscosity));
        def.insert("in_velocity".into(), json!(scene.in_velocity));
        def.insert("mesh".into(), Value::Array(mesh));
        defs.push(Value::Object(def));

        let mut extras = Map::new();
        extras.insert("in_velocity".into(), json!(scene.in_velocity));
        extras.insert("viscosity".into(), json!(scene.viscosity));
        entries.push(TrajectoryEntry {
            name,
            num_time_steps: grid.count,
            time_step_size: grid.step,
            extras,
            traj_gen_time: 0.0,
            field_keys,
        });
    }

    let mut system_args = Map::new();
    system_args.insert("grid_resolution".into(), json!(resolution));
    system_args.insert("trajectory_defs".into(), Value::Array(defs));
    let mut metadata = Map::new();
    metadata.insert("grid_resolution".into(), json!(resolution));
    if let Some((scene, _)) = inputs.first() {
        metadata.insert("viscosity".into(), json!(scene.viscosity));
    }
    metadata.insert("time_derivative_stencil".into(), json!(STENCIL_NOTE));

    Ok(DatasetBundle {
        system: SystemKind::NavierStokes,
        system_args: Value::Object(system_args),
        metadata: Value::Object(metadata),
        trajectories: entries,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::validate_bundle;
    use crate::systems::Obstacle;

    fn scene() -> NavierStokesScene {
        NavierStokesScene::new(
            vec![Obstacle {
                center: [1.0, 0.2],
                radius: 0.06,
            }],
            0.001,
            1.5,
        )
    }

    fn output_with(f: impl Fn(usize, usize) -> f64, nt: usize, np: usize) -> NsSolverOutput {
        let mut sol = Vec::with_capacity(nt * np * 2);
        let mut pres = Vec::with_capacity(nt * np);
        for k in 0..nt {
            for j in 0..np {
                sol.push(f(k, j));
                sol.push(-f(k, j));
                pres.push(2.0 * f(k, j));
            }
        }
        NsSolverOutput {
            solutions: NdArray::f64(vec![nt, np, 2], sol),
            pressures: NdArray::f64(vec![nt, np], pres),
        }
    }

    #[test]
    fn constant_fields_have_zero_grads() {
        let grid = TimeGrid::new(0.08, 4, 1).unwrap();
        let np = NsGrid::from_resolution(0.01).n_points();
        let output = output_with(|_, j| j as f64 * 0.001, 4, np);
        let bundle = ingest_external_ns(&[(scene(), output)], &grid).unwrap();
        let grads = bundle.channel(0, "grads").unwrap().as_f64s().unwrap();
        assert!(grads.iter().all(|g| g.abs() < 1e-12));
        let violations = validate_bundle(&bundle);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn linear_fields_have_exact_grads() {
        let grid = TimeGrid::new(0.08, 5, 1).unwrap();
        let np = NsGrid::from_resolution(0.01).n_points();
        // u(t, j) = a_j * t with a_j varying by point.
        let output = output_with(|k, j| (j % 7) as f64 * 0.25 * (k as f64 * 0.08), 5, np);
        let bundle = ingest_external_ns(&[(scene(), output)], &grid).unwrap();
        let grads = bundle.channel(0, "grads").unwrap().as_f64s().unwrap();
        for (idx, g) in grads.iter().enumerate() {
            let j = (idx / 2) % np;
            let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
            let want = sign * (j % 7) as f64 * 0.25;
            assert!(
                (g - want).abs() < 1e-9,
                "grad {idx}: {g} vs {want} (central and one-sided are exact on linear data)"
            );
        }
    }

    #[test]
    fn t_channel_spans_the_table_grid() {
        let grid = TimeGrid::new(0.08, 65, 1).unwrap();
        let np = NsGrid::from_resolution(0.01).n_points();
        let output = output_with(|k, _| k as f64, 65, np);
        let bundle = ingest_external_ns(&[(scene(), output)], &grid).unwrap();
        let t = bundle.channel(0, "t").unwrap().as_f64s().unwrap();
        assert_eq!(t.len(), 65);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1], 0.08);
        assert!((t[64] - 5.12).abs() < 1e-12);
    }

    #[test]
    fn aliases_and_masks_are_wired() {
        let grid = TimeGrid::new(0.08, 3, 1).unwrap();
        let np = NsGrid::from_resolution(0.01).n_points();
        let output = output_with(|k, j| (k + j) as f64, 3, np);
        let bundle = ingest_external_ns(&[(scene(), output)], &grid).unwrap();
        let entry = &bundle.trajectories[0];
        assert_eq!(entry.record_name("q"), entry.record_name("pressures"));
        assert_eq!(entry.record_name("p"), entry.record_name("solutions"));
        assert_eq!(entry.record_name("dqdt"), entry.record_name("pressures_grads"));
        assert_eq!(entry.record_name("dpdt"), entry.record_name("grads"));

        let extra = bundle.channel(0, "extra_fixed_mask").unwrap();
        assert_eq!(extra.shape(), &[np, 2]);
        let extra_bools = extra.as_bools().unwrap();
        let fixed = bundle.channel(0, "fixed_mask").unwrap().as_bools().unwrap();
        // Sub-channel 0 is boundary ∪ obstacle, sub-channel 1 obstacle only.
        let mut any_obstacle = false;
        for j in 0..np {
            assert_eq!(extra_bools[2 * j], fixed[j]);
            if extra_bools[2 * j + 1] {
                any_obstacle = true;
                assert!(extra_bools[2 * j], "obstacle points are fixed points");
            }
        }
        assert!(any_obstacle);
    }

    #[test]
    fn snapshot_count_mismatch_is_reported() {
        let grid = TimeGrid::new(0.08, 10, 1).unwrap();
        let np = NsGrid::from_resolution(0.01).n_points();
        let output = output_with(|k, _| k as f64, 4, np);
        let err = ingest_external_ns(&[(scene(), output)], &grid).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::MissingSnapshots { expected: 10, got: 4 }
        ));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let grid = TimeGrid::new(0.08, 3, 1).unwrap();
        let output = output_with(|k, _| k as f64, 3, 100);
        let err = ingest_external_ns(&[(scene(), output)], &grid).unwrap_err();
        assert!(matches!(err, DatasetError::GridMismatch(_)));
    }
}
