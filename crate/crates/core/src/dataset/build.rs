//! Bundle construction from generated trajectories, and reconstruction of
//! system dynamics from a stored bundle. Static geometry records (masks,
//! masses, edges) are stored once and shared by every trajectory's
//! `field_keys`.

use super::npy::NdArray;
use super::{DatasetBundle, DatasetError, TrajectoryEntry};
use crate::domain::Trajectory;
use crate::sampling::WavePulse;
use crate::systems::{MeshSpring, Particle, SpringMeshSystem, SystemKind, WaveSystem};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;

fn traj_name(i: usize) -> String {
    format!("traj{i:05}")
}

fn flatten(parts: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut out = Vec::new();
    for part in parts {
        out.extend_from_slice(&part);
    }
    out
}

/// Insert the four state channels plus `t` for one trajectory and return the
/// field-key pairs.
fn state_records(
    records: &mut BTreeMap<String, NdArray>,
    name: &str,
    traj: &Trajectory,
    snapshot_shape: &[usize],
) -> Vec<(String, String)> {
    let nt = traj.states.len();
    let mut shape = vec![nt];
    shape.extend_from_slice(snapshot_shape);

    let q = flatten(traj.states.iter().map(|s| s.q.clone()));
    let p = flatten(traj.states.iter().map(|s| s.p.clone()));
    let dq = flatten(traj.derivatives.iter().map(|d| d.dq.clone()));
    let dp = flatten(traj.derivatives.iter().map(|d| d.dp.clone()));
    let t: Vec<f64> = (0..nt).map(|k| traj.grid.time_at(k)).collect();

    let mut keys = Vec::new();
    for (channel, data, chan_shape) in [
        ("q", q, shape.clone()),
        ("p", p, shape.clone()),
        ("dqdt", dq, shape.clone()),
        ("dpdt", dp, shape),
        ("t", t, vec![nt]),
    ] {
        let record = format!("{name}_{channel}");
        records.insert(record.clone(), NdArray::f64(chan_shape, data));
        keys.push((channel.to_string(), record));
    }
    keys
}

fn base_def(traj: &Trajectory) -> Map<String, Value> {
    let mut def = Map::new();
    def.insert("num_time_steps".into(), json!(traj.grid.count));
    def.insert("time_step_size".into(), json!(traj.grid.step));
    def.insert("subsample".into(), json!(traj.grid.subsample));
    def
}

/// Build a spring dataset: per-trajectory state channels only, scalar
/// initial conditions recorded in `trajectory_defs`.
pub fn build_spring_bundle(trajs: &[Trajectory]) -> DatasetBundle {
    let mut records = BTreeMap::new();
    let mut entries = Vec::with_capacity(trajs.len());
    let mut defs = Vec::with_capacity(trajs.len());
    for (i, traj) in trajs.iter().enumerate() {
        let name = traj_name(i);
        let field_keys = state_records(&mut records, &name, traj, &[1]);
        let mut def = base_def(traj);
        let mut ic = Map::new();
        ic.insert("q".into(), json!(traj.states[0].q[0]));
        ic.insert("p".into(), json!(traj.states[0].p[0]));
        def.insert("initial_condition".into(), Value::Object(ic));
        defs.push(Value::Object(def));
        entries.push(TrajectoryEntry {
            name,
            num_time_steps: traj.grid.count,
            time_step_size: traj.grid.step,
            extras: Map::new(),
            traj_gen_time: traj.gen_time_seconds,
            field_keys,
        });
    }
    let mut system_args = Map::new();
    system_args.insert("trajectory_defs".into(), Value::Array(defs));
    let mut metadata = Map::new();
    metadata.insert("n_grid".into(), json!(1));
    DatasetBundle {
        system: SystemKind::Spring,
        system_args: Value::Object(system_args),
        metadata: Value::Object(metadata),
        trajectories: entries,
        records,
    }
}

/// Build a wave dataset. `pulses` are the per-trajectory starting-pulse
/// parameters, in the same order as `trajs`.
pub fn build_wave_bundle(
    system: &WaveSystem,
    pulses: &[WavePulse],
    trajs: &[Trajectory],
) -> DatasetBundle {
    assert_eq!(pulses.len(), trajs.len());
    let mut records = BTreeMap::new();
    let mut entries = Vec::with_capacity(trajs.len());
    let mut defs = Vec::with_capacity(trajs.len());
    for (i, (traj, pulse)) in trajs.iter().zip(pulses).enumerate() {
        let name = traj_name(i);
        let field_keys = state_records(&mut records, &name, traj, &[system.n_grid]);
        let mut def = base_def(traj);
        def.insert("wave_speed".into(), json!(system.wave_speed));
        def.insert("start_type".into(), json!("cubic_splines"));
        let mut args = Map::new();
        args.insert("height".into(), json!(pulse.height));
        args.insert("width".into(), json!(pulse.width));
        args.insert("position".into(), json!(pulse.position));
        def.insert("start_type_args".into(), Value::Object(args));
        defs.push(Value::Object(def));
        let mut extras = Map::new();
        extras.insert("wave_speed".into(), json!(system.wave_speed));
        entries.push(TrajectoryEntry {
            name,
            num_time_steps: traj.grid.count,
            time_step_size: traj.grid.step,
            extras,
            traj_gen_time: traj.gen_time_seconds,
            field_keys,
        });
    }
    let mut system_args = Map::new();
    system_args.insert("n_grid".into(), json!(system.n_grid));
    system_args.insert("space_max".into(), json!(system.space_max));
    system_args.insert("trajectory_defs".into(), Value::Array(defs));
    let mut metadata = Map::new();
    metadata.insert("n_grid".into(), json!(system.n_grid));
    metadata.insert("space_max".into(), json!(system.space_max));
    DatasetBundle {
        system: SystemKind::Wave,
        system_args: Value::Object(system_args),
        metadata: Value::Object(metadata),
        trajectories: entries,
        records,
    }
}

fn particles_json(system: &SpringMeshSystem, positions: &[[f64; 2]]) -> Value {
    let parts: Vec<Value> = system
        .particles
        .iter()
        .zip(positions)
        .map(|(part, pos)| {
            let mut obj = Map::new();
            obj.insert("is_fixed".into(), json!(part.is_fixed));
            obj.insert("mass".into(), json!(part.mass));
            obj.insert("position".into(), json!([pos[0], pos[1]]));
            Value::Object(obj)
        })
        .collect();
    Value::Array(parts)
}

fn springs_json(system: &SpringMeshSystem) -> Value {
    let springs: Vec<Value> = system
        .springs
        .iter()
        .map(|s| {
            let mut obj = Map::new();
            obj.insert("a".into(), json!(s.a));
            obj.insert("b".into(), json!(s.b));
            obj.insert("rest_length".into(), json!(s.rest_length));
            obj.insert("spring_const".into(), json!(s.spring_const));
            Value::Object(obj)
        })
        .collect();
    Value::Array(springs)
}

/// Build a spring-mesh dataset. The dynamics springs (including diagonals)
/// are recorded in `trajectory_defs`; the stored `edge_indices` channel
/// lists only the directed axis-aligned grid edges.
pub fn build_mesh_bundle(system: &SpringMeshSystem, trajs: &[Trajectory]) -> DatasetBundle {
    let n = system.n_particles();
    let mut records = BTreeMap::new();

    let edges = system.grid_edges_directed();
    let mut edge_data = Vec::with_capacity(2 * edges.len());
    edge_data.extend(edges.iter().map(|e| e[0]));
    edge_data.extend(edges.iter().map(|e| e[1]));
    records.insert(
        "edge_indices".to_string(),
        NdArray::i64(vec![2, edges.len()], edge_data),
    );
    records.insert(
        "masses".to_string(),
        NdArray::f64(vec![n], system.particles.iter().map(|p| p.mass).collect()),
    );
    let fixed = system.fixed_mask();
    records.insert("fixed_mask".to_string(), NdArray::bool(vec![n], fixed.clone()));
    let fixed_q: Vec<bool> = fixed.iter().flat_map(|f| [*f, *f]).collect();
    records.insert(
        "fixed_mask_q".to_string(),
        NdArray::bool(vec![n, 2], fixed_q),
    );

    let shared_keys = [
        ("edge_indices", "edge_indices"),
        ("masses", "masses"),
        ("fixed_mask", "fixed_mask"),
        ("fixed_mask_q", "fixed_mask_q"),
        ("fixed_mask_p", "fixed_mask_q"),
        ("extra_fixed_mask", "fixed_mask"),
    ];

    let mut entries = Vec::with_capacity(trajs.len());
    let mut defs = Vec::with_capacity(trajs.len());
    for (i, traj) in trajs.iter().enumerate() {
        let name = traj_name(i);
        let mut field_keys = state_records(&mut records, &name, traj, &[n, 2]);
        for (channel, record) in shared_keys {
            field_keys.push((channel.to_string(), record.to_string()));
        }
        let positions: Vec<[f64; 2]> = traj.states[0]
            .q
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        let mut def = base_def(traj);
        def.insert("particles".into(), particles_json(system, &positions));
        def.insert("springs".into(), springs_json(system));
        defs.push(Value::Object(def));
        entries.push(TrajectoryEntry {
            name,
            num_time_steps: traj.grid.count,
            time_step_size: traj.grid.step,
            extras: Map::new(),
            traj_gen_time: traj.gen_time_seconds,
            field_keys,
        });
    }

    let first_def_particles = defs
        .first()
        .and_then(|d| d.get("particles").cloned())
        .unwrap_or_else(|| {
            let rest: Vec<[f64; 2]> = system.particles.iter().map(|p| p.position0).collect();
            particles_json(system, &rest)
        });
    let mut metadata = Map::new();
    metadata.insert("edges".into(), springs_json(system));
    metadata.insert("particles".into(), first_def_particles);
    metadata.insert("n_dim".into(), json!(2));
    if let Some((w, _)) = system.grid_shape() {
        metadata.insert("n_grid".into(), json!(w));
    }
    metadata.insert("n_particles".into(), json!(n));
    metadata.insert("vel_decay".into(), json!(system.vel_decay));

    let mut system_args = Map::new();
    system_args.insert("vel_decay".into(), json!(system.vel_decay));
    system_args.insert("trajectory_defs".into(), Value::Array(defs));

    DatasetBundle {
        system: SystemKind::SpringMesh,
        system_args: Value::Object(system_args),
        metadata: Value::Object(metadata),
        trajectories: entries,
        records,
    }
}

/// Rebuild the dynamical system described by a bundle. Navier-Stokes bundles
/// carry no usable dynamics (the solve is external) and return `None`.
pub fn system_from_bundle(
    bundle: &DatasetBundle,
) -> Result<Option<Box<dyn crate::systems::Dynamics>>, DatasetError> {
    let defs = bundle
        .system_args
        .get("trajectory_defs")
        .and_then(Value::as_array);
    match bundle.system {
        SystemKind::Spring => Ok(Some(Box::new(crate::systems::SpringSystem))),
        SystemKind::Wave => {
            let n_grid = bundle
                .metadata
                .get("n_grid")
                .and_then(Value::as_u64)
                .ok_or_else(|| DatasetError::MalformedMeta("wave metadata missing n_grid".into()))?;
            let space_max = bundle
                .metadata
                .get("space_max")
                .and_then(Value::as_f64)
                .ok_or_else(|| DatasetError::MalformedMeta("wave metadata missing space_max".into()))?;
            let wave_speed = defs
                .and_then(|d| d.first())
                .and_then(|d| d.get("wave_speed"))
                .and_then(Value::as_f64)
                .ok_or_else(|| DatasetError::MalformedMeta("wave defs missing wave_speed".into()))?;
            Ok(Some(Box::new(WaveSystem::new(
                n_grid as usize,
                space_max,
                wave_speed,
            ))))
        }
        SystemKind::SpringMesh => {
            let vel_decay = bundle
                .system_args
                .get("vel_decay")
                .and_then(Value::as_f64)
                .ok_or_else(|| DatasetError::MalformedMeta("mesh args missing vel_decay".into()))?;
            let def = defs
                .and_then(|d| d.first())
                .ok_or_else(|| DatasetError::MalformedMeta("mesh bundle has no trajectory_defs".into()))?;
            let particles = def
                .get("particles")
                .and_then(Value::as_array)
                .ok_or_else(|| DatasetError::MalformedMeta("mesh def missing particles".into()))?
                .iter()
                .map(|p| {
                    let is_fixed = p.get("is_fixed").and_then(Value::as_bool)?;
                    let mass = p.get("mass").and_then(Value::as_f64)?;
                    let pos = p.get("position").and_then(Value::as_array)?;
                    Some(Particle {
                        position0: [pos.first()?.as_f64()?, pos.get(1)?.as_f64()?],
                        mass,
                        is_fixed,
                    })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| DatasetError::MalformedMeta("malformed mesh particles".into()))?;
            let springs = def
                .get("springs")
                .and_then(Value::as_array)
                .ok_or_else(|| DatasetError::MalformedMeta("mesh def missing springs".into()))?
                .iter()
                .map(|s| {
                    Some(MeshSpring {
                        a: s.get("a").and_then(Value::as_u64)? as usize,
                        b: s.get("b").and_then(Value::as_u64)? as usize,
                        rest_length: s.get("rest_length").and_then(Value::as_f64)?,
                        spring_const: s.get("spring_const").and_then(Value::as_f64)?,
                    })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| DatasetError::MalformedMeta("malformed mesh springs".into()))?;
            Ok(Some(Box::new(SpringMeshSystem::from_parts(
                particles, springs, vel_decay,
            ))))
        }
        SystemKind::NavierStokes => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::validate_bundle;
    use crate::domain::TimeGrid;
    use crate::integrators::{integrate, IntegratorKind};
    use crate::sampling::{MeshIcSource, WaveIcSource};
    use crate::systems::Dynamics;

    #[test]
    fn wave_bundle_validates_and_reports_aliases() {
        let system = WaveSystem::new(16, 1.0, 0.1);
        let mut src = WaveIcSource::in_distribution(4);
        let pulses = src.draw(2).to_vec();
        let grid = TimeGrid::new(0.1, 4, 2).unwrap();
        let trajs: Vec<_> = pulses
            .iter()
            .map(|p| {
                integrate(
                    &system,
                    IntegratorKind::Leapfrog,
                    &p.to_state(system.n_grid),
                    &grid,
                )
                .unwrap()
            })
            .collect();
        let bundle = build_wave_bundle(&system, &pulses, &trajs);
        assert!(validate_bundle(&bundle).is_empty());
        let q = bundle.channel(0, "q").unwrap();
        assert_eq!(q.shape(), &[4, 16]);
    }

    #[test]
    fn mesh_bundle_has_shared_static_records() {
        let system = SpringMeshSystem::grid(4, 4, true, 0.1);
        let mut src = MeshIcSource::in_distribution(5, &system);
        let states = src.draw_states(3, &system);
        let grid = TimeGrid::new(0.05, 3, 2).unwrap();
        let trajs: Vec<_> = states
            .iter()
            .map(|s| integrate(&system, IntegratorKind::Rk4, s, &grid).unwrap())
            .collect();
        let bundle = build_mesh_bundle(&system, &trajs);
        let violations = validate_bundle(&bundle);
        assert!(violations.is_empty(), "{violations:?}");

        // Aliased channels reference the same record.
        let e0 = &bundle.trajectories[0];
        assert_eq!(e0.record_name("fixed_mask_p"), e0.record_name("fixed_mask_q"));
        assert_eq!(e0.record_name("extra_fixed_mask"), e0.record_name("fixed_mask"));
        // Static geometry is shared across trajectories.
        assert_eq!(
            bundle.trajectories[0].record_name("edge_indices"),
            bundle.trajectories[1].record_name("edge_indices")
        );
        // Directed axis-aligned edges only: 2 * (2*3*4) for a 4x4 grid.
        let edges = bundle.channel(0, "edge_indices").unwrap();
        assert_eq!(edges.shape(), &[2, 48]);
        // int64 dtype per the channel table.
        assert_eq!(edges.dtype(), crate::dataset::Dtype::I64);
    }

    #[test]
    fn mesh_defs_record_perturbed_positions_and_diagonals() {
        let system = SpringMeshSystem::grid(3, 3, true, 0.1);
        let mut src = MeshIcSource::in_distribution(6, &system);
        let states = src.draw_states(1, &system);
        let grid = TimeGrid::new(0.05, 2, 1).unwrap();
        let trajs = vec![integrate(&system, IntegratorKind::Rk4, &states[0], &grid).unwrap()];
        let bundle = build_mesh_bundle(&system, &trajs);
        let defs = bundle.system_args["trajectory_defs"].as_array().unwrap();
        let particles = defs[0]["particles"].as_array().unwrap();
        assert_eq!(particles.len(), 9);
        let pos0 = particles[0]["position"].as_array().unwrap();
        assert_eq!(pos0[0].as_f64().unwrap(), states[0].q[0]);
        let springs = defs[0]["springs"].as_array().unwrap();
        // 12 axis-aligned + 8 diagonal springs on a 3x3 grid.
        assert_eq!(springs.len(), 20);
    }

    #[test]
    fn systems_rebuild_from_bundles() {
        let system = WaveSystem::new(8, 1.0, 0.1);
        let mut src = WaveIcSource::in_distribution(4);
        let pulses = src.draw(1).to_vec();
        let grid = TimeGrid::new(0.1, 2, 1).unwrap();
        let trajs = vec![integrate(
            &system,
            IntegratorKind::Leapfrog,
            &pulses[0].to_state(8),
            &grid,
        )
        .unwrap()];
        let bundle = build_wave_bundle(&system, &pulses, &trajs);
        let rebuilt = system_from_bundle(&bundle).unwrap().unwrap();
        assert_eq!(rebuilt.dim(), system.dim());
        let d1 = system.derivative(&trajs[0].states[1]).unwrap();
        let d2 = rebuilt.derivative(&trajs[0].states[1]).unwrap();
        assert_eq!(d1, d2);
    }
}
