//! Scenario execution (tethered load cell, free flight, guard-stabilized
//! flight), cycle averaging, wind/frequency sweeps and output writers.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{cascade, CascadeState, Measurement, Mixer};
use crate::dynamics::{Dynamics, Evaluation, MountLoad, Simulation};
use crate::error::{Error, Result};
use crate::kinematics::{Airframe, Segment, Side, COORD_NAMES, NQ};
use crate::model::{AeroModelKind, ConfigSet, Gait, Mode, RobotModel};

/// Lift and drag of one wing in wind axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WingLoads {
    pub lift: f64,
    pub drag: f64,
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    /// Fraction of the current flap period, in `[0, 1)`.
    pub flap_phase: f64,
    pub q: [f64; NQ],
    pub qd: [f64; NQ],
    /// Left, right.
    pub wings: [WingLoads; 2],
    /// Load on the mount (tethered mode).
    pub mount: Option<MountLoad>,
    pub lambda: [f64; 2],
    pub thrust: Vec<f64>,
    /// Lift and drag averaged over the last completed flap cycle.
    pub last_cycle: Option<WingLoads>,
}

impl TraceRecord {
    pub fn lift(&self) -> f64 {
        self.wings[0].lift + self.wings[1].lift
    }

    pub fn drag(&self) -> f64 {
        self.wings[0].drag + self.wings[1].drag
    }
}

/// CSV header matching [`TraceRecord::csv_fields`].
pub fn trace_header(n_thrusters: usize) -> Vec<String> {
    let mut h = vec!["time_s".to_string(), "flap_phase".to_string()];
    h.extend(COORD_NAMES.iter().map(|n| n.to_string()));
    h.extend(COORD_NAMES.iter().map(|n| format!("d_{n}")));
    for s in [
        "lift_left_n",
        "drag_left_n",
        "lift_right_n",
        "drag_right_n",
        "lift_n",
        "drag_n",
        "mount_fx_n",
        "mount_fy_n",
        "mount_fz_n",
        "mount_mx_nm",
        "mount_my_nm",
        "mount_mz_nm",
        "lambda_shoulder_nm",
        "lambda_elbow_nm",
    ] {
        h.push(s.to_string());
    }
    h.extend((0..n_thrusters).map(|i| format!("thrust_{i}_n")));
    h.push("cycle_lift_n".to_string());
    h.push("cycle_drag_n".to_string());
    h
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl TraceRecord {
    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![num(self.time), num(self.flap_phase)];
        f.extend(self.q.iter().map(|v| num(*v)));
        f.extend(self.qd.iter().map(|v| num(*v)));
        for w in &self.wings {
            f.push(num(w.lift));
            f.push(num(w.drag));
        }
        f.push(num(self.lift()));
        f.push(num(self.drag()));
        match &self.mount {
            Some(m) => f.extend(m.force.iter().chain(m.torque.iter()).map(|v| num(*v))),
            None => f.extend(std::iter::repeat_n(String::new(), 6)),
        }
        f.push(num(self.lambda[0]));
        f.push(num(self.lambda[1]));
        f.extend(self.thrust.iter().map(|v| num(*v)));
        match &self.last_cycle {
            Some(c) => {
                f.push(num(c.lift));
                f.push(num(c.drag));
            }
            None => f.extend([String::new(), String::new()]),
        }
        f
    }
}

/// Cycle-averaged results of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub aero_model: AeroModelKind,
    pub wind_mps: f64,
    pub flap_hz: f64,
    pub steps: usize,
    pub rows: usize,
    pub final_time_s: f64,
    /// Averaging window `[start, end]`, whole flap cycles only.
    pub window_s: [f64; 2],
    pub cycles_averaged: usize,
    pub mean_lift_n: f64,
    pub mean_drag_n: f64,
    pub mean_lift_left_n: f64,
    pub mean_lift_right_n: f64,
    pub mean_drag_left_n: f64,
    pub mean_drag_right_n: f64,
    /// Mean inertial aerodynamic force summed over all elements.
    pub mean_aero_force_n: [f64; 3],
    /// Mean load on the mount (tethered mode only).
    pub mean_mount_force_n: Option<[f64; 3]>,
    pub mean_mount_torque_nm: Option<[f64; 3]>,
    pub max_constraint_residual: f64,
    pub thrust_saturated_steps: usize,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "{} {} wind={} m/s flap={} Hz: mean lift {:.6e} N, mean drag {:.6e} N over {} cycles",
            match self.mode {
                Mode::Tethered => "tethered",
                Mode::FreeFlight => "free_flight",
                Mode::GuardStabilized => "guard_stabilized",
            },
            self.aero_model.label(),
            self.wind_mps,
            self.flap_hz,
            self.mean_lift_n,
            self.mean_drag_n,
            self.cycles_averaged
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

/// Applies the scenario's random mass and inertia perturbation.
pub fn perturb_robot(robot: &RobotModel, rel: f64, seed: u64) -> RobotModel {
    let mut r = robot.clone();
    if rel <= 0.0 {
        return r;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, rel).expect("finite deviation");
    let mut factor = || (1.0 + normal.sample(&mut rng)).max(0.2);
    let k = factor();
    r.body_mass_kg *= k;
    scale(&mut r.body_inertia_kgm2, k);
    let k = factor();
    r.wing.proximal.mass_kg *= k;
    scale(&mut r.wing.proximal.inertia_kgm2, k);
    let k = factor();
    r.wing.distal.mass_kg *= k;
    scale(&mut r.wing.distal.inertia_kgm2, k);
    r
}

fn scale(m: &mut [[f64; 3]; 3], k: f64) {
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v *= k;
        }
    }
}

/// Wind-axis lift and drag unit vectors for a given relative airflow.
fn wind_axes(airflow: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let drag_dir = airflow.try_normalize(1e-12).unwrap_or(-Vector3::x());
    let up = Vector3::z();
    let lift_dir = (up - drag_dir * up.dot(&drag_dir))
        .try_normalize(1e-12)
        .unwrap_or(Vector3::x());
    (lift_dir, drag_dir)
}

fn wing_loads(eval: &Evaluation, airflow: &Vector3<f64>) -> ([WingLoads; 2], Vector3<f64>) {
    let (l, d) = wind_axes(airflow);
    let mut out = [WingLoads::default(); 2];
    let mut total = Vector3::zeros();
    if let Some(aero) = &eval.aero {
        for (e, s) in eval.elements.iter().zip(&aero.sections) {
            total += s.force;
            let side = match e.segment {
                Segment::Proximal(side) | Segment::Distal(side) => side,
                Segment::Body => {
                    if e.y >= 0.0 {
                        Side::Left
                    } else {
                        Side::Right
                    }
                }
            };
            let w = &mut out[side.index()];
            w.lift += s.force.dot(&l);
            w.drag += s.force.dot(&d);
        }
    }
    (out, total)
}

/// Index of the flap cycle containing `t` (cycle c covers `(c T, (c+1) T]`).
fn cycle_index(t: f64, flap_hz: f64) -> i64 {
    ((t * flap_hz - 1e-9).ceil() as i64 - 1).max(0)
}

#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    n: usize,
    lift: [f64; 2],
    drag: [f64; 2],
    aero: Vector3<f64>,
    mount_force: Vector3<f64>,
    mount_torque: Vector3<f64>,
}

impl Accumulator {
    fn add(&mut self, wings: &[WingLoads; 2], aero: &Vector3<f64>, mount: Option<&MountLoad>) {
        self.n += 1;
        for (i, w) in wings.iter().enumerate() {
            self.lift[i] += w.lift;
            self.drag[i] += w.drag;
        }
        self.aero += aero;
        if let Some(m) = mount {
            self.mount_force += m.force;
            self.mount_torque += m.torque;
        }
    }

    fn mean(&self, v: f64) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            v / self.n as f64
        }
    }
}

/// Averaging window: whole cycles after the transient, falling back to the
/// last whole cycle (or the whole run) for short runs.
fn averaging_window(duration: f64, flap_hz: f64, transient_cycles: usize) -> (f64, f64, usize) {
    let period = 1.0 / flap_hz;
    let whole = (duration * flap_hz + 1e-9).floor() as usize;
    if whole == 0 {
        return (0.0, duration, 0);
    }
    let skip = if transient_cycles < whole { transient_cycles } else { whole - 1 };
    (skip as f64 * period, whole as f64 * period, whole - skip)
}

/// Runs one scenario, handing every decimated row to `sink`.
pub fn run_scenario_with(cfg: &ConfigSet, mut sink: impl FnMut(&TraceRecord) -> Result<()>) -> Result<RunSummary> {
    let sc = &cfg.scenario;
    let robot = perturb_robot(&cfg.robot, sc.mass_perturbation_rel, sc.seed);
    let airframe = Airframe::new(robot)?;
    let gait = Gait::new(&cfg.gait)?;
    let flap_hz = gait.flap_hz();
    let mixer = match sc.mode {
        Mode::GuardStabilized => Some(Mixer::new(airframe.thrusters())?),
        _ => None,
    };
    let weight = airframe.model().weight_n();
    let n_thrusters = airframe.thrusters().len();
    let dynamics = Dynamics::new(airframe, gait, sc.wind(), sc.mode, sc.aero_model)?;
    let [x, y, z] = sc.initial_position_m;
    let [r, p, yaw] = sc.initial_attitude_rad;
    let [vx, vy, vz] = sc.initial_velocity_mps;
    let initial = dynamics.initial_state(0.0, [x, y, z, r, p, yaw], [vx, vy, vz, 0.0, 0.0, 0.0]);
    let mut sim = Simulation::new(dynamics, initial)?;

    let steps = sc.n_steps();
    let dt = sc.dt_s;
    let (w0, w1, cycles) = averaging_window(steps as f64 * dt, flap_hz, sc.transient_cycles);
    let mut window = Accumulator::default();
    let mut cycle_acc = Accumulator::default();
    let mut current_cycle = 0;
    let mut last_cycle = None;
    let mut controller = CascadeState::default();
    let control_period = sc.controller.period_s.unwrap_or(dt);
    let mut next_control = 0.0;
    let collective = sc.controller.collective_n.unwrap_or(weight);
    let mut saturated_steps = 0;
    let mut rows = 0;
    info!(
        "{} steps of {} s, {} elements, collocation condition {:.3}",
        steps,
        dt,
        sim.dynamics.n_elements(),
        sim.dynamics.lifting_line().condition()
    );

    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            sim.step_to(t)?;
        }
        let eval = sim.current();
        let mech = &sim.state().mech;
        let airflow = sim.dynamics.wind - Vector3::new(mech.qd[0], mech.qd[1], mech.qd[2]);
        let (wings, aero_total) = wing_loads(eval, &airflow);

        if k > 0 {
            let c = cycle_index(t, flap_hz);
            if c != current_cycle {
                if cycle_acc.n > 0 {
                    last_cycle = Some(WingLoads {
                        lift: cycle_acc.mean(cycle_acc.lift[0] + cycle_acc.lift[1]),
                        drag: cycle_acc.mean(cycle_acc.drag[0] + cycle_acc.drag[1]),
                    });
                }
                cycle_acc = Accumulator::default();
                current_cycle = c;
            }
            cycle_acc.add(&wings, &aero_total, eval.mount.as_ref());
            if t > w0 + 1e-9 && t <= w1 + 1e-9 {
                window.add(&wings, &aero_total, eval.mount.as_ref());
            }
            if k % sc.decimation == 0 {
                let rec = TraceRecord {
                    time: t,
                    flap_phase: (t * flap_hz).fract(),
                    q: mech.q.into(),
                    qd: mech.qd.into(),
                    wings,
                    mount: eval.mount,
                    lambda: eval.terms.lambda.into(),
                    thrust: sim.thrust().to_vec(),
                    last_cycle,
                };
                sink(&rec)?;
                rows += 1;
            }
        }

        if k == steps {
            break;
        }
        if let Some(mixer) = &mixer {
            if t + 1e-12 >= next_control {
                let measured = Measurement {
                    attitude: Vector3::new(mech.q[3], mech.q[4], mech.q[5]),
                    attitude_rate: Vector3::new(mech.qd[3], mech.qd[4], mech.qd[5]),
                    velocity: Vector3::new(mech.qd[0], mech.qd[1], mech.qd[2]),
                };
                let (out, state) = cascade(&sc.controller, &measured, collective, control_period, controller);
                controller = state;
                let cmd = mixer.mix(out.moments, out.collective);
                if cmd.saturated {
                    saturated_steps += 1;
                    debug!("thrust saturated at t = {t}");
                }
                sim.set_thrust(&cmd.thrust)?;
                next_control += control_period;
            }
        }
    }

    let has_mount = sc.mode == Mode::Tethered;
    let w = &window;
    let summary = RunSummary {
        mode: sc.mode,
        aero_model: sc.aero_model,
        wind_mps: sc.wind_mps,
        flap_hz,
        steps,
        rows,
        final_time_s: sim.time(),
        window_s: [w0, w1],
        cycles_averaged: cycles,
        mean_lift_n: w.mean(w.lift[0] + w.lift[1]),
        mean_drag_n: w.mean(w.drag[0] + w.drag[1]),
        mean_lift_left_n: w.mean(w.lift[0]),
        mean_lift_right_n: w.mean(w.lift[1]),
        mean_drag_left_n: w.mean(w.drag[0]),
        mean_drag_right_n: w.mean(w.drag[1]),
        mean_aero_force_n: (w.aero / (w.n.max(1) as f64)).into(),
        mean_mount_force_n: has_mount.then(|| (w.mount_force / (w.n.max(1) as f64)).into()),
        mean_mount_torque_nm: has_mount.then(|| (w.mount_torque / (w.n.max(1) as f64)).into()),
        max_constraint_residual: sim.max_constraint_residual(),
        thrust_saturated_steps: saturated_steps,
    };
    debug!("{} thrusters, {} rows", n_thrusters, rows);
    Ok(summary)
}

/// Runs one scenario and keeps every row in memory.
pub fn run_scenario(cfg: &ConfigSet) -> Result<RunOutput> {
    let mut records = Vec::new();
    let summary = run_scenario_with(cfg, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok(RunOutput { records, summary })
}

/// Streams trace rows to a CSV file.
pub struct TraceWriter {
    writer: csv::Writer<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, n_thrusters: usize) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
        writer
            .write_record(trace_header(n_thrusters))
            .map_err(|e| Error::Output(e.to_string()))?;
        Ok(TraceWriter { writer })
    }

    pub fn write(&mut self, rec: &TraceRecord) -> Result<()> {
        self.writer
            .write_record(rec.csv_fields())
            .map_err(|e| Error::Output(e.to_string()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::Output(e.to_string()))
    }
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord], n_thrusters: usize) -> Result<()> {
    let mut w = TraceWriter::create(path, n_thrusters)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Output(e.to_string()))?;
    let mut f = File::create(path).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
    writeln!(f, "{text}").map_err(|e| Error::Output(e.to_string()))
}

/// Result of one model variant at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariantResult {
    Ok(RunSummary),
    Failed { error: String, time_s: Option<f64> },
}

impl VariantResult {
    fn from_result(r: Result<RunSummary>) -> Self {
        match r {
            Ok(s) => VariantResult::Ok(s),
            Err(e) => VariantResult::Failed {
                time_s: e.time(),
                error: e.to_string(),
            },
        }
    }

    pub fn summary(&self) -> Option<&RunSummary> {
        match self {
            VariantResult::Ok(s) => Some(s),
            VariantResult::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub wind_mps: f64,
    pub flap_hz: f64,
    pub unsteady: VariantResult,
    pub quasi_steady: VariantResult,
}

impl SweepPoint {
    /// `(unsteady - quasi_steady) / |quasi_steady|` for mean lift.
    pub fn lift_gap(&self) -> Option<f64> {
        let u = self.unsteady.summary()?.mean_lift_n;
        let q = self.quasi_steady.summary()?.mean_lift_n;
        Some((u - q) / q.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

/// Configuration for one grid point and model variant.
pub fn sweep_point_config(cfg: &ConfigSet, wind: f64, flap_hz: f64, aero: AeroModelKind) -> ConfigSet {
    let mut c = cfg.clone();
    c.scenario.wind_mps = wind;
    c.scenario.aero_model = aero;
    c.scenario.sweep = None;
    c.gait.flap_hz = flap_hz;
    c
}

fn run_variant(cfg: &ConfigSet) -> Result<RunSummary> {
    cfg.gait.validate()?;
    cfg.scenario.validate()?;
    cfg.scenario.validate_against(&cfg.robot)?;
    run_scenario_with(cfg, |_| Ok(()))
}

/// Runs both model variants at every grid point, wind-major. Failed points
/// are recorded and the sweep continues.
pub fn sweep(cfg: &ConfigSet, jobs: usize) -> Result<SweepResult> {
    let grid = cfg
        .scenario
        .sweep
        .as_ref()
        .ok_or_else(|| Error::invalid("sweep", "scenario has no sweep grid"))?;
    let points: Vec<(f64, f64)> = grid
        .wind_mps
        .iter()
        .flat_map(|&w| grid.flap_hz.iter().map(move |&f| (w, f)))
        .collect();
    let tasks: Vec<(usize, AeroModelKind)> = (0..points.len())
        .flat_map(|i| [(i, AeroModelKind::Unsteady), (i, AeroModelKind::QuasiSteady)])
        .collect();
    let run = |&(i, kind): &(usize, AeroModelKind)| {
        let (w, f) = points[i];
        let r = run_variant(&sweep_point_config(cfg, w, f, kind));
        match &r {
            Ok(s) => info!("{}", s.line()),
            Err(e) => info!("wind {w} m/s, {f} Hz, {}: {e}", kind.label()),
        }
        VariantResult::from_result(r)
    };
    let results: Vec<VariantResult> = if jobs <= 1 {
        tasks.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Output(e.to_string()))?
            .install(|| tasks.par_iter().map(run).collect())
    };
    let mut it = results.into_iter();
    let points = points
        .iter()
        .map(|&(wind_mps, flap_hz)| SweepPoint {
            wind_mps,
            flap_hz,
            unsteady: it.next().expect("two results per point"),
            quasi_steady: it.next().expect("two results per point"),
        })
        .collect();
    Ok(SweepResult { points })
}

pub const SWEEP_HEADER: [&str; 9] = [
    "wind_mps",
    "flap_hz",
    "lift_unsteady_n",
    "drag_unsteady_n",
    "lift_quasi_steady_n",
    "drag_quasi_steady_n",
    "lift_gap_rel",
    "error_unsteady",
    "error_quasi_steady",
];

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let out = |e: csv::Error| Error::Output(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
    w.write_record(SWEEP_HEADER).map_err(out)?;
    let pair = |v: &VariantResult| match v {
        VariantResult::Ok(s) => (num(s.mean_lift_n), num(s.mean_drag_n), String::new()),
        VariantResult::Failed { error, .. } => (String::new(), String::new(), error.clone()),
    };
    for p in &result.points {
        let (lu, du, eu) = pair(&p.unsteady);
        let (lq, dq, eq) = pair(&p.quasi_steady);
        let gap = p.lift_gap().map(num).unwrap_or_default();
        w.write_record([num(p.wind_mps), num(p.flap_hz), lu, du, lq, dq, gap, eu, eq])
            .map_err(out)?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_skips_transient() {
        assert_eq!(averaging_window(5.0, 2.0, 3), (1.5, 5.0, 7));
        assert_eq!(averaging_window(1.0, 2.0, 3), (0.5, 1.0, 1));
        assert_eq!(averaging_window(0.2, 2.0, 3), (0.0, 0.2, 0));
    }

    #[test]
    fn cycle_boundaries() {
        assert_eq!(cycle_index(0.0005, 2.0), 0);
        assert_eq!(cycle_index(0.5, 2.0), 0);
        assert_eq!(cycle_index(0.5005, 2.0), 1);
        assert_eq!(cycle_index(1.0, 2.0), 1);
    }

    #[test]
    fn header_and_row_widths_agree() {
        let rec = TraceRecord {
            time: 0.1,
            flap_phase: 0.2,
            q: [0.0; NQ],
            qd: [0.0; NQ],
            wings: [WingLoads::default(); 2],
            mount: None,
            lambda: [0.0; 2],
            thrust: vec![0.0; 4],
            last_cycle: None,
        };
        assert_eq!(rec.csv_fields().len(), trace_header(4).len());
    }

    #[test]
    fn shortest_round_trip_formatting() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-20), "0.00000000000000000001");
        let x = 0.1 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn perturbation_is_seeded() {
        let r = RobotModel::default_robot();
        assert_eq!(perturb_robot(&r, 0.0, 1), r);
        let a = perturb_robot(&r, 0.1, 3);
        assert_eq!(a, perturb_robot(&r, 0.1, 3));
        assert_ne!(a, perturb_robot(&r, 0.1, 4));
        assert_ne!(a.body_mass_kg, r.body_mass_kg);
    }

    #[test]
    fn level_headwind_axes() {
        let (l, d) = wind_axes(&Vector3::new(-2.0, 0.0, 0.0));
        assert_eq!(l, Vector3::z());
        assert_eq!(d, -Vector3::x());
    }
}
