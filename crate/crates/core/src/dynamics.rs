//! Equations of motion `M(q) q'' = h(q, q') + u_a + u_t + J_c^T lambda`, where the
//! constraint pins the shoulder and elbow accelerations to the gait, and the
//! coupled RK4 march of the rigid-body and wake states.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3};

use crate::aero::{self, AeroForces, AeroState, ForceConstants, LiftingLine};
use crate::error::{Error, Result};
use crate::integrate;
use crate::kinematics::{idx, Airframe, BladeElementState, Coords, GeneralizedState, Poses, Segment, COORD_NAMES, NQ};
use crate::model::{AeroModelKind, Gait, JointTargets, Mode};

pub type MassMatrix = SMatrix<f64, NQ, NQ>;
pub type ConstraintJacobian = SMatrix<f64, 2, NQ>;

/// Step used for the central differences of the mass matrix.
pub const MASS_FD_STEP: f64 = 1e-6;

/// Rows select the shoulder and elbow accelerations.
pub fn constraint_jacobian() -> ConstraintJacobian {
    let mut j = ConstraintJacobian::zeros();
    j[(0, idx::SHOULDER)] = 1.0;
    j[(1, idx::ELBOW)] = 1.0;
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct EomTerms {
    pub mass: MassMatrix,
    /// Gravity and Coriolis/centrifugal generalized force.
    pub bias: Coords,
    pub u_a: Coords,
    pub u_t: Coords,
    pub lambda: Vector2<f64>,
}

impl EomTerms {
    pub fn applied(&self) -> Coords {
        self.bias + self.u_a + self.u_t
    }
}

pub fn mass_matrix_at(airframe: &Airframe, poses: &Poses) -> MassMatrix {
    let mut m = MassMatrix::zeros();
    for b in airframe.rigid_bodies() {
        let pose = poses.segment(b.segment);
        let com = pose.point(&b.com);
        let jv = airframe.point_jacobian(poses, b.segment, &com);
        let jw = airframe.angular_jacobian(poses, b.segment);
        let inertia = pose.rotation * b.inertia * pose.rotation.transpose();
        m += jv.transpose() * jv * b.mass + jw.transpose() * inertia * jw;
    }
    0.5 * (m + m.transpose())
}

/// Mass matrix, checked for positive definiteness.
pub fn mass_matrix(airframe: &Airframe, q: &Coords) -> Result<MassMatrix> {
    let m = mass_matrix_at(airframe, &airframe.forward_kinematics(q)?);
    if m.cholesky().is_none() {
        return Err(Error::MassMatrix);
    }
    Ok(m)
}

pub fn kinetic_energy(airframe: &Airframe, state: &GeneralizedState) -> Result<f64> {
    Ok(0.5 * state.qd.dot(&(mass_matrix(airframe, &state.q)? * state.qd)))
}

pub fn potential_energy_at(airframe: &Airframe, poses: &Poses) -> f64 {
    let g = airframe.model().gravity_mps2;
    airframe
        .rigid_bodies()
        .iter()
        .map(|b| b.mass * g * poses.segment(b.segment).point(&b.com).z)
        .sum()
}

pub fn total_energy(airframe: &Airframe, state: &GeneralizedState) -> Result<f64> {
    let poses = airframe.forward_kinematics(&state.q)?;
    Ok(0.5 * state.qd.dot(&(mass_matrix_at(airframe, &poses) * state.qd)) + potential_energy_at(airframe, &poses))
}

/// `-dV/dq` for gravity acting on every body.
pub fn gravity_force(airframe: &Airframe, poses: &Poses) -> Coords {
    let g = airframe.model().gravity_mps2;
    let mut f = Coords::zeros();
    for b in airframe.rigid_bodies() {
        let com = poses.segment(b.segment).point(&b.com);
        let jv = airframe.point_jacobian(poses, b.segment, &com);
        f -= jv.transpose() * Vector3::new(0.0, 0.0, b.mass * g);
    }
    f
}

/// Velocity-product term `M' q' - 1/2 d(q'^T M q')/dq` from central
/// differences of `mass` over the coordinates listed in `coords`; the mass
/// matrix is assumed independent of the others.
pub fn velocity_product_terms<E>(
    mut mass: impl FnMut(&DVector<f64>) -> std::result::Result<DMatrix<f64>, E>,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    coords: impl IntoIterator<Item = usize>,
    step: f64,
) -> std::result::Result<DVector<f64>, E> {
    let n = q.len();
    let mut mdot_qd = DVector::zeros(n);
    let mut grad = DVector::zeros(n);
    for k in coords {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += step;
        qm[k] -= step;
        let dm = (mass(&qp)? - mass(&qm)?) / (2.0 * step);
        let dm_qd = &dm * qd;
        mdot_qd += dm_qd.clone() * qd[k];
        grad[k] = qd.dot(&dm_qd);
    }
    Ok(mdot_qd - grad * 0.5)
}

/// `h = -(M' q' - 1/2 d(q'^T M q')/dq) - dV/dq`.
pub fn bias_forces(airframe: &Airframe, state: &GeneralizedState) -> Result<Coords> {
    let poses = airframe.forward_kinematics(&state.q)?;
    bias_forces_at(airframe, &poses, state)
}

fn bias_forces_at(airframe: &Airframe, poses: &Poses, state: &GeneralizedState) -> Result<Coords> {
    let gravity = gravity_force(airframe, poses);
    if state.qd.iter().skip(idx::ROLL).all(|v| *v == 0.0) {
        return Ok(gravity);
    }
    let q = DVector::from_column_slice(state.q.as_slice());
    let qd = DVector::from_column_slice(state.qd.as_slice());
    let c = velocity_product_terms(
        |q: &DVector<f64>| {
            let poses = airframe.forward_kinematics(&Coords::from_column_slice(q.as_slice()))?;
            let m = mass_matrix_at(airframe, &poses);
            Ok::<_, Error>(DMatrix::from_column_slice(NQ, NQ, m.as_slice()))
        },
        &q,
        &qd,
        idx::ROLL..NQ,
        MASS_FD_STEP,
    )?;
    Ok(gravity - Coords::from_column_slice(c.as_slice()))
}

/// Solves `M x = f + J^T lambda`, `J x = y` for `(x, lambda)`.
pub fn solve_constrained(
    mass: &DMatrix<f64>,
    force: &DVector<f64>,
    jacobian: &DMatrix<f64>,
    target: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = mass.clone().cholesky().ok_or(Error::MassMatrix)?;
    let minv_f = chol.solve(force);
    let minv_jt = chol.solve(&jacobian.transpose());
    let gram = jacobian * &minv_jt;
    let gram_chol = gram.cholesky().ok_or(Error::ConstraintDegenerate)?;
    let lambda = gram_chol.solve(&(target - jacobian * &minv_f));
    let accel = minv_f + minv_jt * &lambda;
    Ok((accel, lambda))
}

/// Constrained accelerations for the flapping robot. Returns `(q'', lambda)`.
pub fn solve_constrained_accel(terms: &EomTerms, y_ks: &Vector2<f64>) -> Result<(Coords, Vector2<f64>)> {
    let m = DMatrix::from_column_slice(NQ, NQ, terms.mass.as_slice());
    let f = DVector::from_column_slice(terms.applied().as_slice());
    let jc = constraint_jacobian();
    let j = DMatrix::from_column_slice(2, NQ, jc.as_slice());
    let (a, l) = solve_constrained(&m, &f, &j, &DVector::from_column_slice(y_ks.as_slice()))?;
    Ok((Coords::from_column_slice(a.as_slice()), Vector2::new(l[0], l[1])))
}

/// Force and torque the robot applies to a rigid mount at the body origin,
/// inertial axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountLoad {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

/// Rigid-body, joint and wake state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub time: f64,
    pub mech: GeneralizedState,
    pub aero: AeroState,
}

impl FullState {
    pub fn pack(&self) -> DVector<f64> {
        let m = self.aero.len();
        let mut x = DVector::zeros(2 * NQ + 3 * m);
        x.rows_mut(0, NQ).copy_from(&self.mech.q);
        x.rows_mut(NQ, NQ).copy_from(&self.mech.qd);
        x.rows_mut(2 * NQ, m).copy_from(&self.aero.a);
        x.rows_mut(2 * NQ + m, m).copy_from(&self.aero.z1);
        x.rows_mut(2 * NQ + 2 * m, m).copy_from(&self.aero.z2);
        x
    }

    pub fn unpack(time: f64, x: &DVector<f64>, m: usize) -> Self {
        FullState {
            time,
            mech: GeneralizedState::new(
                Coords::from_column_slice(x.rows(0, NQ).as_slice()),
                Coords::from_column_slice(x.rows(NQ, NQ).as_slice()),
            ),
            aero: AeroState {
                a: x.rows(2 * NQ, m).into_owned(),
                z1: x.rows(2 * NQ + m, m).into_owned(),
                z2: x.rows(2 * NQ + 2 * m, m).into_owned(),
            },
        }
    }
}

/// Name of entry `i` of the packed state vector.
pub fn component_name(i: usize, m: usize) -> String {
    if i < NQ {
        COORD_NAMES[i].to_string()
    } else if i < 2 * NQ {
        format!("d{}/dt", COORD_NAMES[i - NQ])
    } else {
        let j = i - 2 * NQ;
        match j / m.max(1) {
            0 => format!("a[{}]", j),
            1 => format!("z1[{}]", j - m),
            _ => format!("z2[{}]", j - 2 * m),
        }
    }
}

/// Everything computed from one state: derivatives plus the quantities
/// reported in traces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub time: f64,
    pub derivative: DVector<f64>,
    pub accel: Coords,
    pub terms: EomTerms,
    pub gait: JointTargets,
    pub elements: Vec<BladeElementState>,
    pub aero: Option<AeroForces>,
    pub airspeed: f64,
    /// Present in tethered mode.
    pub mount: Option<MountLoad>,
    /// `|J_c q'' - y_ks|`.
    pub constraint_residual: f64,
}

/// Everything needed to evaluate the coupled state derivative.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub airframe: Airframe,
    pub gait: Gait,
    pub wind: Vector3<f64>,
    pub mode: Mode,
    pub aero_model: AeroModelKind,
    line: LiftingLine,
    constants: ForceConstants,
}

impl Dynamics {
    pub fn new(airframe: Airframe, gait: Gait, wind: Vector3<f64>, mode: Mode, aero_model: AeroModelKind) -> Result<Self> {
        let line = LiftingLine::for_model(airframe.model())?;
        let constants = ForceConstants::for_model(airframe.model());
        Ok(Dynamics {
            airframe,
            gait,
            wind,
            mode,
            aero_model,
            line,
            constants,
        })
    }

    pub fn lifting_line(&self) -> &LiftingLine {
        &self.line
    }

    pub fn n_elements(&self) -> usize {
        self.line.len()
    }

    /// Body pose and velocity from the arguments, joints from the gait at `t`,
    /// wake at rest.
    pub fn initial_state(&self, t: f64, body_q: [f64; 6], body_qd: [f64; 6]) -> FullState {
        let mut mech = GeneralizedState::at_rest(Coords::zeros());
        for i in 0..6 {
            mech.q[i] = body_q[i];
            mech.qd[i] = if self.mode == Mode::Tethered { 0.0 } else { body_qd[i] };
        }
        let mut s = FullState {
            time: t,
            mech,
            aero: AeroState::zeros(self.n_elements()),
        };
        self.sync_joints(&mut s);
        s
    }

    /// Overwrites joint angles and rates with the gait.
    pub fn sync_joints(&self, s: &mut FullState) {
        let g = self.gait.eval(s.time);
        s.mech.q[idx::SHOULDER] = g.pos[0];
        s.mech.q[idx::ELBOW] = g.pos[1];
        s.mech.qd[idx::SHOULDER] = g.vel[0];
        s.mech.qd[idx::ELBOW] = g.vel[1];
    }

    /// Generalized force of the thrusters at the given magnitudes.
    pub fn thruster_force(&self, poses: &Poses, thrust: &[f64]) -> Coords {
        let mut u = Coords::zeros();
        for (t, &f) in self.airframe.thrusters().iter().zip(thrust) {
            if f == 0.0 {
                continue;
            }
            let point = poses.body.point(&t.position);
            let j = self.airframe.point_jacobian(poses, Segment::Body, &point);
            u += j.transpose() * (poses.body.rotation * t.axis * f);
        }
        u
    }

    pub fn evaluate(&self, state: &FullState, thrust: &[f64]) -> Result<Evaluation> {
        let t = state.time;
        let mech = &state.mech;
        let poses = self.airframe.forward_kinematics(&mech.q)?;
        let mass = mass_matrix_at(&self.airframe, &poses);
        let bias = bias_forces_at(&self.airframe, &poses, mech)?;
        let elements = self.airframe.blade_elements_at(&poses, mech, &self.wind);
        let m = self.n_elements();
        let body_velocity = Vector3::new(mech.qd[0], mech.qd[1], mech.qd[2]);
        let airspeed = (self.wind - body_velocity).norm();

        let mut rates = AeroState::zeros(m);
        let aero = match self.aero_model {
            AeroModelKind::Off => None,
            AeroModelKind::QuasiSteady => {
                let c_l = aero::quasi_steady_lift(&elements, self.line.a0);
                let w = DVector::from_iterator(m, elements.iter().map(|e| e.v_n));
                Some(aero::assemble_forces(&c_l, &w, &DVector::zeros(m), &elements, &self.constants))
            }
            AeroModelKind::Unsteady => {
                let floor = self.airframe.model().freestream_floor_mps;
                if airspeed < floor {
                    return Err(Error::DegenerateFreestream { airspeed, floor });
                }
                let v_n = DVector::from_iterator(m, elements.iter().map(|e| e.v_n));
                let r = self.line.state_rates(&state.aero, &v_n, airspeed)?;
                rates = r.rates;
                Some(aero::assemble_forces(&r.c_l, &r.w, &r.w_y, &elements, &self.constants))
            }
        };
        let u_a = aero.as_ref().map_or_else(Coords::zeros, |a| a.generalized);
        let u_t = self.thruster_force(&poses, thrust);
        let gait = self.gait.eval(t);
        let y_ks = Vector2::new(gait.acc[0], gait.acc[1]);
        let mut terms = EomTerms {
            mass,
            bias,
            u_a,
            u_t,
            lambda: Vector2::zeros(),
        };

        let (accel, mount) = match self.mode {
            Mode::Tethered => {
                let mut accel = Coords::zeros();
                accel[idx::SHOULDER] = y_ks[0];
                accel[idx::ELBOW] = y_ks[1];
                // M q'' = f + Q_mount + J_c^T lambda with the body clamped
                let r = mass * accel - terms.applied();
                terms.lambda = Vector2::new(r[idx::SHOULDER], r[idx::ELBOW]);
                let q_force = Vector3::new(r[0], r[1], r[2]);
                let q_euler = Vector3::new(r[3], r[4], r[5]);
                let torque = poses
                    .euler_rates
                    .transpose()
                    .try_inverse()
                    .ok_or(Error::GimbalLock { pitch: mech.q[idx::PITCH] })?
                    * q_euler;
                (
                    accel,
                    Some(MountLoad {
                        force: -q_force,
                        torque: -torque,
                    }),
                )
            }
            Mode::FreeFlight | Mode::GuardStabilized => {
                let (accel, lambda) = solve_constrained_accel(&terms, &y_ks)?;
                terms.lambda = lambda;
                (accel, None)
            }
        };
        let constraint_residual = (constraint_jacobian() * accel - y_ks).norm();

        let mut derivative = DVector::zeros(2 * NQ + 3 * m);
        derivative.rows_mut(0, NQ).copy_from(&mech.qd);
        derivative.rows_mut(NQ, NQ).copy_from(&accel);
        if self.mode == Mode::Tethered {
            derivative.rows_mut(0, 6).fill(0.0);
        }
        derivative.rows_mut(2 * NQ, m).copy_from(&rates.a);
        derivative.rows_mut(2 * NQ + m, m).copy_from(&rates.z1);
        derivative.rows_mut(2 * NQ + 2 * m, m).copy_from(&rates.z2);

        Ok(Evaluation {
            time: t,
            derivative,
            accel,
            terms,
            gait,
            elements,
            aero,
            airspeed,
            mount,
            constraint_residual,
        })
    }

    /// One RK4 step with thrust held over the step. Aerodynamics and the gait
    /// acceleration are re-evaluated at every stage. Joints are re-synced to
    /// the gait afterwards.
    pub fn step(&self, state: &FullState, thrust: &[f64], dt: f64) -> Result<FullState> {
        self.step_with(state, thrust, dt, None)
    }

    fn step_with(&self, state: &FullState, thrust: &[f64], dt: f64, k1: Option<DVector<f64>>) -> Result<FullState> {
        let m = self.n_elements();
        let x = state.pack();
        let f = |t: f64, x: &DVector<f64>| {
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    time: t,
                    component: component_name(i, m),
                });
            }
            self.evaluate(&FullState::unpack(t, x, m), thrust)
                .map(|e| e.derivative)
                .map_err(|e| Error::AtTime { time: t, source: Box::new(e) })
        };
        let next = match k1 {
            Some(k1) => integrate::rk4_step_from(f, state.time, &x, dt, k1)?,
            None => integrate::rk4_step(f, state.time, &x, dt)?,
        };
        let time = state.time + dt;
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time,
                component: component_name(i, m),
            });
        }
        let mut out = FullState::unpack(time, &next, m);
        self.sync_joints(&mut out);
        Ok(out)
    }
}

/// A running simulation that keeps the evaluation at the current state, which
/// doubles as the first RK4 stage of the next step.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dynamics: Dynamics,
    state: FullState,
    current: Evaluation,
    thrust: Vec<f64>,
    max_constraint_residual: f64,
}

impl Simulation {
    pub fn new(dynamics: Dynamics, state: FullState) -> Result<Self> {
        let thrust = vec![0.0; dynamics.airframe.thrusters().len()];
        let current = dynamics
            .evaluate(&state, &thrust)
            .map_err(|e| Error::AtTime { time: state.time, source: Box::new(e) })?;
        Ok(Simulation {
            max_constraint_residual: current.constraint_residual,
            dynamics,
            state,
            current,
            thrust,
        })
    }

    pub fn state(&self) -> &FullState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Evaluation at the current state with the thrust in force.
    pub fn current(&self) -> &Evaluation {
        &self.current
    }

    pub fn thrust(&self) -> &[f64] {
        &self.thrust
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.max_constraint_residual
    }

    /// Changes the held thrust, re-evaluating the current state.
    pub fn set_thrust(&mut self, thrust: &[f64]) -> Result<()> {
        if thrust != self.thrust.as_slice() {
            self.thrust = thrust.to_vec();
            self.current = self
                .dynamics
                .evaluate(&self.state, &self.thrust)
                .map_err(|e| Error::AtTime { time: self.state.time, source: Box::new(e) })?;
        }
        Ok(())
    }

    /// Advances one step. The time after the step is `start + k dt` computed
    /// by the caller, which keeps long runs free of accumulated rounding.
    pub fn step_to(&mut self, time: f64) -> Result<()> {
        let dt = time - self.state.time;
        let k1 = self.current.derivative.clone();
        let mut next = self.dynamics.step_with(&self.state, &self.thrust, dt, Some(k1))?;
        next.time = time;
        self.dynamics.sync_joints(&mut next);
        self.current = self
            .dynamics
            .evaluate(&next, &self.thrust)
            .map_err(|e| Error::AtTime { time, source: Box::new(e) })?;
        self.max_constraint_residual = self.max_constraint_residual.max(self.current.constraint_residual);
        self.state = next;
        Ok(())
    }
}

/// Maps a world torque to Euler-angle generalized torque, `E^T tau`.
pub fn euler_torque(euler_rates: &Matrix3<f64>, torque: &Vector3<f64>) -> Vector3<f64> {
    euler_rates.transpose() * torque
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{euler_rotation, mirror_coords};
    use crate::model::{GaitSchedule, RobotModel};
    use proptest::prelude::*;

    fn airframe() -> Airframe {
        Airframe::new(RobotModel::default_robot()).unwrap()
    }

    fn random_state(v: &[f64]) -> GeneralizedState {
        let mut q = Coords::from_column_slice(&v[..8]);
        q[idx::PITCH] *= 0.9;
        GeneralizedState::new(q, Coords::from_column_slice(&v[8..16]))
    }

    /// Kinetic energy of each body from finite differences of its pose.
    fn kinetic_energy_oracle(af: &Airframe, s: &GeneralizedState) -> f64 {
        let h = 1e-6;
        let pp = af.forward_kinematics(&(s.q + s.qd * h)).unwrap();
        let pm = af.forward_kinematics(&(s.q - s.qd * h)).unwrap();
        let p0 = af.forward_kinematics(&s.q).unwrap();
        af.rigid_bodies()
            .iter()
            .map(|b| {
                let (a, c, r) = (pp.segment(b.segment), pm.segment(b.segment), p0.segment(b.segment));
                let v = (a.point(&b.com) - c.point(&b.com)) / (2.0 * h);
                let rdot = (a.rotation - c.rotation) / (2.0 * h);
                let skew = r.rotation.transpose() * rdot;
                let w_body = Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
                0.5 * b.mass * v.norm_squared() + 0.5 * w_body.dot(&(b.inertia * w_body))
            })
            .sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn kinetic_energy_matches_body_sum(v in proptest::collection::vec(-1.5f64..1.5, 16)) {
            let af = airframe();
            let s = random_state(&v);
            let t = kinetic_energy(&af, &s).unwrap();
            let oracle = kinetic_energy_oracle(&af, &s);
            prop_assert!((t - oracle).abs() < 1e-8 * oracle, "{t} vs {oracle}");
        }

        #[test]
        fn mass_matrix_symmetric_positive(v in proptest::collection::vec(-1.5f64..1.5, 8)) {
            let af = airframe();
            let m = mass_matrix(&af, &random_state(&[v.clone(), v].concat()).q).unwrap();
            prop_assert_eq!(m, m.transpose());
        }

        #[test]
        fn mirrored_state_mirrors_bias(v in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let af = airframe();
            let s = random_state(&v);
            let h = bias_forces(&af, &s).unwrap();
            let hm = bias_forces(&af, &s.mirrored()).unwrap();
            prop_assert!((mirror_coords(&h) - hm).norm() < 1e-7 * h.norm());
        }
    }

    #[test]
    fn translational_block_is_total_mass() {
        let af = airframe();
        let m = mass_matrix(&af, &Coords::zeros()).unwrap();
        let total = af.model().total_mass_kg();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { total } else { 0.0 };
                assert!((m[(i, j)] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn static_bias_is_weight() {
        let af = airframe();
        let h = bias_forces(&af, &GeneralizedState::at_rest(Coords::zeros())).unwrap();
        let w = af.model().weight_n();
        assert!(h[0].abs() < 1e-15 && h[1].abs() < 1e-15 && (h[2] + w).abs() < 1e-15);
    }

    #[test]
    fn scalar_constraint() {
        let (a, l) = solve_constrained(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::zeros(1),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 2.0),
        )
        .unwrap();
        assert_eq!((a[0], l[0]), (2.0, 2.0));
    }

    #[test]
    fn inactive_constraint_has_zero_multiplier() {
        let af = airframe();
        let q = Coords::from_column_slice(&[0.0, 0.0, 0.0, 0.2, 0.1, -0.3, 0.4, -0.5]);
        let mass = mass_matrix(&af, &q).unwrap();
        let free = Coords::from_column_slice(&[0.1, -0.2, 0.3, 1.0, -2.0, 0.5, 3.0, -4.0]);
        let terms = EomTerms {
            mass,
            bias: mass * free,
            u_a: Coords::zeros(),
            u_t: Coords::zeros(),
            lambda: Vector2::zeros(),
        };
        let (a, l) = solve_constrained_accel(&terms, &Vector2::new(3.0, -4.0)).unwrap();
        assert!(l.norm() < 1e-9);
        assert!((a - free).norm() < 1e-9);
    }

    #[test]
    fn constrained_solution_meets_targets() {
        let af = airframe();
        let s = random_state(&[0.1, 0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 1.0, -1.0, 0.5, 2.0, -1.0, 0.3, 5.0, -3.0]);
        let terms = EomTerms {
            mass: mass_matrix(&af, &s.q).unwrap(),
            bias: bias_forces(&af, &s).unwrap(),
            u_a: Coords::zeros(),
            u_t: Coords::zeros(),
            lambda: Vector2::zeros(),
        };
        let y = Vector2::new(12.0, -30.0);
        let (a, l) = solve_constrained_accel(&terms, &y).unwrap();
        assert!((constraint_jacobian() * a - y).norm() < 1e-9);
        let r = terms.mass * a - terms.applied() - constraint_jacobian().transpose() * l;
        assert!(r.norm() < 1e-12);
    }

    fn frozen(mode: Mode) -> Dynamics {
        Dynamics::new(
            airframe(),
            Gait::new(&GaitSchedule::frozen(0.0, 0.0)).unwrap(),
            Vector3::zeros(),
            mode,
            AeroModelKind::Off,
        )
        .unwrap()
    }

    #[test]
    fn free_fall() {
        let d = frozen(Mode::FreeFlight);
        let mut sim = Simulation::new(d, frozen(Mode::FreeFlight).initial_state(0.0, [0.0; 6], [0.0; 6])).unwrap();
        let a = sim.current().accel;
        assert!((a[2] + 9.81).abs() < 1e-8);
        assert!(a.iter().enumerate().filter(|(i, _)| *i != 2).all(|(_, v)| v.abs() < 1e-12));
        for k in 1..=1000 {
            sim.step_to(k as f64 * 1e-3).unwrap();
        }
        assert!((sim.state().mech.q[2] + 0.5 * 9.81).abs() < 1e-8);
    }

    #[test]
    fn tethered_static_load_is_weight() {
        let d = frozen(Mode::Tethered);
        let s = d.initial_state(0.0, [0.0, 0.0, 0.0, 0.1, -0.2, 0.3], [1.0; 6]);
        assert_eq!(s.mech.qd, Coords::zeros());
        let sim = Simulation::new(d, s).unwrap();
        let load = sim.current().mount.unwrap();
        let w = sim.dynamics.airframe.model().weight_n();
        assert!((load.force - Vector3::new(0.0, 0.0, -w)).norm() < 1e-15);
        // torque = -(r_com x (-m g z)) over all bodies about the body origin
        let poses = sim.dynamics.airframe.forward_kinematics(&sim.state().mech.q).unwrap();
        let mut expect = Vector3::zeros();
        for b in sim.dynamics.airframe.rigid_bodies() {
            let r = poses.segment(b.segment).point(&b.com) - poses.body.origin;
            expect += r.cross(&Vector3::new(0.0, 0.0, -b.mass * 9.81));
        }
        assert!((load.torque - expect).norm() < 1e-12);
    }

    #[test]
    fn tethered_state_keeps_body_fixed() {
        let d = Dynamics::new(
            airframe(),
            Gait::new(&GaitSchedule::default_gait()).unwrap(),
            Vector3::new(-1.0, 0.0, 0.0),
            Mode::Tethered,
            AeroModelKind::Unsteady,
        )
        .unwrap();
        let s0 = d.initial_state(0.0, [0.0, 0.0, 0.0, 0.0, -0.2, 0.0], [0.0; 6]);
        let mut sim = Simulation::new(d, s0.clone()).unwrap();
        for k in 1..=200 {
            sim.step_to(k as f64 * 5e-4).unwrap();
        }
        let s = sim.state();
        assert_eq!(s.mech.q.rows(0, 6), s0.mech.q.rows(0, 6));
        assert_eq!(s.mech.qd.rows(0, 6), s0.mech.qd.rows(0, 6));
        assert!(s.aero.a.norm() > 0.0);
        let g = sim.dynamics.gait.eval(0.1);
        assert_eq!(s.mech.q[idx::SHOULDER], g.pos[0]);
    }

    #[test]
    fn divergence_names_component() {
        let d = frozen(Mode::FreeFlight);
        let mut s = d.initial_state(0.0, [0.0; 6], [0.0; 6]);
        s.mech.qd[0] = f64::NAN;
        let err = d.step(&s, &[0.0; 4], 1e-3).unwrap_err();
        match err {
            Error::Divergence { time, component } => {
                assert_eq!(component, "dp_x/dt");
                assert_eq!(time, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn thrust_along_body_axis() {
        let d = frozen(Mode::FreeFlight);
        let q = Coords::from_column_slice(&[0.0, 0.0, 0.0, 0.3, 0.2, 0.1, 0.0, 0.0]);
        let poses = d.airframe.forward_kinematics(&q).unwrap();
        let u = d.thruster_force(&poses, &[0.1; 4]);
        let up = euler_rotation(0.3, 0.2, 0.1) * Vector3::z();
        assert!((Vector3::new(u[0], u[1], u[2]) - up * 0.4).norm() < 1e-15);
    }
}
