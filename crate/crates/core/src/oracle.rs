//! Independent reference checks runnable from the library and the CLI.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aero::{self, AeroState, ForceConstants, LiftingLine, JONES};
use crate::dynamics::{self, Dynamics, Simulation};
use crate::error::{Error, Result};
use crate::integrate;
use crate::kinematics::{Airframe, AttachmentId, Coords, GeneralizedState, Stations};
use crate::model::{AeroModelKind, Gait, GaitSchedule, Mode, RobotModel};

pub const SUITES: [&str; 6] = ["wagner", "memory", "lifting-line", "energy", "pendulum", "jacobian"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn below(suite: &str, name: &str, value: f64, limit: f64) -> Self {
        OracleCheck {
            suite: suite.into(),
            name: name.into(),
            value,
            limit,
            passed: value < limit,
        }
    }

    fn above(suite: &str, name: &str, value: f64, limit: f64) -> Self {
        OracleCheck {
            suite: suite.into(),
            name: name.into(),
            value,
            limit,
            passed: value > limit,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {} {}: {:e} (limit {:e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            self.limit
        )
    }
}

/// Runs one named suite, or all of them for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<OracleCheck>> {
    match name {
        "wagner" => Ok(wagner_checks()),
        "memory" => Ok(vec![OracleCheck::below(
            "memory",
            "relative L2 error vs convolution quadrature",
            memory_state_error(1e-4, 2.0)?,
            1e-3,
        )]),
        "lifting-line" => {
            let r = elliptic_wing(16, 0.05)?;
            Ok(vec![OracleCheck::below(
                "lifting-line",
                "relative C_L error, elliptic wing",
                ((r.lift_coefficient - r.reference) / r.reference).abs(),
                0.01,
            )])
        }
        "energy" => Ok(vec![OracleCheck::below(
            "energy",
            "relative energy drift over 10 s",
            energy_drift(10.0, 1e-3)?,
            1e-3,
        )]),
        "pendulum" => Ok(vec![OracleCheck::below(
            "pendulum",
            "tip deviation from minimal-coordinate model, m",
            pendulum_tip_error(1.0, 1e-3)?,
            1e-6,
        )]),
        "jacobian" => {
            let r = jacobian_consistency(100, 11)?;
            Ok(vec![
                OracleCheck::below("jacobian", "force Jacobian vs finite differences", r.jacobian, 1e-6),
                OracleCheck::below("jacobian", "generalized force vs virtual work", r.virtual_work, 1e-6),
            ])
        }
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s)?);
            }
            Ok(out)
        }
        other => Err(Error::invalid("suite", format!("unknown oracle suite {other:?}"))),
    }
}

fn wagner_checks() -> Vec<OracleCheck> {
    let phi = |t: f64| JONES.phi(t).expect("non-negative time");
    let mut worst_step = f64::INFINITY;
    let mut prev = phi(0.0);
    for k in 1..=100_000 {
        let p = phi(k as f64 * 1e-3);
        worst_step = worst_step.min(p - prev);
        prev = p;
    }
    vec![
        OracleCheck::below("wagner", "|phi(0) - 0.5|", (phi(0.0) - 0.5).abs(), f64::EPSILON),
        OracleCheck::below("wagner", "|phi(1) - 0.59417|", (phi(1.0) - 0.59417).abs(), 5e-6),
        OracleCheck::above("wagner", "smallest increment on [0, 100]", worst_step, 0.0),
        OracleCheck::above("wagner", "phi(100)", phi(100.0), 0.985),
    ]
}

/// Marches the wake memory states under `w = sin(2 pi t)` with `U = 1 m/s`,
/// `b = 0.02 m` and compares against trapezoid quadrature of
/// `z_k(t) = int_0^t (psi_k eps_k U / b) exp(-eps_k U (t - tau) / b) w(tau) dtau`.
/// Returns the relative L2 error over both states.
pub fn memory_state_error(dt: f64, duration: f64) -> Result<f64> {
    let (u, b) = (1.0, 0.02);
    let w = |t: f64| (2.0 * PI * t).sin();
    let n = (duration / dt).round() as usize;
    let sample_every = (n / 200).max(1);
    let (mut z1, mut z2) = (vec![0.0], vec![0.0]);
    let mut marched = Vec::new();
    for k in 0..n {
        let t = k as f64 * dt;
        let (a, c) = aero::advance_memory_states(&JONES, &z1, &z2, |t, out| out[0] = w(t), u, &[b], t, dt);
        z1 = vec![a[0]];
        z2 = vec![c[0]];
        if (k + 1) % sample_every == 0 {
            marched.push(((k + 1) as f64 * dt, z1[0], z2[0]));
        }
    }
    let quad = |t: f64, psi: f64, eps: f64| {
        let m = ((t / dt).round() as usize).max(1);
        let h = t / m as f64;
        let k = |tau: f64| psi * eps * u / b * (-eps * u / b * (t - tau)).exp() * w(tau);
        let inner: f64 = (1..m).map(|i| k(i as f64 * h)).sum();
        h * (0.5 * (k(0.0) + k(t)) + inner)
    };
    let (mut err, mut norm) = (0.0, 0.0);
    for (t, a, c) in marched {
        let (ra, rc) = (quad(t, JONES.psi1, JONES.eps1), quad(t, JONES.psi2, JONES.eps2));
        err += (a - ra).powi(2) + (c - rc).powi(2);
        norm += ra * ra + rc * rc;
    }
    Ok((err / norm).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticWingResult {
    pub lift_coefficient: f64,
    pub reference: f64,
    pub condition: f64,
}

/// Elliptic wing (span 0.3 m, root chord 0.08 m, `a0 = 2 pi`) held at `alpha`
/// in a 4 m/s stream until the wake settles.
pub fn elliptic_wing(m: usize, alpha: f64) -> Result<EllipticWingResult> {
    let (span, c0, a0, u) = (0.3, 0.08, 2.0 * PI, 4.0);
    let stations = Stations::new(span, m, |y| c0 * (1.0 - (2.0 * y / span).powi(2)).max(0.0).sqrt());
    let line = LiftingLine::new(stations, a0, c0)?;
    let v_n = DVector::from_element(m, u * alpha);
    // slowest wake mode decays as exp(-eps1 U t / b) with b <= c0 / 2
    let settle = 20.0 * 0.5 * c0 / (JONES.eps1 * u);
    let dt = 1e-3;
    let s = line.march_fixed_wing(&AeroState::zeros(m), &v_n, u, dt, (settle / dt).ceil() as usize)?;
    let r = line.state_rates(&s, &v_n, u)?;
    let area = PI * c0 * span / 4.0;
    let aspect = span * span / area;
    Ok(EllipticWingResult {
        lift_coefficient: line.total_lift_coefficient(&r.c_l),
        reference: a0 * alpha / (1.0 + a0 / (PI * aspect)),
        condition: line.condition(),
    })
}

/// Free tumbling flight with locked joints, no aerodynamics and no thrust.
/// Returns `max |E(t) - E(0)| / T(0)`.
pub fn energy_drift(duration: f64, dt: f64) -> Result<f64> {
    let airframe = Airframe::new(RobotModel::default_robot())?;
    let gait = Gait::new(&GaitSchedule::frozen(0.3, -0.4))?;
    let d = Dynamics::new(airframe, gait, Vector3::zeros(), Mode::FreeFlight, AeroModelKind::Off)?;
    let s0 = d.initial_state(0.0, [0.0, 0.0, 0.0, 0.1, 0.05, 0.0], [0.2, -0.1, 1.0, 2.0, 0.2, 0.1]);
    let e0 = dynamics::total_energy(&d.airframe, &s0.mech)?;
    let t0 = dynamics::kinetic_energy(&d.airframe, &s0.mech)?;
    let mut sim = Simulation::new(d, s0)?;
    let mut worst: f64 = 0.0;
    let n = (duration / dt).round() as usize;
    for k in 1..=n {
        sim.step_to(k as f64 * dt)?;
        let e = dynamics::total_energy(&sim.dynamics.airframe, &sim.state().mech)?;
        worst = worst.max((e - e0).abs());
    }
    Ok(worst / t0)
}

/// Largest `|J_c q'' - y_ks|` and the error of `p_z` against
/// `-g t^2 / 2` for a one-second free fall with everything else off.
pub fn free_fall(duration: f64, dt: f64) -> Result<(f64, f64)> {
    let airframe = Airframe::new(RobotModel::default_robot())?;
    let g = airframe.model().gravity_mps2;
    let gait = Gait::new(&GaitSchedule::frozen(0.0, 0.0))?;
    let d = Dynamics::new(airframe, gait, Vector3::zeros(), Mode::FreeFlight, AeroModelKind::Off)?;
    let s0 = d.initial_state(0.0, [0.0; 6], [0.0; 6]);
    let mut sim = Simulation::new(d, s0)?;
    let accel_error = (sim.current().accel[2] + g).abs();
    let n = (duration / dt).round() as usize;
    for k in 1..=n {
        sim.step_to(k as f64 * dt)?;
    }
    let pz = sim.state().mech.q[2];
    Ok((accel_error, (pz + 0.5 * g * duration * duration).abs()))
}

/// Planar two-link pendulum of point masses hanging from a fixed pivot.
#[derive(Debug, Clone, Copy)]
struct Pendulum {
    m1: f64,
    m2: f64,
    l1: f64,
    l2: f64,
    g: f64,
}

impl Pendulum {
    fn points(&self, q: &[f64]) -> [Vector3<f64>; 2] {
        let a = Vector3::new(self.l1 * q[0].sin(), -self.l1 * q[0].cos(), 0.0);
        let b = a + Vector3::new(self.l2 * (q[0] + q[1]).sin(), -self.l2 * (q[0] + q[1]).cos(), 0.0);
        [a, b]
    }

    fn jacobians(&self, q: &[f64]) -> [DMatrix<f64>; 2] {
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        let j1 = DMatrix::from_row_slice(3, 2, &[self.l1 * c1, 0.0, self.l1 * s1, 0.0, 0.0, 0.0]);
        let j2 = DMatrix::from_row_slice(
            3,
            2,
            &[
                self.l1 * c1 + self.l2 * c12,
                self.l2 * c12,
                self.l1 * s1 + self.l2 * s12,
                self.l2 * s12,
                0.0,
                0.0,
            ],
        );
        [j1, j2]
    }

    fn mass(&self, q: &[f64]) -> DMatrix<f64> {
        let [j1, j2] = self.jacobians(q);
        j1.transpose() * &j1 * self.m1 + j2.transpose() * &j2 * self.m2
    }

    fn gravity(&self, q: &[f64]) -> DVector<f64> {
        let [j1, j2] = self.jacobians(q);
        let down = |m: f64| DVector::from_column_slice(&[0.0, -m * self.g, 0.0]);
        j1.transpose() * down(self.m1) + j2.transpose() * down(self.m2)
    }
}

/// Drives the elbow of a two-link pendulum along a prescribed trajectory and
/// integrates it twice: as a constrained two-coordinate system through the
/// same numeric machinery as the robot, and as a closed-form one-coordinate
/// equation. Returns the largest tip separation.
pub fn pendulum_tip_error(duration: f64, dt: f64) -> Result<f64> {
    let p = Pendulum {
        m1: 0.3,
        m2: 0.2,
        l1: 0.5,
        l2: 0.4,
        g: 9.81,
    };
    let joint = |t: f64| {
        let w = 2.0 * PI;
        (0.5 * (w * t).sin(), 0.5 * w * (w * t).cos(), -0.5 * w * w * (w * t).sin())
    };

    let constrained = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let q = x.rows(0, 2).into_owned();
        let qd = x.rows(2, 2).into_owned();
        let c = dynamics::velocity_product_terms(
            |q: &DVector<f64>| Ok::<_, Error>(p.mass(q.as_slice())),
            &q,
            &qd,
            0..2,
            dynamics::MASS_FD_STEP,
        )?;
        let f = p.gravity(q.as_slice()) - c;
        let j = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let (acc, _) = dynamics::solve_constrained(&p.mass(q.as_slice()), &f, &j, &DVector::from_element(1, joint(t).2))?;
        Ok(DVector::from_column_slice(&[qd[0], qd[1], acc[0], acc[1]]))
    };
    let minimal = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let (th2, th2d, th2dd) = joint(t);
        let (th1, th1d) = (x[0], x[1]);
        let Pendulum { m1, m2, l1, l2, g } = p;
        let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * th2.cos();
        let m12 = m2 * l2 * l2 + m2 * l1 * l2 * th2.cos();
        let coriolis = m2 * l1 * l2 * th2.sin() * (2.0 * th1d * th2d + th2d * th2d);
        let grav = (m1 + m2) * g * l1 * th1.sin() + m2 * g * l2 * (th1 + th2).sin();
        Ok(DVector::from_column_slice(&[th1d, (coriolis - grav - m12 * th2dd) / m11]))
    };

    let (q20, q2d0, _) = joint(0.0);
    let mut xc = DVector::from_column_slice(&[0.4, q20, 0.0, q2d0]);
    let mut xm = DVector::from_column_slice(&[0.4, 0.0]);
    let n = (duration / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let t = k as f64 * dt;
        xc = integrate::rk4_step(constrained, t, &xc, dt)?;
        xm = integrate::rk4_step(minimal, t, &xm, dt)?;
        let (q2, q2d, _) = joint(t + dt);
        xc[1] = q2;
        xc[3] = q2d;
        let a = p.points(&[xc[0], xc[1]])[1];
        let b = p.points(&[xm[0], q2])[1];
        worst = worst.max((a - b).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianConsistency {
    /// Worst relative error of `B^T` against central differences of the
    /// attachment positions.
    pub jacobian: f64,
    /// Worst relative error of `u . dq` against the virtual work of the element
    /// forces along finite-difference point displacements.
    pub virtual_work: f64,
}

/// Checks force Jacobians of every element and thruster and the assembled
/// generalized aerodynamic force at `n` random states.
pub fn jacobian_consistency(n: usize, seed: u64) -> Result<JacobianConsistency> {
    let af = Airframe::new(RobotModel::default_robot())?;
    let k = ForceConstants::for_model(af.model());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let ids: Vec<AttachmentId> = (0..af.n_elements())
        .map(AttachmentId::Element)
        .chain((0..af.thrusters().len()).map(AttachmentId::Thruster))
        .collect();
    let (mut worst_j, mut worst_w): (f64, f64) = (0.0, 0.0);
    for _ in 0..n {
        let mut q = Coords::from_fn(|_, _| rng.random_range(-1.0..1.0));
        q[4] *= 1.2;
        let qd = Coords::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let wind = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        for &id in &ids {
            let b = af.force_jacobian(&q, id)?.b;
            for c in 0..q.len() {
                let mut qp = q;
                let mut qm = q;
                qp[c] += h;
                qm[c] -= h;
                let fd = (af.attachment_position(&qp, id)? - af.attachment_position(&qm, id)?) / (2.0 * h);
                let col = b.row(c).transpose();
                worst_j = worst_j.max((col - fd).norm() / fd.norm().max(1e-3));
            }
        }

        let state = GeneralizedState::new(q, qd);
        let els = af.blade_elements(&state, &wind)?;
        let m = els.len();
        let c_l = DVector::from_fn(m, |_, _| rng.random_range(-1.5..1.5));
        let w_y = DVector::from_fn(m, |_, _| rng.random_range(-0.3..0.3));
        let forces = aero::assemble_forces(&c_l, &w_y, &w_y, &els, &k);
        let dq = Coords::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut work = 0.0;
        let mut scale = 0.0;
        for (i, s) in forces.sections.iter().enumerate() {
            let id = AttachmentId::Element(i);
            let dp = (af.attachment_position(&(q + dq * h), id)? - af.attachment_position(&(q - dq * h), id)?) / (2.0 * h);
            work += s.force.dot(&dp);
            scale += (s.force.norm() * dp.norm()).abs();
        }
        let generalized = forces.generalized.dot(&dq);
        worst_w = worst_w.max((generalized - work).abs() / scale.max(1e-300));
    }
    Ok(JacobianConsistency {
        jacobian: worst_j,
        virtual_work: worst_w,
    })
}

/// Self-convergence order of the coupled integrator on an aero-off flapping
/// trajectory: errors at `dt` and `dt / 2` against a `dt / 10` reference.
pub fn convergence_order(duration: f64, dt: f64) -> Result<f64> {
    let run = |h: f64| -> Result<Coords> {
        let airframe = Airframe::new(RobotModel::default_robot())?;
        let gait = Gait::new(&GaitSchedule::default_gait())?;
        let d = Dynamics::new(airframe, gait, Vector3::zeros(), Mode::FreeFlight, AeroModelKind::Off)?;
        let s0 = d.initial_state(0.0, [0.0; 6], [0.1, 0.0, 0.2, 0.5, 0.3, -0.2]);
        let mut sim = Simulation::new(d, s0)?;
        let n = (duration / h).round() as usize;
        for k in 1..=n {
            sim.step_to(k as f64 * h)?;
        }
        Ok(sim.state().mech.q)
    };
    let reference = run(dt / 10.0)?;
    let e1 = (run(dt)? - reference).norm();
    let e2 = (run(dt / 2.0)? - reference).norm();
    Ok((e1 / e2).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suite("nope").is_err());
    }

    #[test]
    fn wagner_suite_passes() {
        assert!(run_suite("wagner").unwrap().iter().all(|c| c.passed));
    }

    #[test]
    fn memory_error_shrinks_with_step() {
        let coarse = memory_state_error(4e-3, 1.0).unwrap();
        let fine = memory_state_error(1e-3, 1.0).unwrap();
        assert!(fine < coarse);
    }
}
