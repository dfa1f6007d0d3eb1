//! Guard stabilizer: outer x/y velocity loops feeding roll/pitch setpoints,
//! inner roll/pitch PID loops producing body moments, and a least-squares
//! thruster mixer. Yaw is not controlled and the collective is open loop.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Thruster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integrator_clamp: f64,
    pub output_clamp: f64,
}

impl PidGains {
    pub fn validate(&self, loop_name: &str) -> Result<()> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(Error::invalid(format!("controller.{loop_name}"), "gains must be finite"));
        }
        if !(self.integrator_clamp > 0.0 && self.output_clamp > 0.0) {
            return Err(Error::invalid(format!("controller.{loop_name}"), "clamps must be positive"));
        }
        Ok(())
    }
}

/// Integrator memory of one loop.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
}

/// One PID update. `error_rate` is supplied by the caller so the derivative
/// can act on a measured rate. Returns the clamped output and new state.
pub fn pid_step(gains: &PidGains, error: f64, error_rate: f64, dt: f64, state: PidState) -> (f64, PidState) {
    let integral = (state.integral + error * dt).clamp(-gains.integrator_clamp, gains.integrator_clamp);
    let raw = gains.kp * error + gains.ki * integral + gains.kd * error_rate;
    (raw.clamp(-gains.output_clamp, gains.output_clamp), PidState { integral })
}

/// Gains that place the closed-loop poles of `I theta'' = tau` under PID
/// control (derivative on the measured rate) at
/// `(s + p)(s^2 + 2 zeta omega s + omega^2)`.
pub fn tune_attitude_gains(inertia: f64, omega: f64, zeta: f64, p: f64) -> (f64, f64, f64) {
    let kp = inertia * (omega * omega + 2.0 * zeta * omega * p);
    let ki = inertia * p * omega * omega;
    let kd = inertia * (2.0 * zeta * omega + p);
    (kp, ki, kd)
}

/// State matrix of the linearized attitude loop in `[theta, theta_dot, integral]`.
pub fn attitude_closed_loop(gains: &PidGains, inertia: f64) -> Matrix3<f64> {
    Matrix3::new(
        0.0,
        1.0,
        0.0,
        -gains.kp / inertia,
        -gains.kd / inertia,
        gains.ki / inertia,
        -1.0,
        0.0,
        0.0,
    )
}

/// Largest real part among the closed-loop poles.
pub fn attitude_stability_margin(gains: &PidGains, inertia: f64) -> f64 {
    attitude_closed_loop(gains, inertia)
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Linearized single-axis recovery: `I theta'' = tau` with the PID closing
/// the loop every `dt`. Returns the angle history including the start.
pub fn simulate_attitude_recovery(gains: &PidGains, inertia: f64, theta0: f64, dt: f64, duration: f64) -> Vec<(f64, f64)> {
    let n = (duration / dt).round() as usize;
    let (mut theta, mut rate, mut pid) = (theta0, 0.0, PidState::default());
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, theta));
    for k in 0..n {
        let (tau, s) = pid_step(gains, -theta, -rate, dt, pid);
        pid = s;
        // exact zero-order-hold update of the double integrator
        let acc = tau / inertia;
        theta += rate * dt + 0.5 * acc * dt * dt;
        rate += acc * dt;
        out.push(((k + 1) as f64 * dt, theta));
    }
    out
}

/// Roll inertia (kg m^2) the default attitude gains were placed against:
/// the roll diagonal of the mass matrix of the default airframe at rest.
pub const DEFAULT_ROLL_INERTIA: f64 = 7.64575e-5;
/// Pitch counterpart of [`DEFAULT_ROLL_INERTIA`].
pub const DEFAULT_PITCH_INERTIA: f64 = 5.17e-5;
/// Pole placement used for the default attitude gains: `(omega, zeta, p)`.
pub const DEFAULT_ATTITUDE_POLES: (f64, f64, f64) = (12.0, 0.8, 4.0);

fn attitude_default(inertia: f64) -> PidGains {
    let (omega, zeta, p) = DEFAULT_ATTITUDE_POLES;
    let (kp, ki, kd) = tune_attitude_gains(inertia, omega, zeta, p);
    PidGains {
        kp,
        ki,
        kd,
        integrator_clamp: 0.5,
        output_clamp: 0.02,
    }
}

fn velocity_default() -> PidGains {
    PidGains {
        kp: 0.15,
        ki: 0.02,
        kd: 0.0,
        integrator_clamp: 2.0,
        output_clamp: 0.3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub roll: PidGains,
    pub pitch: PidGains,
    pub vx: PidGains,
    pub vy: PidGains,
    /// Heading-frame velocity setpoint.
    pub velocity_setpoint_mps: [f64; 2],
    /// Roll and pitch trim added to the outer-loop outputs.
    pub attitude_trim_rad: [f64; 2],
    /// Open-loop collective thrust. `None` means the robot weight.
    pub collective_n: Option<f64>,
    /// Controller update period. `None` means every integration step.
    pub period_s: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            roll: attitude_default(DEFAULT_ROLL_INERTIA),
            pitch: attitude_default(DEFAULT_PITCH_INERTIA),
            vx: velocity_default(),
            vy: velocity_default(),
            velocity_setpoint_mps: [0.0; 2],
            attitude_trim_rad: [0.0; 2],
            collective_n: None,
            period_s: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.roll.validate("roll")?;
        self.pitch.validate("pitch")?;
        self.vx.validate("vx")?;
        self.vy.validate("vy")?;
        if self.velocity_setpoint_mps.iter().chain(&self.attitude_trim_rad).any(|v| !v.is_finite()) {
            return Err(Error::invalid("controller", "setpoints must be finite"));
        }
        if let Some(c) = self.collective_n {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::invalid("controller.collective_n", "must be non-negative"));
            }
        }
        if let Some(p) = self.period_s {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::invalid("controller.period_s", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Measured pose and velocity handed to the stabilizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Roll, pitch, yaw.
    pub attitude: Vector3<f64>,
    /// Roll, pitch, yaw rates.
    pub attitude_rate: Vector3<f64>,
    /// Inertial velocity.
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CascadeState {
    pub roll: PidState,
    pub pitch: PidState,
    pub vx: PidState,
    pub vy: PidState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeOutput {
    pub roll_setpoint: f64,
    pub pitch_setpoint: f64,
    /// Body moments about x (roll) and y (pitch), N m.
    pub moments: [f64; 2],
    pub collective: f64,
}

/// Outer velocity loops then inner attitude loops. Velocity errors are
/// measured minus setpoint in the heading frame; a forward excess commands a
/// nose-up (negative) pitch, a leftward excess a positive roll.
pub fn cascade(
    config: &ControllerConfig,
    measured: &Measurement,
    collective: f64,
    dt: f64,
    state: CascadeState,
) -> (CascadeOutput, CascadeState) {
    let yaw = measured.attitude.z;
    let (s, c) = yaw.sin_cos();
    let v = measured.velocity;
    let v_heading = [c * v.x + s * v.y, -s * v.x + c * v.y];
    let ex = v_heading[0] - config.velocity_setpoint_mps[0];
    let ey = v_heading[1] - config.velocity_setpoint_mps[1];
    let (ux, vx) = pid_step(&config.vx, ex, 0.0, dt, state.vx);
    let (uy, vy) = pid_step(&config.vy, ey, 0.0, dt, state.vy);
    let roll_setpoint = config.attitude_trim_rad[0] + uy;
    let pitch_setpoint = config.attitude_trim_rad[1] - ux;
    let (mr, roll) = pid_step(
        &config.roll,
        roll_setpoint - measured.attitude.x,
        -measured.attitude_rate.x,
        dt,
        state.roll,
    );
    let (mp, pitch) = pid_step(
        &config.pitch,
        pitch_setpoint - measured.attitude.y,
        -measured.attitude_rate.y,
        dt,
        state.pitch,
    );
    (
        CascadeOutput {
            roll_setpoint,
            pitch_setpoint,
            moments: [mr, mp],
            collective,
        },
        CascadeState { roll, pitch, vx, vy },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterCommand {
    /// Per-thruster thrust, N, within `[0, max]`.
    pub thrust: Vec<f64>,
    /// Moments and collective actually produced after clamping.
    pub achieved: [f64; 3],
    pub saturated: bool,
}

/// Least-squares allocation of `[roll moment, pitch moment, collective]`.
#[derive(Debug, Clone)]
pub struct Mixer {
    allocation: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
    max_thrust: Vec<f64>,
}

impl Mixer {
    pub fn new(thrusters: &[Thruster]) -> Result<Self> {
        if thrusters.len() < 4 {
            return Err(Error::Mixing(format!("need at least 4 thrusters, got {}", thrusters.len())));
        }
        let allocation = DMatrix::from_fn(3, thrusters.len(), |r, i| {
            let t = &thrusters[i];
            let m = t.position.cross(&t.axis);
            match r {
                0 => m.x,
                1 => m.y,
                _ => t.axis.z,
            }
        });
        let svd = allocation.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || svd.rank(1e-9 * smax) < 3 {
            return Err(Error::Mixing(
                "thruster layout does not span roll, pitch and collective".into(),
            ));
        }
        let pseudo_inverse = svd
            .pseudo_inverse(1e-9 * smax)
            .map_err(|e| Error::Mixing(e.to_string()))?;
        Ok(Mixer {
            allocation,
            pseudo_inverse,
            max_thrust: thrusters.iter().map(|t| t.max_thrust).collect(),
        })
    }

    pub fn allocation(&self) -> &DMatrix<f64> {
        &self.allocation
    }

    /// Moments and collective produced by a thrust vector.
    pub fn wrench(&self, thrust: &[f64]) -> [f64; 3] {
        let w = &self.allocation * DVector::from_column_slice(thrust);
        [w[0], w[1], w[2]]
    }

    pub fn mix(&self, moments: [f64; 2], collective: f64) -> ThrusterCommand {
        let request = DVector::from_column_slice(&[moments[0], moments[1], collective]);
        let raw = &self.pseudo_inverse * &request;
        let mut saturated = false;
        let thrust: Vec<f64> = raw
            .iter()
            .zip(&self.max_thrust)
            .map(|(&f, &max)| {
                let c = f.clamp(0.0, max);
                saturated |= c != f;
                c
            })
            .collect();
        let achieved = self.wrench(&thrust);
        ThrusterCommand {
            thrust,
            achieved,
            saturated,
        }
    }
}
