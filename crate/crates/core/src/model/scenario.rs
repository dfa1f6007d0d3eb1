use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::robot::RobotModel;
use crate::control::ControllerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Body pose clamped to a load cell; only wings and wake states evolve.
    Tethered,
    FreeFlight,
    /// Free flight with the guard thrusters driven by the stabilizer.
    GuardStabilized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeroModelKind {
    /// Lifting line with Wagner wake memory.
    #[default]
    Unsteady,
    /// Stand-in baseline: c_L = a0 * atan2(v_n, v_e), no wake memory, no induced downwash.
    QuasiSteady,
    Off,
}

impl AeroModelKind {
    pub fn label(self) -> &'static str {
        match self {
            AeroModelKind::Unsteady => "unsteady",
            AeroModelKind::QuasiSteady => "quasi_steady",
            AeroModelKind::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub wind_mps: Vec<f64>,
    pub flap_hz: Vec<f64>,
}

fn one() -> usize {
    1
}
fn three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default)]
    pub aero_model: AeroModelKind,
    /// Headwind speed; the wind blows along inertial -x.
    pub wind_mps: f64,
    /// Wind velocity component along inertial +y.
    #[serde(default)]
    pub crosswind_mps: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    /// Emit one trace row every `decimation` steps.
    #[serde(default = "one")]
    pub decimation: usize,
    #[serde(default)]
    pub initial_position_m: [f64; 3],
    /// Roll, pitch, yaw (Z-Y-X convention). Positive pitch is nose-down.
    #[serde(default)]
    pub initial_attitude_rad: [f64; 3],
    #[serde(default)]
    pub initial_velocity_mps: [f64; 3],
    /// Flap cycles discarded before cycle averaging.
    #[serde(default = "three")]
    pub transient_cycles: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative standard deviation of the random mass/inertia perturbation.
    #[serde(default)]
    pub mass_perturbation_rel: f64,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub controller: ControllerConfig,
}

impl ScenarioConfig {
    pub fn default_tethered() -> Self {
        serde_json::from_str(include_str!("../../configs/tethered.json")).expect("bundled scenario parses")
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let s: ScenarioConfig = super::from_document(value, "scenario config")?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = super::read_file(path.as_ref())?;
        let value = serde_json::from_str(&text).map_err(|source| Error::Parse {
            what: "scenario config".into(),
            source,
        })?;
        Self::from_value(value)
    }

    pub fn wind(&self) -> Vector3<f64> {
        Vector3::new(-self.wind_mps, self.crosswind_mps, 0.0)
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return Err(Error::invalid("dt_s", "must be positive"));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= self.dt_s) {
            return Err(Error::invalid("duration_s", "must be at least one time step"));
        }
        if !self.wind_mps.is_finite() || !self.crosswind_mps.is_finite() {
            return Err(Error::invalid("wind_mps", "wind must be finite"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid("decimation", "must be at least 1"));
        }
        for (name, v) in [
            ("initial_position_m", &self.initial_position_m),
            ("initial_attitude_rad", &self.initial_attitude_rad),
            ("initial_velocity_mps", &self.initial_velocity_mps),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(name, "components must be finite"));
            }
        }
        if self.initial_attitude_rad[1].abs() >= std::f64::consts::FRAC_PI_2 - 1e-6 {
            return Err(Error::invalid("initial_attitude_rad", "pitch must stay below pi/2 in magnitude"));
        }
        if !(0.0..0.5).contains(&self.mass_perturbation_rel) {
            return Err(Error::invalid("mass_perturbation_rel", "must lie in [0, 0.5)"));
        }
        if let Some(grid) = &self.sweep {
            if grid.wind_mps.is_empty() || grid.flap_hz.is_empty() {
                return Err(Error::invalid("sweep", "grid must not be empty"));
            }
            if grid.wind_mps.iter().any(|w| !w.is_finite()) {
                return Err(Error::invalid("sweep.wind_mps", "values must be finite"));
            }
            if grid.flap_hz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(Error::invalid("sweep.flap_hz", "values must be positive"));
            }
        }
        self.controller.validate()
    }

    /// Checks that need the robot as well, such as the freestream floor of the
    /// unsteady model.
    pub fn validate_against(&self, robot: &RobotModel) -> Result<()> {
        if self.aero_model == AeroModelKind::Unsteady {
            let v0 = Vector3::from(self.initial_velocity_mps);
            let airspeed = (self.wind() - v0).norm();
            if airspeed < robot.freestream_floor_mps {
                return Err(Error::invalid(
                    "wind_mps",
                    format!(
                        "initial airspeed {airspeed} m/s is below the freestream floor {} m/s of the unsteady model",
                        robot.freestream_floor_mps
                    ),
                ));
            }
        }
        if self.mode == Mode::GuardStabilized && robot.thrusters.len() < 4 {
            return Err(Error::invalid(
                "thrusters",
                "guard-stabilized mode needs at least four thrusters",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        let s = ScenarioConfig::default_tethered();
        s.validate().unwrap();
        s.validate_against(&RobotModel::default_robot()).unwrap();
        assert_eq!(s.n_steps(), 10_000);
    }

    #[test]
    fn bad_time_step_rejected() {
        let mut s = ScenarioConfig::default_tethered();
        s.dt_s = 0.0;
        assert!(s.validate().is_err());
        s.dt_s = 1e-3;
        s.duration_s = 1e-4;
        assert!(s.validate().is_err());
    }

    #[test]
    fn unsteady_model_needs_freestream() {
        let mut s = ScenarioConfig::default_tethered();
        s.wind_mps = 0.0;
        let err = s.validate_against(&RobotModel::default_robot()).unwrap_err();
        assert!(err.to_string().contains("freestream floor"));
        s.aero_model = AeroModelKind::QuasiSteady;
        s.validate_against(&RobotModel::default_robot()).unwrap();
    }

    #[test]
    fn headwind_blows_along_negative_x() {
        let s = ScenarioConfig::default_tethered();
        assert_eq!(s.wind(), Vector3::new(-s.wind_mps, 0.0, 0.0));
    }
}
