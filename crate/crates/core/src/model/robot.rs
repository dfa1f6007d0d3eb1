use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_density() -> f64 {
    1.225
}
fn default_profile_drag() -> f64 {
    0.02
}
fn default_floor() -> f64 {
    0.1
}
fn default_gravity() -> f64 {
    9.81
}

/// Morphology, mass properties and aerodynamic constants of the vehicle.
///
/// Only the left wing is described. The right wing is its mirror image across
/// the body x-z plane. Body frame: x forward, y left, z up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub name: String,
    pub body_mass_kg: f64,
    /// Inertia about the body centre of mass, body frame.
    pub body_inertia_kgm2: [[f64; 3]; 3],
    pub wing: WingSpec,
    /// Tip-to-tip span of the fully extended wing.
    pub span_m: f64,
    pub chord: ChordDistribution,
    pub lift_slope_per_rad: f64,
    #[serde(default = "default_density")]
    pub air_density_kgm3: f64,
    /// Blade elements across the span, equal to the number of circulation
    /// Fourier terms.
    pub n_elements: usize,
    #[serde(default = "default_profile_drag")]
    pub profile_drag_coeff: f64,
    #[serde(default = "default_floor")]
    pub freestream_floor_mps: f64,
    #[serde(default = "default_gravity")]
    pub gravity_mps2: f64,
    #[serde(default)]
    pub thrusters: Vec<ThrusterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WingSpec {
    /// Left shoulder joint position in the body frame.
    pub shoulder_offset_m: [f64; 3],
    /// Left shoulder rotation axis in the body frame.
    pub shoulder_axis: [f64; 3],
    /// Left elbow rotation axis in the proximal segment frame.
    pub elbow_axis: [f64; 3],
    pub proximal: ProximalSegment,
    pub distal: DistalSegment,
}

/// Inner wing segment. Its frame origin is the shoulder and its quarter-chord
/// line runs along local +y to the elbow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProximalSegment {
    pub mass_kg: f64,
    pub length_m: f64,
    pub com_m: [f64; 3],
    pub inertia_kgm2: [[f64; 3]; 3],
}

/// Outer wing segment. Its length is whatever remains of the half span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistalSegment {
    pub mass_kg: f64,
    pub com_m: [f64; 3],
    pub inertia_kgm2: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrusterSpec {
    pub position_m: [f64; 3],
    pub axis: [f64; 3],
    pub max_thrust_n: f64,
}

/// Chord length c(y) over the span y in [-S/2, S/2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChordDistribution {
    /// Piecewise-linear table; stations strictly increasing and covering the span.
    Table {
        stations_m: Vec<f64>,
        chord_m: Vec<f64>,
    },
    /// c(y) = c0 * sqrt(1 - (2y/S)^2)
    Elliptic { root_chord_m: f64 },
}

impl ChordDistribution {
    pub fn chord_at(&self, y: f64, span: f64) -> f64 {
        match self {
            ChordDistribution::Elliptic { root_chord_m } => {
                let s = 2.0 * y / span;
                root_chord_m * (1.0 - s * s).max(0.0).sqrt()
            }
            ChordDistribution::Table {
                stations_m,
                chord_m,
            } => interpolate(stations_m, chord_m, y),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&s| s <= x).max(1) - 1;
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

pub(crate) fn matrix3(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

pub(crate) fn vector3(v: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

impl RobotModel {
    /// Bundled default morphology. Segment masses, inertias and chord taper are
    /// assumed values; only the 40 g mass and 30 cm span are measured.
    pub fn default_robot() -> Self {
        serde_json::from_str(include_str!("../../configs/robot.json"))
            .expect("bundled robot config parses")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "robot config".into(),
            source,
        })?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let model: RobotModel = super::from_document(value, "robot config")?;
        model.validate()?;
        Ok(model)
    }

    pub fn c0(&self) -> f64 {
        self.chord.chord_at(0.0, self.span_m)
    }

    pub fn chord_at(&self, y: f64) -> f64 {
        self.chord.chord_at(y, self.span_m)
    }

    pub fn distal_length_m(&self) -> f64 {
        0.5 * self.span_m - self.wing.shoulder_offset_m[1] - self.wing.proximal.length_m
    }

    pub fn total_mass_kg(&self) -> f64 {
        self.body_mass_kg + 2.0 * (self.wing.proximal.mass_kg + self.wing.distal.mass_kg)
    }

    pub fn weight_n(&self) -> f64 {
        self.total_mass_kg() * self.gravity_mps2
    }

    pub fn validate(&self) -> Result<()> {
        positive("body_mass_kg", self.body_mass_kg)?;
        inertia("body_inertia_kgm2", &self.body_inertia_kgm2)?;
        positive("span_m", self.span_m)?;
        let half = 0.5 * self.span_m;

        let w = &self.wing;
        finite3("wing.shoulder_offset_m", &w.shoulder_offset_m)?;
        if !(0.0..half).contains(&w.shoulder_offset_m[1]) {
            return Err(Error::invalid(
                "wing.shoulder_offset_m",
                "spanwise offset must lie in [0, span_m/2)",
            ));
        }
        unit_axis("wing.shoulder_axis", &w.shoulder_axis)?;
        unit_axis("wing.elbow_axis", &w.elbow_axis)?;
        positive("wing.proximal.mass_kg", w.proximal.mass_kg)?;
        positive("wing.proximal.length_m", w.proximal.length_m)?;
        finite3("wing.proximal.com_m", &w.proximal.com_m)?;
        inertia("wing.proximal.inertia_kgm2", &w.proximal.inertia_kgm2)?;
        positive("wing.distal.mass_kg", w.distal.mass_kg)?;
        finite3("wing.distal.com_m", &w.distal.com_m)?;
        inertia("wing.distal.inertia_kgm2", &w.distal.inertia_kgm2)?;
        if !(self.distal_length_m() > 0.0) {
            return Err(Error::invalid(
                "wing.proximal.length_m",
                "shoulder offset plus proximal length must be shorter than span_m/2",
            ));
        }

        match &self.chord {
            ChordDistribution::Elliptic { root_chord_m } => positive("chord.root_chord_m", *root_chord_m)?,
            ChordDistribution::Table {
                stations_m,
                chord_m,
            } => {
                if stations_m.len() < 2 || stations_m.len() != chord_m.len() {
                    return Err(Error::invalid(
                        "chord.stations_m",
                        "need at least two stations and one chord per station",
                    ));
                }
                if stations_m.windows(2).any(|p| !(p[1] > p[0])) {
                    return Err(Error::invalid("chord.stations_m", "stations must be strictly increasing"));
                }
                if stations_m[0] > -half || stations_m[stations_m.len() - 1] < half {
                    return Err(Error::invalid("chord.stations_m", "table must cover [-span_m/2, span_m/2]"));
                }
                for (&y, &c) in stations_m.iter().zip(chord_m) {
                    let interior = y > -half && y < half;
                    if !c.is_finite() || c < 0.0 || (interior && c <= 0.0) {
                        return Err(Error::invalid(
                            "chord.chord_m",
                            format!("chord must be positive inside the span (got {c} at y = {y})"),
                        ));
                    }
                }
            }
        }

        positive("lift_slope_per_rad", self.lift_slope_per_rad)?;
        positive("air_density_kgm3", self.air_density_kgm3)?;
        if self.n_elements < 2 {
            return Err(Error::invalid("n_elements", "at least 2 blade elements are required"));
        }
        non_negative("profile_drag_coeff", self.profile_drag_coeff)?;
        positive("freestream_floor_mps", self.freestream_floor_mps)?;
        non_negative("gravity_mps2", self.gravity_mps2)?;
        for (i, t) in self.thrusters.iter().enumerate() {
            finite3(&format!("thrusters.{i}.position_m"), &t.position_m)?;
            unit_axis(&format!("thrusters.{i}.axis"), &t.axis)?;
            positive(&format!("thrusters.{i}.max_thrust_n"), t.max_thrust_n)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = super::read_file(path.as_ref())?;
        Self::from_json_str(&text)
    }
}

/// Reads and validates a robot description.
pub fn load_robot(path: impl AsRef<Path>) -> Result<RobotModel> {
    RobotModel::load(path)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be non-negative and finite, got {v}")))
    }
}

fn finite3(field: &str, v: &[f64; 3]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(field, "components must be finite"))
    }
}

fn unit_axis(field: &str, v: &[f64; 3]) -> Result<()> {
    finite3(field, v)?;
    let n = vector3(v).norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(field, format!("axis must be a unit vector (norm {n})")));
    }
    Ok(())
}

fn inertia(field: &str, m: &[[f64; 3]; 3]) -> Result<()> {
    let m = matrix3(m);
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(field, "entries must be finite"));
    }
    let scale = m.abs().max();
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::invalid(field, "inertia tensor must be symmetric"));
    }
    if m.cholesky().is_none() {
        return Err(Error::invalid(field, "inertia tensor must be positive definite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_matches_measured_mass_and_span() {
        let model = RobotModel::default_robot();
        model.validate().unwrap();
        assert_eq!(model.span_m, 0.30);
        assert!((model.total_mass_kg() - 0.040).abs() < 1e-12);
    }

    #[test]
    fn negative_body_mass_names_field() {
        let mut v = serde_json::to_value(RobotModel::default_robot()).unwrap();
        v["body_mass_kg"] = (-1.0).into();
        let err = RobotModel::from_value(v).unwrap_err();
        assert!(err.to_string().contains("body_mass"), "{err}");
    }

    #[test]
    fn single_element_rejected() {
        let mut v = serde_json::to_value(RobotModel::default_robot()).unwrap();
        v["n_elements"] = 1.into();
        let err = RobotModel::from_value(v).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "n_elements"));
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v = serde_json::to_value(RobotModel::default_robot()).unwrap();
        v["spam_m"] = 0.3.into();
        assert!(matches!(RobotModel::from_value(v), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_spd_inertia_rejected() {
        let mut m = RobotModel::default_robot();
        m.wing.distal.inertia_kgm2 = [[1e-6, 0.0, 0.0], [0.0, -1e-6, 0.0], [0.0, 0.0, 1e-6]];
        assert!(m.validate().is_err());
        m.wing.distal.inertia_kgm2 = [[1e-6, 2e-7, 0.0], [0.0, 1e-6, 0.0], [0.0, 0.0, 1e-6]];
        assert!(m.validate().is_err());
    }

    #[test]
    fn chord_table_interpolates() {
        let c = ChordDistribution::Table {
            stations_m: vec![-1.0, 0.0, 1.0],
            chord_m: vec![0.0, 2.0, 1.0],
        };
        assert_eq!(c.chord_at(-0.5, 2.0), 1.0);
        assert_eq!(c.chord_at(0.5, 2.0), 1.5);
        assert_eq!(c.chord_at(0.0, 2.0), 2.0);
        let e = ChordDistribution::Elliptic { root_chord_m: 0.1 };
        assert!((e.chord_at(0.5, 2.0) - 0.1 * 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_tip_chord_is_allowed_but_zero_interior_is_not() {
        let mut m = RobotModel::default_robot();
        m.chord = ChordDistribution::Table {
            stations_m: vec![-0.15, 0.0, 0.15],
            chord_m: vec![0.0, 0.08, 0.0],
        };
        m.validate().unwrap();
        m.chord = ChordDistribution::Table {
            stations_m: vec![-0.15, 0.0, 0.15],
            chord_m: vec![0.05, 0.0, 0.05],
        };
        assert!(m.validate().is_err());
    }
}
