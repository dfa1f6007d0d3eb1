//! Robot, gait and scenario descriptions: JSON ingestion, dotted-path
//! overrides and validation.

mod gait;
mod overrides;
mod robot;
mod scenario;

use std::path::Path;

pub use gait::{gait_eval, Gait, GaitSchedule, JointTargets, JointWave, Waveform, MAX_FLAP_HZ};
pub use overrides::{apply_override, parse_override, Override};
pub use robot::{
    load_robot, ChordDistribution, DistalSegment, ProximalSegment, RobotModel, ThrusterSpec, WingSpec,
};
pub(crate) use robot::{matrix3, vector3};
pub use scenario::{AeroModelKind, Mode, ScenarioConfig, SweepGrid};

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Deserializes a configuration document, naming the offending field on failure.
pub(crate) fn from_document<T: serde::de::DeserializeOwned>(value: serde_json::Value, what: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            what: if path == "." { what.to_string() } else { format!("{what}, field `{path}`") },
            source: e.into_inner(),
        }
    })
}

fn read_json(path: &Path, what: &str) -> Result<serde_json::Value> {
    serde_json::from_str(&read_file(path)?).map_err(|source| Error::Parse {
        what: format!("{what} ({})", path.display()),
        source,
    })
}

/// The three configuration documents of one simulation, validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSet {
    pub robot: RobotModel,
    pub gait: GaitSchedule,
    pub scenario: ScenarioConfig,
}

/// Raw JSON documents, before overrides and validation.
#[derive(Debug, Clone)]
pub struct ConfigDocuments {
    pub robot: serde_json::Value,
    pub gait: serde_json::Value,
    pub scenario: serde_json::Value,
}

impl ConfigDocuments {
    /// Bundled defaults: default morphology, default gait, tethered scenario.
    pub fn bundled() -> Self {
        let parse = |s: &str| serde_json::from_str(s).expect("bundled config parses");
        ConfigDocuments {
            robot: parse(include_str!("../../configs/robot.json")),
            gait: parse(include_str!("../../configs/gait.json")),
            scenario: parse(include_str!("../../configs/tethered.json")),
        }
    }

    /// Reads whichever paths are given and falls back to the bundled document
    /// for the others.
    pub fn load(robot: Option<&Path>, gait: Option<&Path>, scenario: Option<&Path>) -> Result<Self> {
        let mut docs = Self::bundled();
        if let Some(p) = robot {
            docs.robot = read_json(p, "robot config")?;
        }
        if let Some(p) = gait {
            docs.gait = read_json(p, "gait config")?;
        }
        if let Some(p) = scenario {
            docs.scenario = read_json(p, "scenario config")?;
        }
        Ok(docs)
    }

    pub fn apply(&mut self, ov: &Override) -> Result<()> {
        apply_override(self, ov)
    }

    pub fn into_configs(self) -> Result<ConfigSet> {
        let robot = RobotModel::from_value(self.robot)?;
        let gait = GaitSchedule::from_value(self.gait)?;
        let scenario = ScenarioConfig::from_value(self.scenario)?;
        scenario.validate_against(&robot)?;
        Ok(ConfigSet { robot, gait, scenario })
    }
}

impl ConfigSet {
    pub fn bundled() -> Self {
        ConfigDocuments::bundled().into_configs().expect("bundled configs are valid")
    }

    /// Loads, applies overrides in order, then validates.
    pub fn load(
        robot: Option<&Path>,
        gait: Option<&Path>,
        scenario: Option<&Path>,
        overrides: &[Override],
    ) -> Result<Self> {
        let mut docs = ConfigDocuments::load(robot, gait, scenario)?;
        for ov in overrides {
            docs.apply(ov)?;
        }
        docs.into_configs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robot_round_trips_through_json() {
        let model = RobotModel::default_robot();
        let text = serde_json::to_string(&model).unwrap();
        assert_eq!(RobotModel::from_json_str(&text).unwrap(), model);
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("robot.json");
        std::fs::write(&path, include_str!("../../configs/robot.json")).unwrap();
        let model = load_robot(&path).unwrap();
        assert_eq!(model, RobotModel::default_robot());

        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_robot(&path), Err(Error::Parse { .. })));
        assert!(matches!(load_robot(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }
}
