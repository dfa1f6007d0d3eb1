use flapsim::model::{parse_override, AeroModelKind, ConfigSet, Mode};
use flapsim::Error;

#[test]
fn bundled_configs_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ConfigSet::bundled();
    let robot = dir.path().join("robot.json");
    let gait = dir.path().join("gait.json");
    let scenario = dir.path().join("scenario.json");
    flapsim::harness::write_json(&robot, &cfg.robot).unwrap();
    flapsim::harness::write_json(&gait, &cfg.gait).unwrap();
    flapsim::harness::write_json(&scenario, &cfg.scenario).unwrap();
    let loaded = ConfigSet::load(Some(&robot), Some(&gait), Some(&scenario), &[]).unwrap();
    assert_eq!(loaded, cfg);
    assert!((cfg.robot.total_mass_kg() - 0.040).abs() < 1e-12);
}

#[test]
fn overrides_apply_before_validation() {
    let ovs = ["scenario.wind_mps=1.5", "aero_model=\"quasi_steady\"", "flap_hz=3", "mode=guard_stabilized"]
        .map(|s| parse_override(s).unwrap());
    let cfg = ConfigSet::load(None, None, None, &ovs).unwrap();
    assert_eq!(cfg.scenario.wind_mps, 1.5);
    assert_eq!(cfg.scenario.aero_model, AeroModelKind::QuasiSteady);
    assert_eq!(cfg.scenario.mode, Mode::GuardStabilized);
    assert_eq!(cfg.gait.flap_hz, 3.0);

    let bad = ConfigSet::load(None, None, None, &[parse_override("n_elements=0").unwrap()]).unwrap_err();
    assert!(matches!(bad, Error::Validation { ref field, .. } if field == "n_elements"));
    let bad = ConfigSet::load(None, None, None, &[parse_override("flap_hz=50").unwrap()]).unwrap_err();
    assert!(bad.is_configuration());
}

#[test]
fn missing_file_is_configuration_error() {
    let err = ConfigSet::load(Some(std::path::Path::new("/nonexistent/robot.json")), None, None, &[]).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.is_configuration());
}
