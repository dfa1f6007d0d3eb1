//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};


use flapsim::aero::JONES;
use flapsim::control::{self, ControllerConfig, Mixer};
use flapsim::harness::{self, TraceWriter};
use flapsim::kinematics::Airframe;
use flapsim::model::{ConfigSet, Mode};
use flapsim::oracle;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn wagner() -> Outcome {
    let phi0 = JONES.phi(0.0).unwrap();
    let mut monotone = true;
    let mut prev = phi0;
    for k in 1..=1_000_000 {
        let p = JONES.phi(k as f64 * 1e-4).unwrap();
        monotone &= p > prev;
        prev = p;
    }
    let phi100 = JONES.phi(100.0).unwrap();
    check(
        phi0 == 0.5 && monotone && phi100 > 0.985,
        format!("phi(0) = {phi0}, monotone on [0, 100]: {monotone}, phi(100) = {phi100:.6}"),
    )
}

fn memory_states() -> Outcome {
    let e = oracle::memory_state_error(1e-4, 2.0).unwrap();
    check(e < 1e-3, format!("relative L2 error {e:.3e} (limit 1e-3)"))
}

fn lifting_line() -> Outcome {
    let r = oracle::elliptic_wing(16, 0.05).unwrap();
    let rel = ((r.lift_coefficient - r.reference) / r.reference).abs();
    check(
        rel < 0.01,
        format!(
            "C_L = {:.6}, reference {:.6}, relative error {rel:.3e} (limit 1e-2)",
            r.lift_coefficient, r.reference
        ),
    )
}

fn constrained_dynamics() -> Outcome {
    // five seconds of guarded flapping flight with unsteady aerodynamics
    let mut cfg = ConfigSet::bundled();
    cfg.scenario.mode = Mode::GuardStabilized;
    let residual = harness::run_scenario(&cfg).unwrap().summary.max_constraint_residual;

    let (accel_err, _) = oracle::free_fall(1.0, 1e-3).unwrap();
    let drift = oracle::energy_drift(10.0, 1e-3).unwrap();
    check(
        residual < 1e-6 && accel_err < 1e-8 && drift < 1e-3,
        format!(
            "max constraint residual {residual:.3e} (limit 1e-6), free-fall accel error {accel_err:.3e} (limit 1e-8), energy drift {drift:.3e} (limit 1e-3)"
        ),
    )
}

fn jacobians() -> Outcome {
    let r = oracle::jacobian_consistency(100, 2024).unwrap();
    check(
        r.jacobian < 1e-6 && r.virtual_work < 1e-6,
        format!(
            "B vs finite differences {:.3e}, virtual work {:.3e} (limit 1e-6)",
            r.jacobian, r.virtual_work
        ),
    )
}

fn validation_trend() -> Outcome {
    let cfg = ConfigSet::bundled();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = harness::sweep(&cfg, jobs).unwrap();
    let lifts: Vec<f64> = result
        .points
        .iter()
        .map(|p| p.unsteady.summary().map_or(f64::NAN, |s| s.mean_lift_n))
        .collect();
    let increasing = lifts.windows(2).all(|w| w[1] > w[0]);
    let gaps: Vec<f64> = result.points.iter().map(|p| p.lift_gap().unwrap_or(0.0)).collect();
    let separated = gaps.iter().all(|g| g.abs() > 0.01);
    let winds: Vec<f64> = result.points.iter().map(|p| p.wind_mps).collect();
    check(
        increasing && separated && winds == [0.5, 1.0, 1.5],
        format!("winds {winds:?} m/s, unsteady lift {lifts:?} N, unsteady vs quasi-steady gap {gaps:.3?}"),
    )
}

fn controller() -> Outcome {
    let c = ControllerConfig::default();
    let trace = control::simulate_attitude_recovery(&c.roll, control::DEFAULT_ROLL_INERTIA, 0.2, 1e-4, 4.0);
    let worst_after = trace
        .iter()
        .filter(|(t, _)| *t >= 2.0)
        .map(|(_, th)| th.abs())
        .fold(0.0, f64::max);
    let margin = control::attitude_stability_margin(&c.roll, control::DEFAULT_ROLL_INERTIA);

    let robot = ConfigSet::bundled().robot;
    let airframe = Airframe::new(robot).unwrap();
    let mixer = Mixer::new(airframe.thrusters()).unwrap();
    let mut worst_mix: f64 = 0.0;
    for (r, p, col) in [(0.0, 0.0, 0.39), (0.003, -0.002, 0.39), (-0.004, 0.001, 0.5), (0.001, 0.004, 0.3)] {
        let cmd = mixer.mix([r, p], col);
        assert!(!cmd.saturated);
        worst_mix = worst_mix
            .max((cmd.achieved[0] - r).abs())
            .max((cmd.achieved[1] - p).abs())
            .max((cmd.achieved[2] - col).abs());
    }
    check(
        worst_after < 0.01 && margin < 0.0 && worst_mix < 1e-15,
        format!(
            "max |roll| after 2 s {worst_after:.3e} rad, slowest pole real part {margin:.3}, mixer round-trip error {worst_mix:.1e}"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ConfigSet::bundled();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("trace{i}.csv"));
        let mut w = TraceWriter::create(&path, cfg.robot.thrusters.len()).unwrap();
        harness::run_scenario_with(&cfg, |r| w.write(r)).unwrap();
        w.finish().unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    check(
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!("two traces of {} bytes identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn performance() -> Outcome {
    let cfg = ConfigSet::bundled();
    let start = Instant::now();
    let out = harness::run_scenario(&cfg).unwrap();
    let took = start.elapsed();
    check(
        took < Duration::from_secs(60) && out.summary.steps == 10_000 && cfg.robot.n_elements == 16,
        format!("{} steps with {} elements in {:.2?} (limit 60 s)", out.summary.steps, cfg.robot.n_elements, took),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("wagner function", wagner, Duration::from_secs(1)),
        ("memory states vs convolution", memory_states, Duration::from_secs(10)),
        ("elliptic lifting line", lifting_line, Duration::from_secs(30)),
        ("constrained dynamics", constrained_dynamics, Duration::MAX),
        ("jacobian and virtual work", jacobians, Duration::MAX),
        ("validation trend", validation_trend, Duration::from_secs(300)),
        ("controller and mixer", controller, Duration::MAX),
        ("determinism", determinism, Duration::MAX),
        ("performance", performance, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let in_time = took < *budget;
        let passed = outcome.passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {} ({name}): {} in {:.2?}{}; {}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            took,
            if in_time { "" } else { " (over time budget)" },
            outcome.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
