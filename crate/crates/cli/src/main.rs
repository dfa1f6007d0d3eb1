use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use flapsim::aero::LiftingLine;
use flapsim::harness::{self, TraceWriter};
use flapsim::kinematics::{Airframe, Segment};
use flapsim::model::{ConfigSet, Override};
use flapsim::oracle;

/// Flapping-wing robot flight simulator.
#[derive(Debug, Parser)]
#[command(name = "flapsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check the configuration, print derived quantities.
    Validate(ConfigArgs),
    /// Run one scenario, writing trace.csv and summary.json.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the scenario's wind/frequency grid with both aerodynamic models.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Run reference checks: wagner, memory, lifting-line, energy, pendulum, jacobian or all.
    Oracle {
        #[arg(value_parser = ["wagner", "memory", "lifting-line", "energy", "pendulum", "jacobian", "all"])]
        suite: String,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Robot description (JSON). Defaults to the bundled airframe.
    #[arg(long)]
    robot: Option<PathBuf>,
    /// Gait schedule (JSON). Defaults to the bundled 2 Hz gait.
    #[arg(long)]
    gait: Option<PathBuf>,
    /// Scenario (JSON). Defaults to the bundled tethered scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Dotted-path override such as `scenario.wind_mps=1.5` or `span_m=0.32`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<Override>,
}

impl ConfigArgs {
    fn load(&self) -> flapsim::Result<ConfigSet> {
        ConfigSet::load(
            self.robot.as_deref(),
            self.gait.as_deref(),
            self.scenario.as_deref(),
            &self.overrides,
        )
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<flapsim::Error> for Failure {
    fn from(e: flapsim::Error) -> Self {
        if e.is_configuration() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(format!("{e:#}"))
    }
}

fn validate(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = args.load()?;
    let airframe = Airframe::new(cfg.robot.clone())?;
    let line = LiftingLine::for_model(&cfg.robot)?;
    let robot = &cfg.robot;
    println!("robot: {}", robot.name);
    println!("total mass: {:.3} kg", robot.total_mass_kg());
    println!("weight: {:.4} N", robot.weight_n());
    println!("span: {} m, root chord {} m", robot.span_m, robot.c0());
    println!("distal segment length: {:.4} m", robot.distal_length_m());
    println!("blade elements: {}", airframe.n_elements());
    let st = airframe.stations();
    for i in 0..st.len() {
        let seg = match airframe.element_segment(i) {
            Segment::Body => "body".to_string(),
            Segment::Proximal(s) => format!("proximal {s:?}").to_lowercase(),
            Segment::Distal(s) => format!("distal {s:?}").to_lowercase(),
        };
        println!(
            "  element {i:2}: y = {:+.5} m, chord {:.5} m, width {:.5} m, {seg}",
            st.y[i], st.chord[i], st.width[i]
        );
    }
    println!("collocation condition estimate: {:.4}", line.condition());
    println!("thrusters: {}", airframe.thrusters().len());
    let sc = &cfg.scenario;
    println!(
        "scenario: {:?}, {} aerodynamics, wind {} m/s, {} steps of {} s, flap {} Hz",
        sc.mode,
        sc.aero_model.label(),
        sc.wind_mps,
        sc.n_steps(),
        sc.dt_s,
        cfg.gait.flap_hz
    );
    println!("valid");
    Ok(())
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn run(args: &ConfigArgs, out: &Path) -> Result<(), Failure> {
    let cfg = args.load()?;
    prepare_out(out)?;
    let mut writer = TraceWriter::create(&out.join("trace.csv"), cfg.robot.thrusters.len())?;
    let summary = harness::run_scenario_with(&cfg, |r| writer.write(r))?;
    writer.finish()?;
    harness::write_json(&out.join("summary.json"), &summary)?;
    println!("{}", summary.line());
    info!("wrote {} rows to {}", summary.rows, out.join("trace.csv").display());
    Ok(())
}

fn sweep(args: &ConfigArgs, out: &Path, jobs: usize) -> Result<(), Failure> {
    let cfg = args.load()?;
    prepare_out(out)?;
    let result = harness::sweep(&cfg, jobs)?;
    harness::write_sweep_csv(&out.join("sweep.csv"), &result)?;
    harness::write_json(&out.join("summary.json"), &result)?;
    let mut failures = 0;
    for p in &result.points {
        for v in [&p.unsteady, &p.quasi_steady] {
            match v {
                harness::VariantResult::Ok(s) => println!("{}", s.line()),
                harness::VariantResult::Failed { error, .. } => {
                    failures += 1;
                    println!("wind={} m/s flap={} Hz: failed: {error}", p.wind_mps, p.flap_hz);
                }
            }
        }
    }
    if failures > 0 {
        return Err(Failure::Runtime(format!("{failures} sweep runs failed")));
    }
    Ok(())
}

fn run_oracle(suite: &str) -> Result<(), Failure> {
    let checks = oracle::run_suite(suite)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{}", c.line());
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} oracle checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLAPSIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Validate(args) => validate(args),
        Command::Run { config, out } => run(config, out),
        Command::Sweep { config, out, jobs } => sweep(config, out, *jobs as usize),
        Command::Oracle { suite } => run_oracle(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
