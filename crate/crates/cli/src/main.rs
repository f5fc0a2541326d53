//! `coverage-lab`: batch front-end for coverage-control experiments.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coverage_core::engine::{evaluate, sweep};
use coverage_core::{run, Error, Scenario, ScenarioConfig, Scheme};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "coverage-lab", version, about = "Simulate coverage control of time-varying densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    Run(Common),
    /// Run every `[compare]` controller on every `[compare]` density and
    /// tabulate total costs.
    Compare(Common),
    /// Print the fast-loop certificates of the initial configuration and
    /// write them to check.json.
    Check {
        #[command(flatten)]
        common: Common,
        /// Certify this fast step instead of the default fraction of the bound.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Measure the gap between the two-timescale and exact trajectories for
    /// each `[sweep]` epsilon.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

/// Failure with its exit code: 2 for unusable input, 1 for everything else.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_config() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COVERAGE_LAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Run(c) => cmd_run(&c),
        Command::Compare(c) => cmd_compare(&c),
        Command::Check { common, step } => cmd_check(&common, step),
        Command::Sweep(c) => cmd_sweep(&c),
    }
}

fn setup(common: &Common) -> Result<ScenarioConfig, Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::new(2, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(1, e.to_string()))?;
    }
    let path = &common.scenario;
    if !path.is_file() {
        return Err(Failure::new(2, format!("{}: scenario file not found", path.display())));
    }
    let mut config = ScenarioConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::new(2, format!("{}: {io}", path.display())),
        e => e.into(),
    })?;
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
        config.validate()?;
    }
    Ok(config)
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::new(2, format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::new(1, format!("{}: {e}", path.display())))
}

fn cmd_run(common: &Common) -> Outcome {
    let config = setup(common)?;
    let scenario = config.scenario()?;
    create_dir(&common.out)?;
    let trace = run(&scenario)?;
    trace.write_to(&common.out)?;
    let summary = trace.summary();
    println!(
        "{}: total cost {:.4}, final tracking error {:.3e}",
        summary.controller, summary.total_cost, summary.final_tracking_error
    );
    Ok(())
}

fn cmd_compare(common: &Common) -> Outcome {
    let config = setup(common)?;
    let controllers = config.compare_controllers()?;
    if controllers.is_empty() {
        return Err(Failure::new(2, "compare.controllers: section is required for `compare`"));
    }
    let densities = config.compare_densities()?;
    let base = config.scenario()?;
    create_dir(&common.out)?;

    let jobs: Vec<(usize, usize)> = (0..controllers.len())
        .flat_map(|c| (0..densities.len()).map(move |d| (c, d)))
        .collect();
    let results: Vec<Result<f64, String>> = jobs
        .par_iter()
        .map(|&(c, d)| {
            let scenario = Scenario {
                density: densities[d].1.clone(),
                controller: controllers[c].clone(),
                ..base.clone()
            };
            let dir = common
                .out
                .join(&densities[d].0)
                .join(format!("{:02}-{}", c, controllers[c].label()));
            let trace = run(&scenario).map_err(|e| e.to_string())?;
            trace.write_to(&dir).map_err(|e| e.to_string())?;
            log::info!("{} on {}: total cost {}", controllers[c].label(), densities[d].0, trace.total_cost());
            Ok(trace.total_cost())
        })
        .collect();

    let table = report::CostTable {
        rows: controllers.iter().map(|c| c.label()).collect(),
        columns: densities.iter().map(|(name, _)| name.clone()).collect(),
        cells: results
            .chunks(densities.len())
            .map(|row| row.iter().map(|r| r.as_ref().ok().copied()).collect())
            .collect(),
    };
    std::fs::write(common.out.join("comparison.csv"), table.to_csv()).map_err(|e| Failure::new(1, e.to_string()))?;
    let markdown = table.to_markdown();
    std::fs::write(common.out.join("comparison.md"), &markdown).map_err(|e| Failure::new(1, e.to_string()))?;
    print!("{markdown}");

    let failures: Vec<String> = jobs
        .iter()
        .zip(&results)
        .filter_map(|(&(c, d), r)| {
            r.as_ref()
                .err()
                .map(|e| format!("{} on {}: {e}", controllers[c].label(), densities[d].0))
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(1, failures.join("\n")))
    }
}

#[derive(Serialize)]
struct CheckReport {
    agents: usize,
    dim: usize,
    t: f64,
    certificates: Vec<coverage_core::Certificate>,
}

fn cmd_check(common: &Common, step: Option<f64>) -> Outcome {
    let config = setup(common)?;
    let scenario = config.scenario()?;
    if let Some(s) = step {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Failure::new(2, "--step must be positive and finite"));
        }
    }
    let eval = evaluate(
        &scenario.initial,
        0.0,
        &scenario.domain,
        &scenario.density,
        &scenario.moments,
        true,
    )?;
    let system = eval.system(&scenario.initial, scenario.controller.kappa)?;
    let safety = match &scenario.controller.law {
        coverage_core::ControlLaw::TvdSp(fl) => fl.safety,
        _ => coverage_core::gradsys::DEFAULT_SAFETY,
    };
    let certificates = Scheme::ALL
        .iter()
        .map(|&scheme| system.split(scheme).certify(&system, step, safety))
        .collect::<Result<Vec<_>, _>>()?;
    let report = CheckReport {
        agents: scenario.n(),
        dim: scenario.d(),
        t: 0.0,
        certificates,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::new(1, e.to_string()))?;
    println!("{text}");
    create_dir(&common.out)?;
    write_json(&common.out.join("check.json"), &report)
}

fn cmd_sweep(common: &Common) -> Outcome {
    let config = setup(common)?;
    let Some(settings) = &config.sweep else {
        return Err(Failure::new(2, "sweep.epsilons: section is required for `sweep`"));
    };
    let scenario = config.scenario()?;
    create_dir(&common.out)?;
    let report = sweep(&scenario, &settings.epsilons)?;
    write_json(&common.out.join("sweep.json"), &report)?;
    println!("epsilon,gap");
    for (e, g) in report.epsilons.iter().zip(&report.gaps) {
        println!("{e},{g:e}");
    }
    let ratios: Vec<String> = report.ratios.iter().map(|r| format!("{r:.3}")).collect();
    println!("ratios: {}", ratios.join(", "));
    Ok(())
}
