use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ftcbf::automata::select_accepting_run;
use ftcbf::harness::{self, Controller, RunRecord, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "ftcbf", version, about = "Fault-tolerant barrier-function controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Proposed,
    Baseline,
}

impl From<ControllerArg> for Controller {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Proposed => Controller::Proposed,
            ControllerArg::Baseline => Controller::BaselineSingleEkf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded closed-loop simulation and write its logs.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the controller named in the scenario.
        #[arg(long, value_enum)]
        controller: Option<ControllerArg>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run seeds 0..N (offset by --first-seed) and print the aggregate.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, value_enum)]
        controller: Option<ControllerArg>,
        /// Also run the baseline and report both side by side.
        #[arg(long)]
        compare: bool,
        /// Write the full aggregate as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the accepting run and its sub-task plan.
    Decompose {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Re-audit a stored JSON log against a scenario.
    Verify {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write plot CSVs and an SVG for a stored JSON log.
    Plots {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, controller: Option<ControllerArg>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(c) = controller {
        config = config.with_controller(c.into());
    }
    Ok(Scenario::build(config, path.parent())?)
}

fn read_record(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(scenario: &Path, seed: u64, controller: Option<ControllerArg>, out: &Path) -> Result<u8> {
    let scenario = load(scenario, controller)?;
    let started = Instant::now();
    let record = harness::run(&scenario, seed)?;
    std::fs::create_dir_all(out)?;
    let stem = format!("{}_seed{seed}", scenario.config.name);
    let json_path = out.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string(&record)?)?;
    std::fs::write(out.join(format!("{stem}.csv")), record.log.to_csv())?;
    println!("{}", serde_json::to_string_pretty(&record.report)?);
    println!(
        "termination: {:?}  ({} samples, {:.2}s)  log: {}",
        record.termination,
        record.log.len(),
        started.elapsed().as_secs_f64(),
        json_path.display()
    );
    Ok(record.termination.exit_code() as u8)
}

fn summary_line(label: &str, agg: &harness::Aggregate) -> String {
    format!(
        "{label:>9}: satisfied {}/{} ({:.3}, Wilson 95% [{:.3}, {:.3}]), violated {}, inconclusive {}, infeasible aborts {}, diverged {}",
        agg.satisfied,
        agg.runs,
        agg.satisfaction_fraction,
        agg.wilson_interval.0,
        agg.wilson_interval.1,
        agg.violated,
        agg.inconclusive,
        agg.infeasible_aborts,
        agg.diverged
    )
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { scenario, seed, controller, out } => simulate(&scenario, seed, controller, &out),
        Command::Montecarlo { scenario, seeds, first_seed, controller, compare, json } => {
            let seeds: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let primary = load(&scenario, controller)?;
            let started = Instant::now();
            let agg = harness::montecarlo(&primary, &seeds)?;
            let name = match primary.config.controller {
                Controller::Proposed => "proposed",
                Controller::BaselineSingleEkf => "baseline",
            };
            println!("{}", summary_line(name, &agg));
            let mut all = vec![(name, agg)];
            if compare {
                let baseline = load(&scenario, Some(ControllerArg::Baseline))?;
                let agg = harness::montecarlo(&baseline, &seeds)?;
                println!("{}", summary_line("baseline", &agg));
                all.push(("baseline", agg));
            }
            println!("elapsed: {:.1}s", started.elapsed().as_secs_f64());
            if let Some(path) = json {
                let map: serde_json::Map<String, serde_json::Value> =
                    all.into_iter().map(|(k, v)| Ok((k.to_string(), serde_json::to_value(v)?))).collect::<Result<_>>()?;
                std::fs::write(&path, serde_json::to_string_pretty(&map)?)?;
            }
            Ok(0)
        }
        Command::Decompose { scenario } => {
            let scenario = load(&scenario, None)?;
            let run = select_accepting_run(&scenario.dra)?;
            let names = scenario.dra.state_names();
            let path: Vec<&str> = run.states.iter().map(|&s| names[s].as_str()).collect();
            println!("propositions:");
            for prop in scenario.dra.propositions() {
                println!("  {prop} = {}", scenario.map.predicate_of(prop).unwrap_or("?"));
            }
            println!("run: {} (cycle from {})", path.join(" -> "), names[run.states[run.loop_start]]);
            for task in scenario.subtasks(&run)? {
                println!(
                    "[{}] {} -> {}: keep {} ; reach {}",
                    task.index, names[task.from], names[task.to], task.safety, task.goal
                );
                for w in &task.warnings {
                    println!("  warning: {w}");
                }
            }
            Ok(0)
        }
        Command::Verify { log, scenario } => {
            let record = read_record(&log)?;
            let scenario = load(&scenario, Some(match record.scenario.controller {
                Controller::Proposed => ControllerArg::Proposed,
                Controller::BaselineSingleEkf => ControllerArg::Baseline,
            }))?;
            let report = harness::verify(&record, &scenario)?;
            println!("verified: {:?}", report.verdict);
            Ok(if report.verdict.is_violated() { 2 } else { 0 })
        }
        Command::Plots { log, out } => {
            let record = read_record(&log)?;
            let scenario = Scenario::build(record.scenario.clone(), log.parent())?;
            let out = out.unwrap_or_else(|| log.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            let stem = log.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            if record.log.is_empty() {
                bail!("log is empty");
            }
            for path in harness::emit_plots(&record, &scenario, &out, stem)? {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
    }
}
