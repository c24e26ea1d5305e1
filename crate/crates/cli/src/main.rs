use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use utilgrid::broker::Strategy;
use utilgrid::runner::{run_scenario, validate_scenario, RunOptions, EXIT_INVALID, EXIT_OK, EXIT_PARSE};
use utilgrid::scenario::{Overrides, ScenarioError};
use utilgrid::sweep::{expand, parse_plan};

/// Economy-driven utility-grid simulator.
#[derive(Parser)]
#[command(name = "utilgrid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write summary.json, jobs.csv and ledger.csv.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the event trace to events.csv.
        #[arg(long)]
        trace: bool,
        /// Use this strategy for every session: cost, time or cost-time.
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Check a scenario without simulating it.
    Validate { scenario: PathBuf },
    /// Print the jobs a plan file expands to.
    Expand { plan: PathBuf },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

fn run(scenario: &Path, opts: RunOptions) -> ExitCode {
    let result = run_scenario(scenario, &opts);
    if let Some(s) = &result.summary {
        for sess in s["sessions"].as_array().into_iter().flatten() {
            println!(
                "{}: {}/{} done, cost {}, makespan {}, deadline met {}",
                sess["name"].as_str().unwrap_or_default(),
                sess["jobs_done"],
                sess["jobs_total"],
                sess["total_cost"],
                sess["makespan"],
                sess["deadline_met"]
            );
        }
        println!("events {}, conservation ok {}, outputs in {}", s["events"], s["conservation_ok"], opts.out_dir.display());
    }
    if result.code != EXIT_OK {
        eprintln!("{}", result.status_json());
    }
    exit(result.code)
}

fn validate(scenario: &Path) -> ExitCode {
    match validate_scenario(scenario) {
        Ok(findings) if findings.is_empty() => {
            println!("ok");
            exit(EXIT_OK)
        }
        Ok(findings) => {
            for f in &findings {
                println!("{f}");
            }
            exit(EXIT_INVALID)
        }
        Err(e @ ScenarioError::Invalid(_)) => {
            eprintln!("{e}");
            exit(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("{e}");
            exit(EXIT_PARSE)
        }
    }
}

fn expand_plan(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return exit(EXIT_PARSE);
        }
    };
    let jobs = match parse_plan(&text).map_err(|e| e.to_string()).and_then(|p| expand::<f64>(&p).map_err(|e| e.to_string())) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return exit(EXIT_INVALID);
        }
    };
    println!("job\tbindings\tlength_mi\tinputs\toutput_mb");
    for j in &jobs.jobs {
        let bindings: Vec<String> = j.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let inputs: Vec<String> = j.inputs.iter().map(|f| format!("{}:{}", f.name, f.size_mb)).collect();
        println!("{}\t{}\t{}\t{}\t{}", j.name, bindings.join(","), j.length_mi, inputs.join(","), j.output_mb);
    }
    eprintln!("{} jobs, {} MB input", jobs.len(), jobs.total_input_mb());
    exit(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            trace,
            strategy,
        } => run(
            &scenario,
            RunOptions {
                overrides: Overrides { seed, strategy },
                out_dir: out,
                trace,
            },
        ),
        Command::Validate { scenario } => validate(&scenario),
        Command::Expand { plan } => expand_plan(&plan),
    }
}
