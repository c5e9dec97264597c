use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonstat_core::env::load_mdp;
use nonstat_core::harness::{render_regret_svg, run_experiment, workers_from_env, AggregateReport, ExperimentSpec};
use nonstat_core::inf_mdp::compute_diameter;
use nonstat_core::master::RunLog;
use nonstat_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nonstat", version, about = "Non-stationary bandit and RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write CSVs, aggregate.json and regret.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed range `a..b` (half-open) or `a..=b`; overrides the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Test threshold scale; `inf` disables the tests.
        #[arg(long)]
        kappa: Option<f64>,
        /// Output directory; overrides the config, defaults to `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the dynamic regret and restart count of a run CSV.
    Regret {
        #[arg(long)]
        log: PathBuf,
    },
    /// Render an aggregate JSON as an SVG regret curve.
    Plot {
        #[arg(long)]
        agg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the diameter of an MDP file.
    Diameter {
        #[arg(long)]
        mdp: PathBuf,
    },
}

// a closed pipe (`nonstat ... | head`) is not an error
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("--seeds", format!("`{text}` is not `a..b` or `a..=b`"));
    let (a, b, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(Error::config("--seeds", format!("`{text}` is empty")));
    }
    Ok(seeds)
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            kappa,
            out,
        } => {
            let mut spec = ExperimentSpec::from_json(&read(&config)?)?;
            if let Some(s) = seeds {
                spec.seeds = parse_seeds(&s)?;
            }
            if let Some(k) = kappa {
                spec.kappa = k;
            }
            let out = out.or(spec.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let report = run_experiment(&spec, &out, workers_from_env()?)?;
            say!(
                "{} seeds: mean regret {} (median {}, IQR {}), mean restarts {}",
                report.seeds.len(),
                report.mean,
                report.median,
                report.iqr,
                report.mean_restarts
            );
            say!("artifacts in {}", out.display());
        }
        Command::Regret { log } => {
            let file = fs::File::open(&log).map_err(|e| Error::config(log.display().to_string(), e.to_string()))?;
            let log = RunLog::read_csv(std::io::BufReader::new(file))?;
            say!("dynamic_regret {}", log.dynamic_regret()?);
            say!("restarts {}", log.restart_count());
        }
        Command::Plot { agg, out } => {
            let report = AggregateReport::from_json(&read(&agg)?)?;
            fs::write(&out, render_regret_svg(&report))?;
        }
        Command::Diameter { mdp } => {
            let m = load_mdp(&read(&mdp)?)?;
            say!("{}", compute_diameter(&m)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
