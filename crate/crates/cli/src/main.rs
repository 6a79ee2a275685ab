use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use resshare::schedule::ExplorationSchedule;
use resshare::Scenario;
use resshare_cli::config::{AlgorithmName, ExperimentConfig, OUT_ENV};
use resshare_cli::run::resolve_out;
use resshare_cli::{cmd_analyze, cmd_plotdata, cmd_run};

#[derive(Parser)]
#[command(name = "resshare", version, about = "Decentralized resource-sharing bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment over several seeds and write metrics files.
    Run(RunArgs),
    /// Print the constants report of a scenario.
    Analyze(AnalyzeArgs),
    /// Turn regret files into R(t)/ln t series.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// dloe, dlc, oracle or random.
    #[arg(long)]
    algorithm: Option<AlgorithmName>,
    /// Output directory (default: config `out`, then $RESSHARE_OUT, then ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exploration constant(s) or schedule: a number, `log` or `power`; comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    exploration: Vec<ExplorationSchedule>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Scenario file, or an experiment config whose scenario is analyzed.
    /// Without it the builtin reference scenario is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra accuracy values to compare, e.g. `--epsilon 0.0811`.
    #[arg(long)]
    epsilon: Vec<f64>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory written by `run`.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

fn load_scenario(path: &PathBuf) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("{} is not valid TOML", path.display()))?;
    if table.contains_key("algorithm") {
        ExperimentConfig::from_path(path)?.load_scenario()
    } else {
        Ok(Scenario::from_toml_str(&text).with_context(|| format!("scenario {}", path.display()))?)
    }
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let mut config = ExperimentConfig::from_path(&args.config)?;
            if let Some(s) = args.seeds {
                config.seeds = s;
            }
            if let Some(h) = args.horizon {
                config.horizon = h;
            }
            if let Some(a) = args.algorithm {
                config.algorithm = a;
            }
            if !args.exploration.is_empty() {
                config.exploration = args.exploration;
            }
            let out = resolve_out(args.out.as_deref(), &config);
            let outcome = cmd_run(&config, &out)?;
            for sweep in &outcome.sweeps {
                println!("{}:", sweep.label);
                let row = |name: &str, values: Vec<String>| println!("  {name:<18} {}", values.join("  "));
                row("t", sweep.checkpoints.iter().map(|t| format!("{t:>9}")).collect());
                row(
                    "% optimal",
                    sweep.percent_optimal.mean.iter().map(|p| format!("{p:>9.2}")).collect(),
                );
                for k in 0..outcome.resources {
                    row(
                        &format!("user {} on {}", config.share_user, k + 1),
                        sweep.checkpoints.iter().map(|&t| format!("{:>9.2}", sweep.share_at(t, k, outcome.resources).unwrap())).collect(),
                    );
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Analyze(args) => {
            let scenario = match &args.config {
                Some(p) => load_scenario(p)?,
                None => Scenario::reference_osa(),
            };
            let extra: Vec<(String, f64)> = args.epsilon.iter().map(|&e| (format!("given {e}"), e)).collect();
            let report = cmd_analyze(&scenario, &extra)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
        }
        Command::Plotdata(args) => {
            let dir = args.out.unwrap_or_else(|| PathBuf::from("results"));
            let series = cmd_plotdata(&dir)?;
            println!("wrote {} series under {}", series.len(), dir.display());
        }
    }
    Ok(())
}
