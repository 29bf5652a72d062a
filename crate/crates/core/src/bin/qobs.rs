use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qobs_core::encoding::GibbsSign;
use qobs_core::fixtures::list_fixtures;
use qobs_core::measurement::BornMode;
use qobs_core::scenario::{dims_report, parse_config, run_monte_carlo, write_results, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "qobs", version, about = "Observer-dependent quantum classification scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write summary.json and trials.ndjson.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Create the output directory if it is missing.
        #[arg(long)]
        mkdirs: bool,
        /// Compare every evolution with the exact superoperator exponential.
        #[arg(long)]
        oracle_check: bool,
        /// Print the layout dimensions and stop.
        #[arg(long)]
        layout_only: bool,
        #[arg(long, value_enum)]
        born_mode: Option<BornArg>,
        #[arg(long, value_enum)]
        gibbs_sign: Option<GibbsArg>,
    },
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print layout dimensions without building any matrix.
    Dims {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the bundled fixtures.
    Fixtures,
}

#[derive(Clone, Copy, ValueEnum)]
enum BornArg {
    Closure,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum GibbsArg {
    Minus,
    Paper,
}

fn read(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn print_dims(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let r = dims_report(cfg)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
    Ok(())
}

fn execute(command: Command) -> Result<(), ScenarioError> {
    match command {
        Command::Validate { config } => {
            let cfg = read(&config)?;
            cfg.check()?;
            println!("{}: valid", config.display());
            Ok(())
        }
        Command::Dims { config } => print_dims(&read(&config)?),
        Command::Fixtures => {
            for f in list_fixtures() {
                println!("{:<16} {:<28} {}", f.name, f.file, f.notes);
            }
            Ok(())
        }
        Command::Run { config, trials, seed, out, mkdirs, oracle_check, layout_only, born_mode, gibbs_sign } => {
            let mut cfg = read(&config)?;
            if let Some(t) = trials {
                cfg.run.trials = t;
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            cfg.run.oracle_check |= oracle_check;
            cfg.run.layout_only |= layout_only;
            if let Some(b) = born_mode {
                cfg.run.born_mode = match b {
                    BornArg::Closure => BornMode::Closure,
                    BornArg::Paper => BornMode::Paper,
                };
            }
            if let Some(g) = gibbs_sign {
                cfg.run.gibbs_sign = match g {
                    GibbsArg::Minus => GibbsSign::Minus,
                    GibbsArg::Paper => GibbsSign::Paper,
                };
            }
            cfg.check()?;
            if cfg.run.layout_only {
                return print_dims(&cfg);
            }
            for (tag, point) in cfg.sweep_points() {
                let dir = match &tag {
                    Some(t) => out.join(t),
                    None => out.clone(),
                };
                let result = run_monte_carlo(&point)?;
                write_results(&result.summary, &result.records, &dir, mkdirs || tag.is_some() && out.is_dir())?;
                let s = &result.summary;
                println!("{}{} trials in {:.2}s -> {}", tag.map(|t| format!("[{t}] ")).unwrap_or_default(), s.trials, s.wall_clock_seconds, dir.display());
                for (label, (f, p)) in s.labels.iter().zip(s.frequencies.iter().zip(&s.mean_probabilities)) {
                    println!("  {label:<24} frequency {f:.6}  born {p:.6}");
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
