use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pgtune::commands::{cmd_bench, cmd_report, cmd_run, cmd_tune, ModuleSpec};
use pgtune::config::RunConfig;

/// Benchmark collectives, find guideline violations, and run tuned.
#[derive(Parser)]
#[command(name = "pgtune", version)]
struct Cli {
    /// Configuration file of key=value lines; defaults to $PGTUNE_CONFIG.
    #[arg(long, global = true, env = "PGTUNE_CONFIG")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure Default algorithms and mock-ups, writing raw CSV.
    Bench {
        /// Benchmark only this mock-up for the collective: <coll>:alg=<name>.
        #[arg(long = "module", value_name = "COLL:alg=NAME")]
        modules: Vec<String>,
        /// Output file; stdout if omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Detect violations in benchmark CSV and write profiles.
    Tune {
        /// Benchmark CSV files written by `bench`.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Where to write profiles; overrides `profile_dir`.
        #[arg(long)]
        profile_dir: Option<PathBuf>,
    },
    /// Measure collectives through the tuned runtime.
    Run {
        /// Output file; stdout if omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Latencies relative to the Default measurements, as CSV.
    Report {
        /// CSV whose Default measurements are the baseline.
        #[arg(long)]
        default: PathBuf,
        /// Further CSV files to compare against the baseline.
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Output file; stdout if omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn report_skipped(skipped: &[pgtune::bench::Skipped]) {
    for s in skipped {
        eprintln!("skipped {} at {} bytes: {}", s.function, s.msize, s.reason);
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Bench { modules, output } => {
            let modules = modules
                .iter()
                .map(|m| m.parse::<ModuleSpec>())
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = open_output(output.as_deref())?;
            report_skipped(&cmd_bench(&cfg, &modules, &mut out)?);
            out.flush()?;
        }
        Command::Tune { input, profile_dir } => {
            if let Some(dir) = profile_dir {
                cfg.profile_dir = dir;
            }
            let outcome = cmd_tune(&cfg, &input)?;
            print!("{}", outcome.summary);
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
        }
        Command::Run { output } => {
            let mut out = open_output(output.as_deref())?;
            report_skipped(&cmd_run(&cfg, &mut out)?);
            out.flush()?;
        }
        Command::Report {
            default,
            input,
            output,
        } => {
            let mut out = open_output(output.as_deref())?;
            cmd_report(&default, &input, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err
                .downcast_ref::<pgtune::Error>()
                .is_some_and(|e| e.is_config_error());
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}
