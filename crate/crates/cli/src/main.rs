use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use grw_cli::report::ensure_writable;
use grw_cli::{models, run, schema, write_outputs, RunConfig};

const EXIT_SUITE_FAILURE: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "grw",
    version,
    about = "Spacelike-graph experiments in warped-product spacetimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a config and write report.json plus CSV tables.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seed; overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// More log output; repeat for debug.
        #[arg(short, long, action = ArgAction::Count)]
        verbose: u8,
    },
    /// Built-in models and the hypotheses each one meets.
    ListModels,
    /// Print the config JSON schema.
    Schema,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            verbose,
        } => {
            let level = match verbose {
                0 => log::LevelFilter::Warn,
                1 => log::LevelFilter::Info,
                _ => log::LevelFilter::Debug,
            };
            env_logger::Builder::new().filter_level(level).init();
            run_command(config, out, seed)
        }
        Command::ListModels => match models::render() {
            Ok(s) => emit(&s),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Schema => emit(&(serde_json::to_string_pretty(&schema::schema()).expect("schema serializes") + "\n")),
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> ExitCode {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_command(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let config_error = |e: grw_cli::ConfigError| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_CONFIG_ERROR)
    };
    let mut cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Err(e) = ensure_writable(&cfg.output_dir) {
        return config_error(e);
    }
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    if let Err(e) = write_outputs(&report, &cfg.output_dir) {
        eprintln!("cannot write reports to {}: {e}", cfg.output_dir.display());
        return ExitCode::from(EXIT_CONFIG_ERROR);
    }
    for s in &report.suites {
        println!("{:<16} {}", s.suite.name(), if s.passed { "pass" } else { "FAIL" });
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        for f in &report.failures {
            eprintln!("failure: {f}");
        }
        ExitCode::from(EXIT_SUITE_FAILURE)
    }
}
