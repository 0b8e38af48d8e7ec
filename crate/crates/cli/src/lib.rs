//! The `fstack` command-line tool.
//!
//! [`run`] parses arguments, applies the configuration file and thread
//! settings, dispatches to a subcommand and maps failures to exit codes:
//! 0 on success, 2 for configuration errors, 3 for data errors and 4 when
//! registration diverges under `--fail-on-divergence`.

pub mod args;
pub mod burst;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod seeds;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::config::PipelineConfig;
use crate::error::{CliResult, Failure};

/// Run the tool with the given arguments (including the program name) and
/// return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.exit_code() {
                0 => 0,
                _ => error::ExitKind::Config.code(),
            };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(failure) => {
            log::error!("{failure}");
            let mut stderr = std::io::stderr().lock();
            let _ = writeln!(stderr, "{}", failure.record());
            failure.exit_code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second call (several runs in one process) keeps the first logger.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("FSTACK_LOG")
        .format_timestamp(None)
        .try_init();
}

/// Size the global rayon pool. The pool can only be built once per process;
/// later requests for a different size are reported and ignored.
fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(Failure::config("config", "threads", "thread count must be >= 1"));
    }
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() && rayon::current_num_threads() != n {
        log::warn!(
            "thread pool already running with {} threads",
            rayon::current_num_threads()
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    cfg.validate()?;
    configure_threads(cli.threads.or(cfg.threads))?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Register(a) => commands::register_cmd(a, &cfg),
        Command::Stack(a) => commands::stack(a, &cfg),
        Command::Noise(a) => commands::noise_cmd(a, &cfg),
        Command::Crops(a) => commands::crops(a, &cfg),
        Command::Split(a) => commands::split(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Pipeline(a) => pipeline::run(a, cfg),
        Command::Fixture(a) => commands::fixture(a),
    }
}
