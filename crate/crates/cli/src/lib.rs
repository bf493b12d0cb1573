//! Command-line front end for the factorization pipeline. Library-shaped so
//! integration tests can drive it in-process.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult, ErrorClass};

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Mask(a) => commands::mask(a),
        Command::Impute(a) => commands::impute(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
    }
}

/// Worker thread count: flag, else $BTMF_THREADS, else rayon's default.
fn thread_count(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| {
        std::env::var("BTMF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

/// Parse and run; returns the process exit code (0 ok, 1 usage, 2 data,
/// 3 numerical). Every failure prints one machine-parseable line on stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                CliError {
                    class: ErrorClass::Usage,
                    message: first.to_string(),
                }
                .render()
            );
            return ErrorClass::Usage.exit_code();
        }
    };

    let result = match thread_count(&cli) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::usage(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };

    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.render());
            e.class.exit_code()
        }
    }
}
