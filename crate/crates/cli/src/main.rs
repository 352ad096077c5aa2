//! `textcf` executable. Exit status: 0 on success, 1 on a usage or
//! configuration error, 2 on an internal failure.

mod args;
mod commands;
mod manifest;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::LazyLock;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!("{} (checkpoint format {})", manifest::TOOL_VERSION, manifest::checkpoint_format())
});

const EXIT_USER: u8 = 1;
const EXIT_INTERNAL: u8 = 2;

fn parse() -> Result<Cli, clap::Error> {
    let matches = Cli::command().version(VERSION.as_str()).try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn run(cli: Cli) -> textcf::Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(textcf::Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| textcf::Error::Internal(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Prepare(a) => commands::prepare(a)?,
        Command::Train(a) => commands::train(a, cli.threads)?,
        Command::Evaluate(a) => commands::evaluate_run(a)?,
        Command::Recommend(a) => commands::recommend(a)?,
        Command::Saliency(a) => commands::saliency(a)?,
        Command::GradCheck(a) => {
            if !commands::grad_check(a)? {
                eprintln!("error: gradient check failed");
                return Ok(ExitCode::from(EXIT_INTERNAL));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USER),
            };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { EXIT_INTERNAL } else { EXIT_USER })
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
