//! `tretr`: command-line front end for the exposure-fairness toolkit.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for unreadable or
//! invalid input data. Diagnostics go to standard error.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;

use commands::Failure;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(threads))
            .build_global()
        {
            eprintln!("tretr: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("tretr: {msg}");
            eprintln!("Run with --help for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("tretr: {msg}");
            ExitCode::from(2)
        }
    }
}
