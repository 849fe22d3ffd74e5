mod args;
mod commands;
mod config;
mod error;
mod manifest;
mod store;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> error::Result<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Mine(a) => commands::mine(a),
        Command::ReviewTemplate(a) => commands::review_template(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Attribute(a) => commands::attribute(a),
        Command::Align(a) => commands::align(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::usage(e.kind().to_string());
            eprintln!("{}", err.json_line());
            return ExitCode::from(err.kind.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deconf: {e}");
            eprintln!("{}", e.json_line());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
