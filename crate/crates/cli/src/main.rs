use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use quakeres_cli::args::Cli;
use quakeres_cli::{commands, exit_code};

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format(|buf, record| writeln!(buf, "warning: {}", record.args()))
        .init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
