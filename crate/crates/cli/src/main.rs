use std::process::ExitCode;

use clap::Parser;
use ippsm_cli::exit::exit_code;
use ippsm_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ippsm_cli::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
