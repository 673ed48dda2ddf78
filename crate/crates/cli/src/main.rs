use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = rpol::cli::Cli::parse();
    match rpol::cli::execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
