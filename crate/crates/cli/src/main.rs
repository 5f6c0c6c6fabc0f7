use std::process::ExitCode;

use clap::Parser;
use tagdistill_cli::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match tagdistill_cli::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", tagdistill_cli::error::render(&e));
            ExitCode::FAILURE
        }
    }
}
