use std::process::ExitCode;

use clap::Parser;
use hyperband_cli::{run, Cli, Outcome, EXIT_TRUNCATED};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Truncated) => ExitCode::from(EXIT_TRUNCATED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
