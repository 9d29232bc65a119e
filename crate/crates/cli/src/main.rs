use std::process::ExitCode;

use clap::Parser;
use refereval_cli::{run, Cli, Outcome, UsageError, LOG_LEVELS};
use tracing_subscriber::EnvFilter;

fn init_logging() -> Result<(), String> {
    let level = std::env::var("REFEREVAL_LOG_LEVEL").unwrap_or_else(|_| "warn".to_string());
    if !LOG_LEVELS.contains(&level.as_str()) {
        return Err(format!("REFEREVAL_LOG_LEVEL must be one of {}, got {level:?}", LOG_LEVELS.join(", ")));
    }
    tracing_subscriber::fmt().with_env_filter(EnvFilter::new(level)).with_writer(std::io::stderr).init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_logging() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
