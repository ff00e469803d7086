use std::process::ExitCode;

use clap::Parser;
use omcavity::cli::{main_with, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OMCAVITY_LOG", "warn")).init();
    let cli = Cli::parse();
    ExitCode::from(main_with(&cli))
}
