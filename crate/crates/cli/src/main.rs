use std::process::ExitCode;

use clap::Parser;
use radcloud_cli::commands::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": format!("{e:#}"),
                "command": command,
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
