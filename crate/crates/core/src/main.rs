use std::process::ExitCode;

use clap::Parser;
use superatom::cli::{run_cli, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for path in &report.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
