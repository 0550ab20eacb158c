mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e.chain().any(|c| matches!(c.downcast_ref::<fewbit::Error>(), Some(fewbit::Error::Diverged { .. })));
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}
