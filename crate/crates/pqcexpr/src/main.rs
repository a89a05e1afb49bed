use std::process::ExitCode;

use clap::Parser;

mod cli {
    pub mod args;
    pub mod commands;
}

fn main() -> ExitCode {
    let args = cli::args::Cli::parse();
    match cli::commands::run(args, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
