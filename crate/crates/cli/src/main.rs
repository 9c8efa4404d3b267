use std::process::ExitCode;

use clap::Parser;
use envelofit_cli::{configure_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("ENVELOFIT_THREADS").ok();
    let result = configure_threads(threads.as_deref()).and_then(|()| run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("envelofit: error: {e}");
            ExitCode::from(e.code)
        }
    }
}
