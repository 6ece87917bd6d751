use std::process::ExitCode;

use clap::Parser;
use migate::cli::{run, Cli};
use migate::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIGATE_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = Error::Config(e.to_string().trim_end().to_string());
            fail(&err);
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn fail(e: &Error) {
    let body = serde_json::to_string(&e.report()).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", e.to_string()));
    eprintln!("{body}");
}
