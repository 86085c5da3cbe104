use std::process::ExitCode;

use clap::Parser;
use hankel_slra_cli::{run, Args, RunConfig};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HSLRA_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for non-convergence.
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = RunConfig::from_args(args).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) if outcome.converged => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("hslra: the rank tolerance was not reached; results were written with converged = false");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("hslra: {e}");
            ExitCode::FAILURE
        }
    }
}
