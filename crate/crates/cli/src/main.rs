use std::process::ExitCode;

use clap::Parser;
use trackfuse_cli::args::{Cli, Command};
use trackfuse_cli::commands;
use trackfuse_cli::CliError;

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("summaries serialize")
    );
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let s = commands::simulate_cmd(&a)?;
            println!(
                "{}: {} frames, {} failure episodes, detector {} TP / {} FP, {} learning invocations",
                a.out.display(),
                s.frames,
                s.failure_episodes,
                s.detector_tp,
                s.detector_fp,
                s.learning_invocations
            );
        }
        Command::Run(a) => {
            let s = commands::run_cmd(&a)?;
            if a.summary.is_none() {
                print_json(&s);
            }
        }
        Command::Evaluate(a) => print_json(&commands::evaluate_cmd(&a)?),
        Command::Inspect(a) => print!("{}", commands::inspect_cmd(&a)?),
        Command::Params(a) => {
            commands::params_cmd(&a)?;
            println!("wrote {}", a.out.display());
        }
        Command::Sweep(a) => print_json(&commands::sweep_cmd(&a)?.1),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
