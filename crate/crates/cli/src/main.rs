mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("BEAMLATTICE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => commands::gen::run(&a),
        Command::Decode(a) => commands::decode::run(&a),
        Command::Segment(a) => commands::segment::run(&a),
        Command::Oracle(a) => commands::oracle::run(&a),
        Command::Bench(a) => commands::bench::run(&a),
        Command::Eval(a) => commands::eval::run(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
