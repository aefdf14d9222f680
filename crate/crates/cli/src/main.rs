//! `missinglens` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 harmful audit verdict, 5 nothing to test.

mod args;
mod commands;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Ctx, Failure};
use missinglens::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_HARMFUL: u8 = 4;
const EXIT_NOTHING_TO_TEST: u8 = 5;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(&ctx, a),
        Command::Diagnose(a) => commands::diagnose(&ctx, a),
        Command::Impute(a) => commands::impute_cmd(&ctx, a),
        Command::Audit(a) => commands::audit(&ctx, a),
        Command::Edit(a) => commands::edit(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::SurrogateGen(a) => commands::surrogate_gen(&ctx, a),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.harmful {
                ExitCode::from(EXIT_HARMFUL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidConfig(_) => EXIT_USAGE,
                Error::NothingToTest(_) => EXIT_NOTHING_TO_TEST,
                _ => EXIT_DATA,
            })
        }
    }
}
