mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(error::ExitCode::Config as u8),
            };
        }
    };
    let ctx = Ctx { quiet: cli.quiet };
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Retexture(a) => commands::retexture_cmd(&ctx, a),
        Command::Tune(a) => commands::tune(&ctx, a),
        Command::Init(a) => commands::init(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
