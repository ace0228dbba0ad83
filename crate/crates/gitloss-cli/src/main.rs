use std::process::ExitCode;

use clap::Parser;

use gitloss_cli::cli::{Cli, Command};
use gitloss_cli::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(args) => commands::cmd_train(args).map(|()| true),
        Command::Sweep(args) => commands::cmd_sweep(args).map(|()| true),
        Command::Curves(args) => commands::cmd_curves(args).map(|()| true),
        Command::Scatter(args) => commands::cmd_scatter(args).map(|()| true),
        Command::Verify(args) => commands::cmd_verify(args).map(|()| true),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
