use std::process::ExitCode;

use clap::Parser;

use gbcd_cli::args::{Cli, Command};
use gbcd_cli::commands;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Train(args) => commands::cmd_train(&args),
        Command::Predict(args) => commands::cmd_predict(&args),
        Command::Bench(args) => commands::cmd_bench(&args),
        Command::GenData(args) => commands::cmd_gen_data(&args),
        Command::Correlate(args) => commands::cmd_correlate(&args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
