mod args;
mod commands;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match &cli.command {
        Command::Eval(a) => (commands::eval(a), &a.common.out),
        Command::Decompose(a) => (commands::decompose(a), &a.common.out),
        Command::Check(a) => (commands::check(a), &a.common.out),
    };
    let output = match result {
        Ok(o) => o,
        Err(f) => {
            eprintln!("optrisk: {f}");
            return ExitCode::from(f.code() as u8);
        }
    };
    let written = match out {
        Some(path) => report::write_atomic(path, &output.body),
        None => std::io::stdout().write_all(output.body.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("optrisk: cannot write report: {e}");
        return ExitCode::from(3);
    }
    if output.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
