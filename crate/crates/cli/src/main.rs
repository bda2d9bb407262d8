//! `dcnet`: analytic calculators and the fabric simulator behind one command.

mod calc;
mod simcmd;
mod table;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "dcnet",
    version,
    about = "Datacenter fabric calculators and packet-level simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form calculators (CSV rows)
    Calc(CalcArgs),
    /// Packet-level simulation
    #[command(subcommand)]
    Sim(simcmd::SimCommand),
}

#[derive(Debug, Args)]
struct CalcArgs {
    /// Write the CSV to this file path instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Aligned table rounded to two significant figures instead of CSV
    #[arg(long, global = true)]
    human: bool,
    #[command(subcommand)]
    command: calc::CalcCommand,
}

pub enum Failure {
    /// Bad input; exit status 1.
    Invalid(anyhow::Error),
    /// Failure after validation; exit status 2.
    Runtime(anyhow::Error),
    /// The watchdog fired; the report was written to this path. Exit status 2.
    Deadlock(PathBuf),
}

fn calc(a: &CalcArgs) -> Result<(), Failure> {
    let table = a.command.run().map_err(Failure::Invalid)?;
    let written = match &a.out {
        Some(path) => fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .and_then(|f| {
                let mut w = io::BufWriter::new(f);
                emit(&table, a.human, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        None => emit(&table, a.human, io::stdout().lock()),
    };
    written.map_err(Failure::Runtime)
}

fn emit(table: &table::Table, human: bool, w: impl Write) -> anyhow::Result<()> {
    if human {
        table.write_human(w)?;
    } else {
        table.write_csv(w)?;
    }
    Ok(())
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text.lines().map(str::trim).take_while(|l| !l.is_empty()).collect();
            eprintln!("{}", message.join(" "));
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Calc(a) => calc(a),
        Command::Sim(s) => s.run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(2)
        }
        Err(Failure::Deadlock(path)) => {
            eprintln!("deadlock: report written to {}", path.display());
            ExitCode::from(2)
        }
    }
}
