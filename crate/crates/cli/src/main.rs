mod commands;
mod error;
mod manifest;
mod opts;
mod report;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Ctx, Outcome};
use error::{usage, CliError, CliResult};
use manifest::RunManifest;
use opts::{Cli, Command};

fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    if cli.threads == 0 {
        return usage("--threads must be at least 1");
    }
    let config = match &cli.config {
        Some(path) => Some(serde_json::from_str(&fs::read_to_string(path)?)?),
        None => None,
    };
    let ctx = Ctx {
        config,
        force: cli.force,
    };
    let start = Instant::now();
    let outcome: Outcome = match &cli.command {
        Command::GenData(a) => commands::gen_data(a, &ctx)?,
        Command::Train(a) => commands::train(a, &ctx)?,
        Command::Analyze(a) => commands::analyze(a, &ctx)?,
        Command::Eval(a) => commands::eval(a, &ctx)?,
        Command::AblateRank(a) => commands::ablate_rank(a, &ctx)?,
        Command::Report(a) => commands::report(a, &ctx)?,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cli.command.name().to_string(),
        command_line: argv.to_vec(),
        options: outcome.options,
        resolved: outcome.resolved,
        seed: outcome.seed,
        threads: cli.threads,
        inputs: outcome.inputs,
        output_dir: outcome.out.clone(),
        outputs: outcome.outputs,
        summary: outcome.summary,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.write(&outcome.out)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err: &CliError = &e;
            let line = serde_json::json!({"error": err.kind(), "message": err.to_string()});
            eprintln!("{line}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
