mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::Parser;
use concord_core::classifier::BackendError;
use concord_core::triage::TriageError;
use concord_server::StartupError;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command, RoundCommand, TriageCommand, VerdictCommand};
use settings::Settings;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(args) => commands::ingest(&settings, args),
        Command::Anonymize(args) => commands::anonymize_cmd(args),
        Command::Pairs(command) => commands::pairs(&settings, command),
        Command::Train(args) => commands::train(&settings, args),
        Command::Predict(args) => commands::predict(&settings, args),
        Command::Evaluate(args) => commands::evaluate_cmd(args),
        Command::Disagreements(args) => commands::disagreements(args),
        Command::Triage(TriageCommand::Serve(args)) => commands::triage_serve(&settings, args),
        Command::Verdict(VerdictCommand::Add(args)) => commands::verdict_add(&settings, args),
        Command::Apply(args) => commands::apply(args),
        Command::Round(RoundCommand::Next(args)) => commands::round_next(&settings, args),
        Command::Report(args) => commands::report(&settings, args),
        Command::Audit(args) => commands::audit(&settings, args),
        Command::ReferenceBackend(args) => commands::reference_backend(&settings, args),
    }
}

/// 2 when the classifier or the link to it failed, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let backend_failed = |b: &BackendError| b.is_transport();
    for cause in err.chain() {
        if let Some(b) = cause.downcast_ref::<BackendError>() {
            return if backend_failed(b) { 2 } else { 1 };
        }
        match cause.downcast_ref::<TriageError>() {
            Some(TriageError::Backend(b)) => return if backend_failed(b) { 2 } else { 1 },
            Some(_) => return 1,
            None => {}
        }
        match cause.downcast_ref::<StartupError>() {
            Some(StartupError::Backend(b) | StartupError::Replay(TriageError::Backend(b))) => {
                return if backend_failed(b) { 2 } else { 1 }
            }
            Some(_) => return 1,
            None => {}
        }
    }
    1
}
