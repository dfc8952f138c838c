mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, FeaturizeCommand};

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Stats(a) => commands::stats(a),
        Command::Folds(a) => commands::folds(a),
        Command::Featurize(FeaturizeCommand::Text(a)) => commands::featurize_text(a),
        Command::Featurize(FeaturizeCommand::Visual(a)) => commands::featurize_visual(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::EvalScenarios(a) => commands::eval_scenarios(a),
        Command::EvalPerImage(a) => commands::eval_per_image(a),
        Command::EvalThousandWords(a) => commands::eval_thousand_words(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Synth(a) => commands::synth(a),
        Command::Extract(a) => commands::extract(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
