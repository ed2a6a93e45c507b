use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use caprice::cli::{
    init_logging, parse_config, run_classify, run_encode, run_evaluate, run_generate,
    run_gradcheck, run_ingest, run_train, CliError,
};

#[derive(Parser)]
#[command(
    name = "caprice",
    version,
    about = "MIDI corpus modeling: tokenize, train, sample, and score pieces"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. --set epochs=10.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Log debug detail.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the token store from the MIDI files listed in corpus_dir/manifest.csv.
    Ingest,
    /// Train on the configured split and write checkpoints to output_dir.
    Train,
    /// Sample pieces from a checkpoint into MIDI files plus diagnostics.
    Generate {
        /// Checkpoint file written by `train`.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Number of pieces to sample.
        #[arg(long, default_value_t = 60)]
        count: usize,
    },
    /// Encode store pieces (and optional generated MIDI) into a feature CSV.
    Encode {
        /// Directory of generated MIDI files to encode with label -1.
        #[arg(long, value_name = "DIR")]
        generated: Option<PathBuf>,
    },
    /// Score one MIDI piece against corpus and pool feature tables.
    Classify {
        /// Feature CSV of corpus pieces (label 1).
        #[arg(long, value_name = "CSV")]
        features: PathBuf,
        /// Feature CSV of generated pieces (label -1).
        #[arg(long, value_name = "CSV")]
        pool: PathBuf,
        /// MIDI file to score.
        #[arg(long, value_name = "MIDI")]
        target: PathBuf,
    },
    /// Run the resampled-discriminator protocol in both dataset modes.
    Evaluate {
        /// Directory of generated MIDI files.
        #[arg(long, value_name = "DIR")]
        generated: PathBuf,
        /// Checkpoint the pieces came from, recorded in the report.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Self-test: compare analytic gradients with finite differences.
    Gradcheck,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let config = parse_config(&text, &cli.overrides)?;
    config.log_resolved();
    match &cli.command {
        Command::Ingest => run_ingest(&config),
        Command::Train => run_train(&config),
        Command::Generate { checkpoint, count } => run_generate(&config, checkpoint, *count),
        Command::Encode { generated } => run_encode(&config, generated.as_deref()),
        Command::Classify { features, pool, target } => {
            run_classify(&config, features, pool, target)
        }
        Command::Evaluate { generated, checkpoint } => {
            run_evaluate(&config, generated, checkpoint.as_deref())
        }
        Command::Gradcheck => run_gradcheck(&config),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };
    init_logging(if cli.verbose { LevelFilter::Debug } else { LevelFilter::Info });
    if let Err(err) = run(&cli) {
        log::error!("event=fatal error={:?} exit_code={}", err.to_string(), err.exit_code());
        process::exit(err.exit_code());
    }
}
