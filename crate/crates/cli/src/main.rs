use std::path::PathBuf;
use std::process::ExitCode;

use chainwatch::{Pipeline, PipelineConfig, PipelineError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chainwatch", version, about = "Early detection of malicious addresses from transaction streams")]
struct Cli {
    /// JSON configuration file; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic transaction dataset into OUT/data.
    Synth {
        /// Total number of labeled and unlabeled addresses.
        #[arg(long)]
        addresses: Option<usize>,
    },
    /// Build the transaction graph and index the labeled addresses.
    Ingest,
    /// Export transfer paths at the end of the horizon.
    Paths,
    /// Compute hourly feature rows for every address.
    Features,
    /// Split, mine reliable negatives and select feature lists.
    Select,
    /// Fit split points and the status catalog.
    Segment,
    /// Train the model.
    Train,
    /// Stream hourly predictions for the held-out addresses.
    Predict,
    /// Per-hour metrics and their summaries.
    Eval,
    /// Intention sequences and status n-gram tables.
    Report,
    /// Run every stage from ingest to report.
    All,
}

fn load(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<(), PipelineError> {
        let cfg = load(&cli)?;
        let stage = match &cli.command {
            Command::Synth { addresses } => return Pipeline::new(cfg, &cli.out).synth(*addresses).map(drop),
            Command::Ingest => "ingest",
            Command::Paths => "paths",
            Command::Features => "features",
            Command::Select => "select",
            Command::Segment => "segment",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Eval => "eval",
            Command::Report => "report",
            Command::All => "all",
        };
        Pipeline::new(cfg, &cli.out).run(stage)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let err = anyhow::Error::new(e).context(format!("chainwatch failed (output directory {})", cli.out.display()));
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
