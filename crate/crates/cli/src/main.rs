//! `spanlink` command line: training stages, prediction, evaluation and the
//! analysis harnesses.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "spanlink",
    version,
    about = "Coreference resolution as query-based span prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by the training-style commands.
#[derive(Args, Clone, Debug)]
pub struct ConfigArgs {
    /// TOML run configuration with dotted keys.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set proposal.keep_ratio=0.3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Start from the small single-core settings instead of the full-size defaults.
    #[arg(long)]
    pub desk: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the mention proposal heads and report dev recall.
    PretrainMentions {
        #[command(flatten)]
        config: ConfigArgs,
        /// Start from this checkpoint instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Pretrain the linking network on extractive QA data (`data.qa`).
    PretrainQa {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Joint training; keeps the best dev checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Pretrained checkpoint to start from.
        #[arg(long, conflicts_with = "resume")]
        init: Option<PathBuf>,
        /// Continue a previous run from its `last` checkpoint, optimizer included.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Keep encoder parameters fixed.
        #[arg(long)]
        freeze_encoder: bool,
    },
    /// Predict clusters (CoNLL input) or GAP decisions (`.tsv` input).
    Predict {
        /// Checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        /// CoNLL file, or GAP `.tsv`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score predictions against gold: CoNLL files, or GAP TSV files.
    Evaluate {
        /// Gold CoNLL file or GAP `.tsv`.
        #[arg(long)]
        gold: PathBuf,
        /// Predictions in the matching format.
        #[arg(long)]
        pred: PathBuf,
        /// Print one JSON record instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Proposal and post-linking mention recall across keep ratios.
    RecallCurve {
        /// Checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        /// Gold CoNLL file.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated keep ratios in (0, 1].
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2, 0.3, 0.4, 0.5])]
        ratios: Vec<f64>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Compare speaker names in the text with a same-speaker pair feature.
    SpeakerAblation {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic corpus.
    GenSynthetic {
        /// narrative, dialogue, qa or gap.
        #[arg(long, default_value = "narrative")]
        kind: String,
        /// Documents or examples to write.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Largest speaker count for dialogues.
        #[arg(long, default_value_t = 7)]
        max_speakers: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::PretrainMentions { config, init } => commands::pretrain_mentions(&config, init.as_deref()),
        Command::PretrainQa { config, init } => commands::pretrain_qa(&config, init.as_deref()),
        Command::Train {
            config,
            init,
            resume,
            freeze_encoder,
        } => commands::train(&config, init.as_deref(), resume.as_deref(), freeze_encoder),
        Command::Predict { model, input, output } => commands::predict(&model, &input, &output),
        Command::Evaluate { gold, pred, json } => commands::evaluate(&gold, &pred, json),
        Command::RecallCurve {
            model,
            input,
            ratios,
            json,
        } => commands::recall_curve(&model, &input, &ratios, json),
        Command::SpeakerAblation { config, json } => commands::speaker_ablation(&config, json),
        Command::GenSynthetic {
            kind,
            count,
            seed,
            max_speakers,
            output,
        } => commands::gen_synthetic(&kind, count, seed, max_speakers, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
