mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Emotion-cause-category triplet extraction toolkit.
#[derive(Debug, Parser)]
#[command(name = "ecta", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration file (ecta.toml).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the primary output here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Seed for every random choice (folds, retry jitter, demos).
    #[arg(long, global = true, default_value_t = ecta::config::DEFAULT_SEED)]
    pub seed: u64,
    /// Clause delimiter characters, overriding the configuration.
    #[arg(long, global = true, value_name = "CHARS")]
    pub delimiters: Option<String>,
    /// Category label file (one label per line), overriding the configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub categories: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptKind {
    Extraction,
    Augmentation,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// mock replays a response table; http calls a chat-completions endpoint.
    #[arg(long, value_enum, default_value_t = BackendChoice::Mock)]
    pub backend: BackendChoice,
    /// Mock response table (JSONL of {digest, response}).
    #[arg(long, value_name = "PATH")]
    pub mock_table: Option<PathBuf>,
    /// Model identifier sent to the backend.
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature in [0, 2].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Concurrent backend requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a JSONL corpus and report every invalid record.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Split text, or every document in a corpus, into clauses.
    Segment {
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        text: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Mark triplet spans inline and append the triplet list.
    Annotate {
        #[arg(long)]
        corpus: PathBuf,
        /// Emit only this document, as plain text.
        #[arg(long)]
        doc_id: Option<String>,
    },
    /// Render an extraction or augmentation prompt.
    RenderPrompt {
        #[arg(long, value_enum, default_value_t = PromptKind::Extraction)]
        kind: PromptKind,
        /// Template file; the built-in template when absent.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Input text (already annotated for augmentation prompts).
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        text: Option<String>,
        #[arg(long, requires = "doc_id")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        doc_id: Option<String>,
        /// Comma-separated rule ids to leave out, e.g. 1,3.
        #[arg(long, value_delimiter = ',')]
        drop_rules: Vec<u8>,
        /// Emit JSON with the request digest instead of the transcript.
        #[arg(long)]
        digest: bool,
    },
    /// Run extraction prompts through the backend; writes predictions JSONL.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        drop_rules: Vec<u8>,
        #[command(flatten)]
        backend: BackendArgs,
        /// With the mock backend, echo the input when no table entry matches.
        #[arg(long)]
        echo: bool,
    },
    /// Generate, filter and merge augmented documents.
    Augment {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        n_per_doc: u32,
        #[command(flatten)]
        backend: BackendArgs,
        /// Write the merged corpus here.
        #[arg(long, value_name = "PATH")]
        corpus_out: Option<PathBuf>,
    },
    /// Parse raw model output into triplets and issues.
    ParseOutput {
        /// Output text file, or - for standard input.
        #[arg(long, default_value = "-")]
        input: String,
        /// Exit with a data error when more issues than this are found.
        #[arg(long)]
        max_issues: Option<usize>,
    },
    /// Score predictions against gold triplets.
    Eval {
        /// Raw model output for one document (with --doc-id).
        #[arg(long, requires = "doc_id", conflicts_with = "predictions")]
        pred: Option<PathBuf>,
        /// Predictions JSONL of {id, text}.
        #[arg(long, required_unless_present = "pred")]
        predictions: Option<PathBuf>,
        /// Gold corpus JSONL.
        #[arg(long)]
        gold: PathBuf,
        /// Gold document scored against --pred.
        #[arg(long)]
        doc_id: Option<String>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Plan folds, and with predictions, score every fold.
    Kfold {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Per-fold CSV (requires --predictions).
        #[arg(long, requires = "predictions")]
        csv: Option<PathBuf>,
        /// Headline aggregation: mean or micro.
        #[arg(long)]
        aggregation: Option<String>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Percentage-point differences between two reports (a - b).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Train a toy LoRA layer and report the loss trace.
    LoraDemo {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Emit the full JSON outcome instead of the CSV trace.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// exclude or penalize.
    #[arg(long)]
    pub policy: Option<String>,
    /// default, whitespace or char.
    #[arg(long)]
    pub tokenizer: Option<String>,
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Data(String),
    Usage(String),
    Backend(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Usage(m) | CliError::Backend(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
