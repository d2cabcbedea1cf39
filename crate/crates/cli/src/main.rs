mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use music_intent::context::ContextWindow;
use music_intent::corpus::TaxonomyKind;
use music_intent::pipeline::FeatureKind;
use music_intent_llm::PromptMode;

use config::{FileConfig, Settings};
use error::CliError;

/// Music intent classification experiments.
#[derive(Parser, Debug)]
#[command(name = "music-intent", version, about)]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Dialogue corpus in JSON Lines format.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split manifest (defaults to <out>/split.json).
    #[arg(long)]
    split: Option<PathBuf>,
    /// `intent` or `attribute`.
    #[arg(long)]
    taxonomy: Option<TaxonomyKind>,
    /// bow, tfidf, word2vec or sentence_import.
    #[arg(long)]
    feature: Option<FeatureKind>,
    /// Context window x: 0, 0.5, 1, 2, 3 or 4.
    #[arg(long)]
    context: Option<ContextWindow>,
    /// Seed(s); repeat or separate with commas.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Maximum parallel experiments.
    #[arg(long)]
    jobs: Option<usize>,
    /// Pretrained word vectors (.bin for word2vec binary, text otherwise).
    #[arg(long)]
    word2vec: Option<PathBuf>,
    /// Precomputed 768-d sentence embeddings (JSON Lines).
    #[arg(long)]
    sentence_embeddings: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Hidden layer widths, comma separated; empty for a linear model.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    hidden_dims: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct LlmArgs {
    /// zero_shot or few_shot.
    #[arg(long, default_value = "zero_shot")]
    mode: PromptMode,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    max_requests: Option<usize>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Score a saved transcript instead of calling the endpoint.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the corpus and write corpus statistics.
    Prepare {
        #[command(flatten)]
        common: CommonArgs,
        /// Replace an existing split manifest made with a different seed.
        #[arg(long)]
        force: bool,
    },
    /// Train, calibrate and evaluate one configuration over the seeds.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate every context window for one feature type.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Context windows to evaluate, comma separated.
        #[arg(long, value_delimiter = ',')]
        contexts: Vec<ContextWindow>,
    },
    /// Classify the test split with a chat-completion endpoint.
    LlmEval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Collect reports under the output directory into comparison tables.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolve(
    config: Option<&PathBuf>,
    common: &CommonArgs,
    train: Option<&TrainArgs>,
) -> Result<Settings, CliError> {
    let file = match config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut s = Settings::from_file(file)?;
    if let Some(out) = &common.out {
        if common.split.is_none() && s.split == s.out.join("split.json") {
            s.split = out.join("split.json");
        }
        s.out = out.clone();
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                s.$field = v;
            }
        };
    }
    set!(split, common.split.clone());
    set!(taxonomy, common.taxonomy);
    set!(feature, common.feature);
    set!(context, common.context);
    set!(jobs, common.jobs);
    if common.dataset.is_some() {
        s.dataset = common.dataset.clone();
    }
    if common.word2vec.is_some() {
        s.word2vec = common.word2vec.clone();
    }
    if common.sentence_embeddings.is_some() {
        s.sentence_embeddings = common.sentence_embeddings.clone();
    }
    if !common.seeds.is_empty() {
        s.seeds = common.seeds.clone();
    }
    if let Some(t) = train {
        if let Some(v) = t.epochs {
            s.train.epochs = v;
        }
        if let Some(v) = t.batch_size {
            s.train.batch_size = v;
        }
        if let Some(v) = t.learning_rate {
            s.train.learning_rate = v;
        }
        if let Some(v) = t.lr_decay {
            s.train.lr_decay = v;
        }
        if let Some(v) = &t.hidden_dims {
            s.train.hidden_dims = v.clone();
        }
    }
    s.validate()?;
    Ok(s)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_ref();
    match cli.command {
        Command::Prepare { common, force } => {
            let mut s = resolve(config, &common, None)?;
            if let Some(seed) = common.seeds.first() {
                s.split_seed = *seed;
            }
            commands::prepare(&s, force)
        }
        Command::Run { common, train } => commands::run(&resolve(config, &common, Some(&train))?),
        Command::Sweep {
            common,
            train,
            contexts,
        } => {
            let mut s = resolve(config, &common, Some(&train))?;
            if !contexts.is_empty() {
                s.contexts = contexts;
            }
            commands::sweep(&s)
        }
        Command::LlmEval { common, llm } => {
            let mut s = resolve(config, &common, None)?;
            let e = &mut s.endpoint;
            if let Some(v) = llm.endpoint_url.clone() {
                e.base_url = v;
            }
            if let Some(v) = llm.model.clone() {
                e.model = v;
            }
            if llm.api_key_env.is_some() {
                e.api_key_env = llm.api_key_env.clone();
            }
            if llm.max_requests.is_some() {
                e.max_requests = llm.max_requests;
            }
            if let Some(v) = llm.max_in_flight {
                e.max_in_flight = v;
            }
            if let Some(v) = llm.timeout_secs {
                e.timeout_secs = v;
            }
            s.validate()?;
            commands::llm_eval(&s, llm.mode, llm.replay.as_deref())
        }
        Command::Report { common } => commands::report(&resolve(config, &common, None)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("music-intent: {e}");
            e.exit_code()
        }
    }
}
