use std::path::{Path, PathBuf};

use music_intent::context::ContextWindow;
use music_intent::corpus::TaxonomyKind;
use music_intent::model::TrainConfig;
use music_intent::pipeline::FeatureKind;
use music_intent_llm::EndpointConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Values read from the TOML config file; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub split_seed: Option<u64>,
    pub taxonomy: Option<String>,
    pub feature: Option<String>,
    pub context: Option<ContextWindow>,
    pub contexts: Option<Vec<ContextWindow>>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub word2vec: Option<PathBuf>,
    pub sentence_embeddings: Option<PathBuf>,
    pub train: Option<TrainConfig>,
    pub endpoint: Option<EndpointConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved settings: flags over file values over defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub split: PathBuf,
    pub split_seed: u64,
    pub taxonomy: TaxonomyKind,
    pub feature: FeatureKind,
    pub context: ContextWindow,
    pub contexts: Vec<ContextWindow>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub word2vec: Option<PathBuf>,
    pub sentence_embeddings: Option<PathBuf>,
    pub train: TrainConfig,
    pub endpoint: EndpointConfig,
}

pub fn parse_taxonomy(s: &str) -> Result<TaxonomyKind, CliError> {
    s.parse().map_err(CliError::config)
}

pub fn parse_feature(s: &str) -> Result<FeatureKind, CliError> {
    s.parse().map_err(CliError::config)
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Settings {
    pub fn from_file(file: FileConfig) -> Result<Self, CliError> {
        let out = file.out.unwrap_or_else(|| PathBuf::from("out"));
        Ok(Settings {
            dataset: file.dataset,
            split: file.split.unwrap_or_else(|| out.join("split.json")),
            out,
            split_seed: file.split_seed.unwrap_or(0),
            taxonomy: file
                .taxonomy
                .as_deref()
                .map(parse_taxonomy)
                .transpose()?
                .unwrap_or(TaxonomyKind::UserIntent),
            feature: file
                .feature
                .as_deref()
                .map(parse_feature)
                .transpose()?
                .unwrap_or(FeatureKind::Bow),
            context: file.context.unwrap_or(ContextWindow::CURRENT),
            contexts: file.contexts.unwrap_or_else(|| ContextWindow::ALL.to_vec()),
            seeds: file.seeds.unwrap_or_else(|| vec![0, 1, 2, 3, 4]),
            jobs: file.jobs.unwrap_or_else(default_jobs),
            word2vec: file.word2vec,
            sentence_embeddings: file.sentence_embeddings,
            train: file.train.unwrap_or_default(),
            endpoint: file.endpoint.unwrap_or_default(),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if self.contexts.is_empty() {
            return Err(CliError::config("at least one context window is required"));
        }
        if self.jobs == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        self.train
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.endpoint.validate().map_err(CliError::config)?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path, CliError> {
        let path = self.dataset.as_deref().ok_or_else(|| {
            CliError::input("no dataset given; pass --dataset or set `dataset` in the config")
        })?;
        require_file(path, "dataset")?;
        Ok(path)
    }
}

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!(
            "{what} file {} does not exist",
            path.display()
        )))
    }
}
