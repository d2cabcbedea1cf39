//! End-to-end experiments: featurize, train, calibrate on validation, score on test.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{
    apply_thresholds, calibrate_thresholds, CalibrateError, Provenance, ThresholdVector,
};
use crate::context::{contextualize, ContextSpec, ContextWindow, ContextualizedQuery};
use crate::corpus::{CorpusError, DatasetSplit, Dialogue, SplitPart, TaxonomyKind};
use crate::eval::{EvalError, F1Report, ReportConfig, SweepPoint};
use crate::features::{
    bow_vectorize, embed_average, fit_vocabulary, split_words, tfidf_vectorize, tokenize,
    EmbeddingTable, FeatureError, FeatureVector, SentenceEmbeddings, SentenceKey, Vocabulary,
};
use crate::model::{train, Checkpoint, ModelError, TrainConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0} features need {1}, which was not provided")]
    MissingResource(FeatureKind, &'static str),
    #[error("the {0} split has no annotated queries")]
    EmptyPart(SplitPart),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Bow,
    Tfidf,
    Word2Vec,
    SentenceImport,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Tfidf,
        FeatureKind::Bow,
        FeatureKind::Word2Vec,
        FeatureKind::SentenceImport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Bow => "bow",
            FeatureKind::Tfidf => "tfidf",
            FeatureKind::Word2Vec => "word2vec",
            FeatureKind::SentenceImport => "sentence_import",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bow" => Ok(FeatureKind::Bow),
            "tfidf" | "tf_idf" => Ok(FeatureKind::Tfidf),
            "word2vec" | "w2v" => Ok(FeatureKind::Word2Vec),
            "sentence_import" | "sentence" | "probing" => Ok(FeatureKind::SentenceImport),
            _ => Err(format!(
                "unknown feature type `{s}` (expected bow, tfidf, word2vec or sentence_import)"
            )),
        }
    }
}

/// Externally supplied inputs some feature types depend on.
#[derive(Clone, Debug, Default)]
pub struct Resources {
    pub word2vec: Option<Arc<EmbeddingTable>>,
    pub sentences: Option<Arc<SentenceEmbeddings>>,
}

/// Every whitespace-separated word that can appear in a contextualized input.
pub fn corpus_words(dialogues: &[Dialogue]) -> HashSet<String> {
    let mut words = HashSet::new();
    for window in ContextWindow::ALL {
        for q in contextualize(dialogues, &ContextSpec::new(window)) {
            words.extend(split_words(&q.input_text).into_iter().map(str::to_owned));
        }
    }
    words
}

/// A feature extractor fitted on the training inputs.
#[derive(Clone, Debug)]
pub enum Featurizer {
    Bow(Vocabulary),
    Tfidf(Vocabulary),
    Word2Vec(Arc<EmbeddingTable>),
    SentenceImport(Arc<SentenceEmbeddings>),
}

impl Featurizer {
    pub fn fit(
        kind: FeatureKind,
        train: &[ContextualizedQuery],
        resources: &Resources,
    ) -> Result<Self, PipelineError> {
        Ok(match kind {
            FeatureKind::Bow | FeatureKind::Tfidf => {
                let docs: Vec<Vec<String>> =
                    train.iter().map(|q| tokenize(&q.input_text)).collect();
                let vocab = fit_vocabulary(&docs)?;
                if kind == FeatureKind::Bow {
                    Featurizer::Bow(vocab)
                } else {
                    Featurizer::Tfidf(vocab)
                }
            }
            FeatureKind::Word2Vec => Featurizer::Word2Vec(resources.word2vec.clone().ok_or(
                PipelineError::MissingResource(kind, "a word embedding file"),
            )?),
            FeatureKind::SentenceImport => {
                Featurizer::SentenceImport(resources.sentences.clone().ok_or(
                    PipelineError::MissingResource(kind, "a sentence embedding file"),
                )?)
            }
        })
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Featurizer::Bow(_) => FeatureKind::Bow,
            Featurizer::Tfidf(_) => FeatureKind::Tfidf,
            Featurizer::Word2Vec(_) => FeatureKind::Word2Vec,
            Featurizer::SentenceImport(_) => FeatureKind::SentenceImport,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Featurizer::Bow(v) | Featurizer::Tfidf(v) => v.len(),
            Featurizer::Word2Vec(t) => t.dim(),
            Featurizer::SentenceImport(_) => crate::features::SENTENCE_EMBEDDING_DIM,
        }
    }

    /// Fails with [`FeatureError::MissingKeys`] when imported embeddings do not cover `queries`.
    pub fn check_coverage(&self, queries: &[ContextualizedQuery]) -> Result<(), PipelineError> {
        if let Featurizer::SentenceImport(s) = self {
            let keys: Vec<SentenceKey> = queries.iter().map(sentence_key).collect();
            s.check_coverage(&keys)?;
        }
        Ok(())
    }

    pub fn transform(&self, query: &ContextualizedQuery) -> Result<FeatureVector, PipelineError> {
        Ok(match self {
            Featurizer::Bow(v) => bow_vectorize(&tokenize(&query.input_text), v).into(),
            Featurizer::Tfidf(v) => tfidf_vectorize(&tokenize(&query.input_text), v).into(),
            Featurizer::Word2Vec(t) => embed_average(&split_words(&query.input_text), t).into(),
            Featurizer::SentenceImport(s) => {
                let key = sentence_key(query);
                match s.get(&key) {
                    Some(v) => v.clone().into(),
                    None => return Err(FeatureError::MissingKeys(vec![key]).into()),
                }
            }
        })
    }

    pub fn transform_all(
        &self,
        queries: &[ContextualizedQuery],
    ) -> Result<Vec<FeatureVector>, PipelineError> {
        queries.iter().map(|q| self.transform(q)).collect()
    }
}

fn sentence_key(q: &ContextualizedQuery) -> SentenceKey {
    SentenceKey {
        dialogue_id: q.dialogue_id.clone(),
        turn_index: q.turn_index,
        window: q.window,
    }
}

/// Multi-hot label matrix, one row per query.
pub fn label_matrix(queries: &[ContextualizedQuery], taxonomy: TaxonomyKind) -> Array2<bool> {
    let n_labels = taxonomy.taxonomy().len();
    let mut out = Array2::from_elem((queries.len(), n_labels), false);
    for (mut row, q) in out.rows_mut().into_iter().zip(queries) {
        for j in q.labels(taxonomy).iter() {
            row[j] = true;
        }
    }
    out
}

/// Annotated queries of one split part at the given context window.
pub fn split_queries(
    dialogues: &[Dialogue],
    split: &DatasetSplit,
    part: SplitPart,
    window: ContextWindow,
) -> Vec<ContextualizedQuery> {
    contextualize(split.select(dialogues, part), &ContextSpec::new(window))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub feature: FeatureKind,
    pub taxonomy: TaxonomyKind,
    pub context: ContextWindow,
    pub train: TrainConfig,
}

impl ExperimentSpec {
    pub fn model_id(&self) -> String {
        format!(
            "{}-{}-x{}-seed{}",
            self.feature,
            self.taxonomy.short_name(),
            self.context,
            self.train.seed
        )
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: F1Report,
    pub thresholds: ThresholdVector,
    pub checkpoint: Checkpoint,
    pub loss_trace: Vec<f64>,
    pub featurizer: Featurizer,
}

pub fn split_id(split: &DatasetSplit) -> String {
    format!("stratified-seed{}", split.seed)
}

/// Fits features and the model on train, calibrates thresholds on validation and scores test.
pub fn run_experiment(
    dialogues: &[Dialogue],
    split: &DatasetSplit,
    spec: &ExperimentSpec,
    resources: &Resources,
) -> Result<ExperimentOutcome, PipelineError> {
    split.validate_against(dialogues)?;
    let queries = |part| {
        let q = split_queries(dialogues, split, part, spec.context);
        if q.is_empty() {
            Err(PipelineError::EmptyPart(part))
        } else {
            Ok(q)
        }
    };
    let (train_q, val_q, test_q) = (
        queries(SplitPart::Train)?,
        queries(SplitPart::Validation)?,
        queries(SplitPart::Test)?,
    );

    let featurizer = Featurizer::fit(spec.feature, &train_q, resources)?;
    for part in [&train_q, &val_q, &test_q] {
        featurizer.check_coverage(part)?;
    }
    let labels: Vec<String> = spec
        .taxonomy
        .taxonomy()
        .labels()
        .iter()
        .map(|s| s.to_string())
        .collect();

    let x_train = featurizer.transform_all(&train_q)?;
    let y_train = label_matrix(&train_q, spec.taxonomy);
    let outcome = train(&x_train, y_train.view(), &spec.train)?;
    drop(x_train);

    let val_probs = outcome
        .model
        .predict_probabilities(&featurizer.transform_all(&val_q)?)?;
    let model_id = spec.model_id();
    let thresholds = calibrate_thresholds(
        val_probs.view(),
        label_matrix(&val_q, spec.taxonomy).view(),
        &labels,
    )?
    .with_provenance(Provenance {
        split_id: split_id(split),
        model_id: model_id.clone(),
    });

    let test_probs = outcome
        .model
        .predict_probabilities(&featurizer.transform_all(&test_q)?)?;
    let predictions = apply_thresholds(test_probs.view(), &thresholds)?;
    let report = F1Report::evaluate(
        predictions.view(),
        label_matrix(&test_q, spec.taxonomy).view(),
        &labels,
        ReportConfig {
            method: spec.feature.to_string(),
            taxonomy: spec.taxonomy,
            context: spec.context,
            seed: Some(spec.train.seed),
            thresholds: Some(model_id),
        },
    )?;

    Ok(ExperimentOutcome {
        report,
        thresholds,
        checkpoint: Checkpoint {
            config: spec.train.clone(),
            labels,
            model: outcome.model,
        },
        loss_trace: outcome.loss_trace,
        featurizer,
    })
}

/// Runs one experiment per (context window, seed) on up to `jobs` threads.
///
/// Reports come back ordered by window, then seed.
pub fn context_sweep(
    dialogues: &[Dialogue],
    split: &DatasetSplit,
    feature: FeatureKind,
    taxonomy: TaxonomyKind,
    windows: &[ContextWindow],
    seeds: &[u64],
    base: &TrainConfig,
    resources: &Resources,
    jobs: usize,
) -> Result<Vec<F1Report>, PipelineError> {
    let specs: Vec<ExperimentSpec> = windows
        .iter()
        .flat_map(|&context| {
            seeds.iter().map(move |&seed| ExperimentSpec {
                feature,
                taxonomy,
                context,
                train: TrainConfig {
                    seed,
                    ..base.clone()
                },
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(|| {
        specs
            .par_iter()
            .map(|spec| run_experiment(dialogues, split, spec, resources).map(|o| o.report))
            .collect()
    })
}

pub fn sweep_points(reports: &[F1Report]) -> Vec<SweepPoint> {
    reports
        .iter()
        .map(|r| SweepPoint {
            taxonomy: r.config.taxonomy,
            x: r.config.context,
            seed: r.config.seed.unwrap_or(0),
            macro_f1: r.macro_f1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{stratified_split, LabelSet, Turn};

    fn toy_corpus() -> Vec<Dialogue> {
        (0..40)
            .map(|i| {
                let genre = ["jazz", "rock", "pop", "metal"][i % 4];
                Dialogue {
                    id: format!("d{i:02}"),
                    turns: vec![
                        Turn::seeker(
                            format!("play some {genre} please"),
                            LabelSet::from_indices([0]),
                            LabelSet::from_indices([i % 4]),
                        ),
                        Turn::recommender("here you go"),
                        Turn::seeker(
                            format!("more upbeat {genre}"),
                            LabelSet::from_indices([1]),
                            LabelSet::from_indices([i % 4]),
                        ),
                    ],
                }
            })
            .collect()
    }

    fn spec(feature: FeatureKind) -> ExperimentSpec {
        ExperimentSpec {
            feature,
            taxonomy: TaxonomyKind::UserIntent,
            context: ContextWindow::CURRENT,
            train: TrainConfig {
                epochs: 30,
                learning_rate: 1e-2,
                lr_decay: 1.0,
                hidden_dims: vec![16],
                batch_size: 8,
                ..Default::default()
            },
        }
    }

    #[test]
    fn feature_kind_names() {
        for k in FeatureKind::ALL {
            assert_eq!(k.as_str().parse::<FeatureKind>().unwrap(), k);
        }
        assert_eq!("TF-IDF".parse::<FeatureKind>().unwrap(), FeatureKind::Tfidf);
        assert!("glove".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn bow_run_learns_separable_intents() {
        let corpus = toy_corpus();
        let split = stratified_split(&corpus, 1).unwrap();
        let out = run_experiment(
            &corpus,
            &split,
            &spec(FeatureKind::Bow),
            &Resources::default(),
        )
        .unwrap();
        assert_eq!(out.report.labels.len(), 7);
        assert_eq!(out.report.get("initial_query").unwrap().f1, 1.0);
        assert_eq!(out.report.get("greeting").unwrap().f1, 1.0);
        assert_eq!(out.loss_trace.len(), 30);
        assert_eq!(out.thresholds.provenance.split_id, "stratified-seed1");
    }

    #[test]
    fn missing_resources_are_reported() {
        let corpus = toy_corpus();
        let split = stratified_split(&corpus, 1).unwrap();
        for kind in [FeatureKind::Word2Vec, FeatureKind::SentenceImport] {
            assert!(matches!(
                run_experiment(&corpus, &split, &spec(kind), &Resources::default()),
                Err(PipelineError::MissingResource(k, _)) if k == kind
            ));
        }
    }

    #[test]
    fn sweep_is_ordered_and_deterministic() {
        let corpus = toy_corpus();
        let split = stratified_split(&corpus, 2).unwrap();
        let base = spec(FeatureKind::Tfidf).train;
        let windows = [ContextWindow::CURRENT, ContextWindow::PREVIOUS_MESSAGE];
        let run = |jobs| {
            context_sweep(
                &corpus,
                &split,
                FeatureKind::Tfidf,
                TaxonomyKind::MusicalAttribute,
                &windows,
                &[0, 1],
                &base,
                &Resources::default(),
                jobs,
            )
            .unwrap()
        };
        let a = run(1);
        assert_eq!(a.len(), 4);
        let order: Vec<(ContextWindow, Option<u64>)> = a
            .iter()
            .map(|r| (r.config.context, r.config.seed))
            .collect();
        assert_eq!(
            order,
            vec![
                (windows[0], Some(0)),
                (windows[0], Some(1)),
                (windows[1], Some(0)),
                (windows[1], Some(1))
            ]
        );
        assert_eq!(a, run(3));
        assert_eq!(sweep_points(&a).len(), 4);
    }

    #[test]
    fn label_matrix_rows() {
        let corpus = toy_corpus();
        let q = contextualize(&corpus[..1], &ContextSpec::default());
        let m = label_matrix(&q, TaxonomyKind::UserIntent);
        assert_eq!(m.dim(), (2, 7));
        assert!(m[[0, 0]] && m[[1, 1]] && !m[[0, 1]]);
    }
}
