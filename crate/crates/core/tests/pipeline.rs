use std::io::Cursor;
use std::sync::Arc;

use music_intent::context::ContextWindow;
use music_intent::corpus::{stratified_split, Dialogue, TaxonomyKind};
use music_intent::features::{SentenceEmbeddings, SENTENCE_EMBEDDING_DIM};
use music_intent::model::{Checkpoint, TrainConfig};
use music_intent::pipeline::{
    context_sweep, run_experiment, split_queries, ExperimentSpec, FeatureKind, Resources,
};
use music_intent::synthetic::generate_corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        learning_rate: 5e-3,
        lr_decay: 0.95,
        hidden_dims: vec![32],
        ..TrainConfig::default()
    }
}

fn spec(feature: FeatureKind, taxonomy: TaxonomyKind, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        feature,
        taxonomy,
        context: ContextWindow::CURRENT,
        train: TrainConfig { seed, ..quick() },
    }
}

/// Embeddings whose first coordinates carry the intent labels plus noise.
fn informative_embeddings(dialogues: &[Dialogue], window: ContextWindow) -> SentenceEmbeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut text = String::new();
    for d in dialogues {
        for (i, t) in d
            .turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_annotated_query())
        {
            let values: Vec<f64> = (0..SENTENCE_EMBEDDING_DIM)
                .map(|j| {
                    let signal = if j < 7 && t.intents.contains(j) {
                        1.0
                    } else {
                        0.0
                    };
                    signal + rng.random_range(-0.05..0.05)
                })
                .collect();
            let record = serde_json::json!({
                "dialogue_id": d.id, "turn_index": i, "context_x": window, "values": values,
            });
            text.push_str(&record.to_string());
            text.push('\n');
        }
    }
    SentenceEmbeddings::read(Cursor::new(text)).unwrap()
}

#[test]
fn end_to_end_is_deterministic_and_checkpoints_reload() {
    let dialogues = generate_corpus(200, 4);
    let split = stratified_split(&dialogues, 0).unwrap();
    let s = spec(FeatureKind::Bow, TaxonomyKind::UserIntent, 3);
    let a = run_experiment(&dialogues, &split, &s, &Resources::default()).unwrap();
    let b = run_experiment(&dialogues, &split, &s, &Resources::default()).unwrap();
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
    assert_eq!(a.loss_trace, b.loss_trace);
    assert!(a.loss_trace.last() < a.loss_trace.first());
    assert!(a.report.macro_f1 > 0.3, "macro-F1 {}", a.report.macro_f1);
    assert_eq!(a.report.labels.len(), 7);

    let mut buf = Vec::new();
    a.checkpoint.write(&mut buf).unwrap();
    let restored = Checkpoint::read(&buf[..]).unwrap();
    let test = split_queries(
        &dialogues,
        &split,
        music_intent::corpus::SplitPart::Test,
        s.context,
    );
    let x = a.featurizer.transform_all(&test).unwrap();
    assert_eq!(
        restored.model.predict_probabilities(&x).unwrap(),
        a.checkpoint.model.predict_probabilities(&x).unwrap()
    );
}

#[test]
fn every_feature_type_trains_on_attributes() {
    let dialogues = generate_corpus(150, 8);
    let split = stratified_split(&dialogues, 2).unwrap();
    for feature in [FeatureKind::Bow, FeatureKind::Tfidf] {
        let out = run_experiment(
            &dialogues,
            &split,
            &spec(feature, TaxonomyKind::MusicalAttribute, 0),
            &Resources::default(),
        )
        .unwrap();
        assert_eq!(out.report.labels.len(), 14);
        assert!((0.0..=1.0).contains(&out.report.macro_f1));
    }
    let err = run_experiment(
        &dialogues,
        &split,
        &spec(FeatureKind::Word2Vec, TaxonomyKind::UserIntent, 0),
        &Resources::default(),
    );
    assert!(err.is_err());
}

#[test]
fn probing_head_recovers_label_signal() {
    let dialogues = generate_corpus(200, 11);
    let split = stratified_split(&dialogues, 0).unwrap();
    let resources = Resources {
        sentences: Some(Arc::new(informative_embeddings(
            &dialogues,
            ContextWindow::CURRENT,
        ))),
        ..Resources::default()
    };
    let probe = run_experiment(
        &dialogues,
        &split,
        &spec(FeatureKind::SentenceImport, TaxonomyKind::UserIntent, 0),
        &resources,
    )
    .unwrap();
    assert!(
        probe.report.macro_f1 > 0.9,
        "macro-F1 {}",
        probe.report.macro_f1
    );

    let other = ContextWindow::PREVIOUS_MESSAGE;
    let missing = run_experiment(
        &dialogues,
        &split,
        &ExperimentSpec {
            context: other,
            ..spec(FeatureKind::SentenceImport, TaxonomyKind::UserIntent, 0)
        },
        &resources,
    );
    assert!(missing.is_err(), "embeddings exist only for x = 0");
}

#[test]
fn sweep_orders_reports_and_matches_single_runs() {
    let dialogues = generate_corpus(120, 6);
    let split = stratified_split(&dialogues, 0).unwrap();
    let windows = [ContextWindow::CURRENT, ContextWindow::PREVIOUS_MESSAGE];
    let base = TrainConfig {
        epochs: 4,
        ..quick()
    };
    let reports = context_sweep(
        &dialogues,
        &split,
        FeatureKind::Tfidf,
        TaxonomyKind::UserIntent,
        &windows,
        &[0, 1],
        &base,
        &Resources::default(),
        2,
    )
    .unwrap();
    let keys: Vec<_> = reports
        .iter()
        .map(|r| (r.config.context, r.config.seed))
        .collect();
    assert_eq!(
        keys,
        [
            (windows[0], Some(0)),
            (windows[0], Some(1)),
            (windows[1], Some(0)),
            (windows[1], Some(1))
        ]
    );
    let single = run_experiment(
        &dialogues,
        &split,
        &ExperimentSpec {
            feature: FeatureKind::Tfidf,
            taxonomy: TaxonomyKind::UserIntent,
            context: windows[1],
            train: TrainConfig { seed: 1, ..base },
        },
        &Resources::default(),
    )
    .unwrap();
    assert_eq!(reports[3], single.report);
}
