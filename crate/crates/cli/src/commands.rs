use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use music_intent::calibrate::ThresholdVector;
use music_intent::context::ContextWindow;
use music_intent::corpus::{
    label_frequency_report, load_dialogues, stratified_split, vocabulary_stats, DatasetSplit,
    Dialogue, SplitPart, TaxonomyKind,
};
use music_intent::eval::{average_curve, mean_std, render_report, write_sweep_csv, F1Report};
use music_intent::features::{load_embedding_table, load_sentence_embeddings};
use music_intent::model::TrainConfig;
use music_intent::pipeline::{
    context_sweep, corpus_words, run_experiment, split_queries, sweep_points, ExperimentOutcome,
    ExperimentSpec, FeatureKind, Resources,
};
use music_intent_llm::{
    evaluate_endpoint, replay_transcript, EvalQuery, HttpChatClient, LlmEvaluation, LlmTask,
    PromptMode, RequestPolicy,
};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::artifacts::{input_record, ArtifactDir, InputRecord};
use crate::config::{require_file, Settings};
use crate::error::CliError;

fn load_corpus(s: &Settings) -> Result<Vec<Dialogue>, CliError> {
    let path = s.dataset()?;
    eprintln!("loading {}", path.display());
    Ok(load_dialogues(path)?)
}

fn load_split(s: &Settings, dialogues: &[Dialogue]) -> Result<DatasetSplit, CliError> {
    if !s.split.is_file() {
        return Err(CliError::input(format!(
            "split manifest {} not found; run `music-intent prepare` first",
            s.split.display()
        )));
    }
    let split = DatasetSplit::load(&s.split)?;
    split.validate_against(dialogues)?;
    Ok(split)
}

fn csv_bytes(
    write: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct PrepareSummary {
    split_seed: u64,
    dialogues: BTreeMap<String, usize>,
    queries: BTreeMap<String, usize>,
    max_label_deviation: f64,
    vocabulary: music_intent::corpus::VocabularyStats,
}

pub fn prepare(s: &Settings, force: bool) -> Result<(), CliError> {
    let dialogues = load_corpus(s)?;
    let split = stratified_split(&dialogues, s.split_seed)?;
    if s.split.is_file() && !force {
        let existing = DatasetSplit::load(&s.split)?;
        if existing != split {
            return Err(CliError::runtime(format!(
                "{} already holds a different split (seed {}); pass --force to replace it",
                s.split.display(),
                existing.seed
            )));
        }
    }
    if let Some(parent) = s.split.parent() {
        std::fs::create_dir_all(parent)?;
    }
    split.save(&s.split)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("dataset".to_string(), input_record(s.dataset()?)?);
    let mut dir = ArtifactDir::create(
        &s.out.join("prepare"),
        &format!("split-seed{}", s.split_seed),
        "prepare",
        &s.split_seed,
        inputs,
    )?;
    dir.write_bytes("split.json", split.to_json().as_bytes())?;

    let mut queries = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for part in SplitPart::ALL {
        counts.insert(part.to_string(), split.ids(part).len());
        queries.insert(
            part.to_string(),
            split_queries(&dialogues, &split, part, ContextWindow::CURRENT).len(),
        );
    }
    let summary = PrepareSummary {
        split_seed: s.split_seed,
        dialogues: counts,
        queries,
        max_label_deviation: split.max_label_deviation(&dialogues),
        vocabulary: vocabulary_stats(&split, &dialogues),
    };
    dir.write_json("stats.json", &summary)?;

    let freq = label_frequency_report(&dialogues);
    let bytes = csv_bytes(|buf| {
        writeln!(buf, "taxonomy,label,count,average_per_dialogue")?;
        for l in &freq.labels {
            writeln!(
                buf,
                "{},{},{},{}",
                l.taxonomy.short_name(),
                l.label,
                l.count,
                l.average
            )?;
        }
        Ok(())
    })?;
    dir.write_bytes("label_frequency.csv", &bytes)?;
    let root = dir.finish()?;

    let v = &summary.vocabulary;
    println!(
        "split seed {}: {:?} dialogues, {:?} queries",
        s.split_seed, summary.dialogues, summary.queries
    );
    println!(
        "vocabulary: train {} / test {} / overlap {} ({:.1}%)",
        v.train_vocab,
        v.test_vocab,
        v.overlap,
        v.overlap_ratio * 100.0
    );
    println!(
        "max label prevalence deviation: {:.2} pp",
        summary.max_label_deviation * 100.0
    );
    println!("split manifest: {}", s.split.display());
    println!("statistics: {}", root.display());
    Ok(())
}

fn load_resources(
    s: &Settings,
    features: &[FeatureKind],
    dialogues: &[Dialogue],
    inputs: &mut BTreeMap<String, InputRecord>,
) -> Result<Resources, CliError> {
    let mut resources = Resources::default();
    if features.contains(&FeatureKind::Word2Vec) {
        let path = s.word2vec.as_deref().ok_or_else(|| {
            CliError::config("word2vec features need --word2vec <embedding file>")
        })?;
        require_file(path, "word2vec")?;
        eprintln!("loading word vectors from {}", path.display());
        let keep: HashSet<String> = corpus_words(dialogues);
        let table = load_embedding_table(path, Some(&keep))?;
        eprintln!("  {} of {} corpus words covered", table.len(), keep.len());
        inputs.insert("word2vec".into(), input_record(path)?);
        resources.word2vec = Some(Arc::new(table));
    }
    if features.contains(&FeatureKind::SentenceImport) {
        let path = s.sentence_embeddings.as_deref().ok_or_else(|| {
            CliError::config("sentence_import features need --sentence-embeddings <file>")
        })?;
        require_file(path, "sentence embedding")?;
        inputs.insert("sentence_embeddings".into(), input_record(path)?);
        resources.sentences = Some(Arc::new(load_sentence_embeddings(path)?));
    }
    Ok(resources)
}

fn base_inputs(s: &Settings) -> Result<BTreeMap<String, InputRecord>, CliError> {
    let mut inputs = BTreeMap::new();
    inputs.insert("dataset".to_string(), input_record(s.dataset()?)?);
    inputs.insert("split".to_string(), input_record(&s.split)?);
    Ok(inputs)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))
}

#[derive(Serialize)]
struct RunConfig<'a> {
    feature: FeatureKind,
    taxonomy: TaxonomyKind,
    context: ContextWindow,
    seeds: &'a [u64],
    train: TrainConfig,
}

pub fn run(s: &Settings) -> Result<(), CliError> {
    let dialogues = load_corpus(s)?;
    let split = load_split(s, &dialogues)?;
    let mut inputs = base_inputs(s)?;
    let resources = load_resources(s, &[s.feature], &dialogues, &mut inputs)?;
    let train = TrainConfig {
        seed: 0,
        ..s.train.clone()
    };
    let config = RunConfig {
        feature: s.feature,
        taxonomy: s.taxonomy,
        context: s.context,
        seeds: &s.seeds,
        train: train.clone(),
    };
    let name = format!("{}-{}-x{}", s.feature, s.taxonomy.short_name(), s.context);
    let mut dir = ArtifactDir::create(&s.out.join("runs"), &name, "run", &config, inputs)?;

    eprintln!("training {name} for seeds {:?}", s.seeds);
    let outcomes: Vec<Result<ExperimentOutcome, CliError>> = pool(s.jobs)?.install(|| {
        s.seeds
            .par_iter()
            .map(|&seed| {
                let spec = ExperimentSpec {
                    feature: s.feature,
                    taxonomy: s.taxonomy,
                    context: s.context,
                    train: TrainConfig {
                        seed,
                        ..train.clone()
                    },
                };
                run_experiment(&dialogues, &split, &spec, &resources).map_err(CliError::from)
            })
            .collect()
    });

    let mut macros = Vec::new();
    for (seed, outcome) in s.seeds.iter().zip(outcomes) {
        let outcome = outcome?;
        let prefix = format!("seed-{seed}");
        write_report(&mut dir, &format!("{prefix}/report"), &outcome.report)?;
        write_thresholds(
            &mut dir,
            &format!("{prefix}/thresholds.json"),
            &outcome.thresholds,
        )?;
        let ckpt = dir.prepare(&format!("{prefix}/checkpoint.json"))?;
        outcome
            .checkpoint
            .save(&ckpt)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        dir.record(&format!("{prefix}/checkpoint.json"))?;
        let loss: String = outcome
            .loss_trace
            .iter()
            .enumerate()
            .map(|(e, l)| format!("{e},{l}\n"))
            .collect();
        dir.write_bytes(
            &format!("{prefix}/loss.csv"),
            format!("epoch,loss\n{loss}").as_bytes(),
        )?;
        println!("seed {seed}: macro-F1 {:.4}", outcome.report.macro_f1);
        macros.push(outcome.report.macro_f1);
    }
    let (m, sd) = mean_std(&macros);
    println!(
        "{name}: macro-F1 {m:.4} ± {sd:.4} over {} seed(s)",
        macros.len()
    );
    println!("outputs: {}", dir.finish()?.display());
    Ok(())
}

fn write_report(dir: &mut ArtifactDir, stem: &str, report: &F1Report) -> Result<(), CliError> {
    dir.write_json(&format!("{stem}.json"), report)?;
    let bytes = csv_bytes(|buf| report.write_csv(buf).map_err(CliError::from))?;
    dir.write_bytes(&format!("{stem}.csv"), &bytes)
}

fn write_thresholds(dir: &mut ArtifactDir, rel: &str, t: &ThresholdVector) -> Result<(), CliError> {
    let mut buf = Vec::new();
    t.write(&mut buf)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    buf.push(b'\n');
    dir.write_bytes(rel, &buf)
}

#[derive(Serialize)]
struct SweepConfig<'a> {
    feature: FeatureKind,
    taxonomy: TaxonomyKind,
    contexts: &'a [ContextWindow],
    seeds: &'a [u64],
    train: TrainConfig,
}

pub fn sweep(s: &Settings) -> Result<(), CliError> {
    let dialogues = load_corpus(s)?;
    let split = load_split(s, &dialogues)?;
    let mut inputs = base_inputs(s)?;
    let resources = load_resources(s, &[s.feature], &dialogues, &mut inputs)?;
    let train = TrainConfig {
        seed: 0,
        ..s.train.clone()
    };
    let config = SweepConfig {
        feature: s.feature,
        taxonomy: s.taxonomy,
        contexts: &s.contexts,
        seeds: &s.seeds,
        train: train.clone(),
    };
    let name = format!("{}-{}", s.feature, s.taxonomy.short_name());
    let mut dir = ArtifactDir::create(&s.out.join("sweeps"), &name, "sweep", &config, inputs)?;
    eprintln!(
        "sweeping {name} over x in {:?} with {} seed(s), {} job(s)",
        s.contexts.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        s.seeds.len(),
        s.jobs
    );
    let reports = context_sweep(
        &dialogues,
        &split,
        s.feature,
        s.taxonomy,
        &s.contexts,
        &s.seeds,
        &train,
        &resources,
        s.jobs,
    )?;
    for r in &reports {
        let stem = format!(
            "reports/x{}-seed{}.report",
            r.config.context,
            r.config.seed.unwrap_or(0)
        );
        dir.write_json(&format!("{stem}.json"), r)?;
    }
    let points = sweep_points(&reports);
    let bytes = csv_bytes(|buf| write_sweep_csv(&points, buf).map_err(CliError::from))?;
    dir.write_bytes("sweep.csv", &bytes)?;

    let curve = average_curve(&points, s.taxonomy);
    let best = curve.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0);
    let mut text = String::from("x,mean_macro_f1,std\n");
    for (x, _) in &curve {
        let values: Vec<f64> = points
            .iter()
            .filter(|p| p.x == *x)
            .map(|p| p.macro_f1)
            .collect();
        let (m, sd) = mean_std(&values);
        text.push_str(&format!("{x},{m},{sd}\n"));
        let marker = if Some(*x) == best { "  <- best" } else { "" };
        println!(
            "x = {:<3}  macro-F1 {m:.4} ± {sd:.4}{marker}",
            x.to_string()
        );
    }
    dir.write_bytes("curve.csv", text.as_bytes())?;
    println!("outputs: {}", dir.finish()?.display());
    Ok(())
}

#[derive(Serialize)]
struct LlmConfig<'a> {
    mode: PromptMode,
    taxonomy: TaxonomyKind,
    context: ContextWindow,
    base_url: &'a str,
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    replay: Option<String>,
}

#[derive(Serialize)]
struct WrongInferenceSummary<'a> {
    total: usize,
    by_label: &'a BTreeMap<String, usize>,
    malformed: usize,
    failed: usize,
}

pub fn llm_eval(s: &Settings, mode: PromptMode, replay: Option<&Path>) -> Result<(), CliError> {
    let dialogues = load_corpus(s)?;
    let split = load_split(s, &dialogues)?;
    let queries: Vec<EvalQuery> = split_queries(&dialogues, &split, SplitPart::Test, s.context)
        .iter()
        .map(|q| EvalQuery::from_contextualized(q, s.taxonomy))
        .collect();
    let task = LlmTask {
        taxonomy: s.taxonomy,
        mode,
        context: s.context,
    };
    let mut inputs = base_inputs(s)?;
    if let Some(path) = replay {
        require_file(path, "transcript")?;
        inputs.insert("transcript".into(), input_record(path)?);
    }
    let e = &s.endpoint;
    let config = LlmConfig {
        mode,
        taxonomy: s.taxonomy,
        context: s.context,
        base_url: &e.base_url,
        model: &e.model,
        temperature: e.temperature,
        max_tokens: e.max_tokens,
        replay: replay.map(|p| p.display().to_string()),
    };
    let name = format!("{}-{}-x{}", mode, s.taxonomy.short_name(), s.context);
    let mut dir = ArtifactDir::create(&s.out.join("llm"), &name, "llm-eval", &config, inputs)?;

    let evaluation: LlmEvaluation = match replay {
        Some(path) => replay_transcript(BufReader::new(File::open(path)?), &queries, task)?,
        None => {
            let client =
                HttpChatClient::from_config(e).map_err(|e| CliError::config(e.to_string()))?;
            eprintln!(
                "sending {} queries to {} ({}, up to {} in flight)",
                queries.len(),
                e.completions_url(),
                e.model,
                e.max_in_flight
            );
            let path = dir.prepare("transcript.jsonl")?;
            let mut log = BufWriter::new(File::create(&path)?);
            let result =
                evaluate_endpoint(&queries, task, &client, &RequestPolicy::from(e), &mut log);
            log.flush()?;
            drop(log);
            dir.record("transcript.jsonl")?;
            match result {
                Ok(ev) => ev,
                Err(err) => {
                    let root = dir.finish()?;
                    eprintln!("partial transcript kept in {}", root.display());
                    return Err(err.into());
                }
            }
        }
    };
    write_report(&mut dir, "report", &evaluation.report)?;
    dir.write_json(
        "wrong_inferences.json",
        &WrongInferenceSummary {
            total: evaluation.wrong_inference_count(),
            by_label: &evaluation.wrong_inferences,
            malformed: evaluation.malformed,
            failed: evaluation.failed,
        },
    )?;
    println!(
        "{name}: macro-F1 {:.4}; {} wrong inference(s), {} malformed, {} failed",
        evaluation.report.macro_f1,
        evaluation.wrong_inference_count(),
        evaluation.malformed,
        evaluation.failed
    );
    println!("outputs: {}", dir.finish()?.display());
    Ok(())
}

fn is_report_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == "report.json" || n.ends_with(".report.json"))
}

pub fn report(s: &Settings) -> Result<(), CliError> {
    if !s.out.is_dir() {
        return Err(CliError::input(format!(
            "no reports found: {} is not a directory",
            s.out.display()
        )));
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(&s.out)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_report_file(e.path()))
        .map(|e| e.into_path())
        .collect();
    paths.sort();

    let mut seen = HashSet::new();
    let mut reports = Vec::new();
    let mut inputs = BTreeMap::new();
    for path in &paths {
        let r = F1Report::load_json(path)?;
        let key = (
            r.config.method.clone(),
            r.config.taxonomy,
            r.config.context,
            r.config.seed,
        );
        if !seen.insert(key) {
            eprintln!(
                "skipping {}: same method, taxonomy, context and seed as an earlier report",
                path.display()
            );
            continue;
        }
        let rel = path
            .strip_prefix(&s.out)
            .unwrap_or(path)
            .display()
            .to_string();
        inputs.insert(rel, input_record(path)?);
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(CliError::input(format!(
            "no reports found under {}",
            s.out.display()
        )));
    }
    let rendered = render_report(&reports)?;
    let mut dir = ArtifactDir::create(&s.out.join("tables"), "report", "report", &(), inputs)?;
    for t in &rendered.tables {
        let stem = format!("{}-x{}", t.taxonomy.short_name(), t.context);
        let bytes = csv_bytes(|buf| t.write_csv(buf).map_err(CliError::from))?;
        dir.write_bytes(&format!("{stem}.csv"), &bytes)?;
        let text = t.to_text();
        dir.write_bytes(&format!("{stem}.txt"), text.as_bytes())?;
        println!("{text}");
    }
    let mut series = String::from("taxonomy,method,x,macro_f1\n");
    for sw in &rendered.sweeps {
        for (x, f) in &sw.points {
            series.push_str(&format!(
                "{},{},{x},{f}\n",
                sw.taxonomy.short_name(),
                sw.method
            ));
        }
    }
    dir.write_bytes("sweep_series.csv", series.as_bytes())?;
    println!(
        "{} report(s) rendered into {}",
        reports.len(),
        dir.finish()?.display()
    );
    Ok(())
}
