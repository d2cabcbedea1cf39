use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use music_intent::context::{ContextWindow, ContextualizedQuery};
use music_intent::corpus::{LabelSet, TaxonomyKind};
use music_intent::eval::{EvalError, F1Report, ReportConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::endpoint::{ChatClient, EndpointConfig, RequestError};
use crate::parse::{parse_label_list, ParseStatus};
use crate::prompt::{build_prompt, PromptMode};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint unreachable after retries: {message} ({completed} queries finished)")]
    EndpointUnreachable { message: String, completed: usize },
    #[error("endpoint rejected the credentials (HTTP {0})")]
    AuthFailure(u16),
    #[error("request budget of {budget} exhausted ({queries} queries to score)")]
    BudgetExceeded { budget: usize, queries: usize },
    #[error("malformed transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One test query to classify.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalQuery {
    pub id: String,
    pub text: String,
    pub truth: LabelSet,
}

impl EvalQuery {
    pub fn from_contextualized(q: &ContextualizedQuery, taxonomy: TaxonomyKind) -> Self {
        EvalQuery {
            id: format!("{}#{}", q.dialogue_id, q.turn_index),
            text: q.input_text.clone(),
            truth: q.labels(taxonomy),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LlmTask {
    pub taxonomy: TaxonomyKind,
    pub mode: PromptMode,
    pub context: ContextWindow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestPolicy {
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub max_requests: Option<usize>,
    /// Wait before retry `n` is `n` times this.
    pub backoff: Duration,
}

impl From<&EndpointConfig> for RequestPolicy {
    fn from(c: &EndpointConfig) -> Self {
        RequestPolicy {
            max_in_flight: c.max_in_flight.max(1),
            max_retries: c.max_retries,
            max_requests: c.max_requests,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Malformed,
    Failed,
}

/// Audit log entry for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query_id: String,
    pub prompt: String,
    pub completion: Option<String>,
    pub labels: Vec<String>,
    pub wrong_inferences: Vec<String>,
    pub status: RecordStatus,
    pub attempts: u32,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmEvaluation {
    pub report: F1Report,
    /// Occurrences of each out-of-taxonomy label.
    pub wrong_inferences: BTreeMap<String, usize>,
    pub malformed: usize,
    pub failed: usize,
    pub records: Vec<TranscriptRecord>,
}

impl LlmEvaluation {
    pub fn wrong_inference_count(&self) -> usize {
        self.wrong_inferences.values().sum()
    }
}

fn record_for(
    query: &EvalQuery,
    prompt: String,
    completion: Option<String>,
    taxonomy: TaxonomyKind,
    attempts: u32,
    latency: Duration,
    error: Option<String>,
) -> TranscriptRecord {
    let (labels, wrong, status) = match &completion {
        Some(text) => {
            let parsed = parse_label_list(text, taxonomy);
            let status = match parsed.status {
                ParseStatus::Ok => RecordStatus::Ok,
                ParseStatus::Malformed => RecordStatus::Malformed,
            };
            let labels = taxonomy
                .taxonomy()
                .names(parsed.in_taxonomy)
                .into_iter()
                .map(str::to_owned)
                .collect();
            (labels, parsed.wrong_inferences, status)
        }
        None => (Vec::new(), Vec::new(), RecordStatus::Failed),
    };
    TranscriptRecord {
        query_id: query.id.clone(),
        prompt,
        completion,
        labels,
        wrong_inferences: wrong,
        status,
        attempts,
        latency_ms: latency.as_millis() as u64,
        error,
    }
}

enum Outcome {
    Done(Box<TranscriptRecord>),
    Fatal(LlmError),
    Aborted,
}

fn run_query(
    query: &EvalQuery,
    task: LlmTask,
    client: &dyn ChatClient,
    policy: &RequestPolicy,
    sent: &AtomicUsize,
    abort: &AtomicBool,
    total: usize,
) -> Outcome {
    let prompt = build_prompt(&query.text, task.taxonomy, task.mode);
    let start = Instant::now();
    let mut attempts = 0u32;
    loop {
        if abort.load(Ordering::Relaxed) {
            return Outcome::Aborted;
        }
        if let Some(budget) = policy.max_requests {
            if sent.fetch_add(1, Ordering::SeqCst) >= budget {
                return Outcome::Fatal(LlmError::BudgetExceeded {
                    budget,
                    queries: total,
                });
            }
        }
        attempts += 1;
        let failure = match client.complete(&prompt) {
            Ok(text) => {
                return Outcome::Done(Box::new(record_for(
                    query,
                    prompt,
                    Some(text),
                    task.taxonomy,
                    attempts,
                    start.elapsed(),
                    None,
                )))
            }
            Err(RequestError::Auth(status)) => {
                return Outcome::Fatal(LlmError::AuthFailure(status))
            }
            Err(e) => e,
        };
        if failure.is_retryable() && attempts <= policy.max_retries {
            std::thread::sleep(policy.backoff * attempts);
            continue;
        }
        if let RequestError::Unreachable(message) = failure {
            return Outcome::Fatal(LlmError::EndpointUnreachable {
                message,
                completed: 0,
            });
        }
        return Outcome::Done(Box::new(record_for(
            query,
            prompt,
            None,
            task.taxonomy,
            attempts,
            start.elapsed(),
            Some(failure.to_string()),
        )));
    }
}

fn write_record<W: Write + ?Sized>(out: &mut W, record: &TranscriptRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Classifies every query through `client` and scores the parsed labels.
///
/// Up to `policy.max_in_flight` requests run at once. Transcript lines are written
/// in query order as soon as each prefix of the test set is complete, so an aborted
/// run leaves every finished prefix on disk.
pub fn evaluate_endpoint(
    queries: &[EvalQuery],
    task: LlmTask,
    client: &dyn ChatClient,
    policy: &RequestPolicy,
    transcript: &mut dyn Write,
) -> Result<LlmEvaluation, LlmError> {
    if let Some(budget) = policy.max_requests {
        if queries.len() > budget {
            return Err(LlmError::BudgetExceeded {
                budget,
                queries: queries.len(),
            });
        }
    }
    let next = AtomicUsize::new(0);
    let sent = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Outcome)>();
    let workers = policy.max_in_flight.max(1).min(queries.len().max(1));

    let mut slots: Vec<Option<TranscriptRecord>> = vec![None; queries.len()];
    let mut written = 0usize;
    let mut fatal: Option<LlmError> = None;
    let mut io_error: Option<std::io::Error> = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, sent, abort) = (&next, &sent, &abort);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= queries.len() || abort.load(Ordering::Relaxed) {
                    break;
                }
                let outcome = run_query(
                    &queries[i],
                    task,
                    client,
                    policy,
                    sent,
                    abort,
                    queries.len(),
                );
                if matches!(outcome, Outcome::Fatal(_)) {
                    abort.store(true, Ordering::Relaxed);
                }
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for (i, outcome) in rx {
            match outcome {
                Outcome::Done(record) => slots[i] = Some(*record),
                Outcome::Fatal(e) => {
                    fatal.get_or_insert(e);
                }
                Outcome::Aborted => {}
            }
            while written < slots.len() && io_error.is_none() {
                let Some(record) = &slots[written] else { break };
                if let Err(e) = write_record(transcript, record) {
                    io_error = Some(e);
                    abort.store(true, Ordering::Relaxed);
                    break;
                }
                written += 1;
            }
        }
    });

    if let Some(e) = io_error {
        return Err(e.into());
    }
    if let Some(mut e) = fatal {
        if let LlmError::EndpointUnreachable { completed, .. } = &mut e {
            *completed = slots.iter().flatten().count();
        }
        return Err(e);
    }
    let records: Vec<TranscriptRecord> = slots
        .into_iter()
        .map(|r| r.expect("every query finished"))
        .collect();
    summarize(queries, task, records)
}

/// Scores a run from its records, which must be in query order.
fn summarize(
    queries: &[EvalQuery],
    task: LlmTask,
    records: Vec<TranscriptRecord>,
) -> Result<LlmEvaluation, LlmError> {
    let tax = task.taxonomy.taxonomy();
    let mut predictions = Array2::from_elem((queries.len(), tax.len()), false);
    let mut truths = Array2::from_elem((queries.len(), tax.len()), false);
    let mut wrong = BTreeMap::new();
    let (mut malformed, mut failed) = (0, 0);
    for (i, (q, r)) in queries.iter().zip(&records).enumerate() {
        for j in q.truth.iter() {
            truths[[i, j]] = true;
        }
        for label in &r.labels {
            if let Some(j) = tax.index_of(label) {
                predictions[[i, j]] = true;
            }
        }
        for w in &r.wrong_inferences {
            *wrong.entry(w.clone()).or_insert(0) += 1;
        }
        match r.status {
            RecordStatus::Ok => {}
            RecordStatus::Malformed => malformed += 1,
            RecordStatus::Failed => failed += 1,
        }
    }
    let labels: Vec<String> = tax.labels().iter().map(|s| s.to_string()).collect();
    let report = F1Report::evaluate(
        predictions.view(),
        truths.view(),
        &labels,
        ReportConfig {
            method: task.mode.method_name(),
            taxonomy: task.taxonomy,
            context: task.context,
            seed: None,
            thresholds: None,
        },
    )?;
    Ok(LlmEvaluation {
        report,
        wrong_inferences: wrong,
        malformed,
        failed,
        records,
    })
}

pub fn read_transcript<R: BufRead>(reader: R) -> Result<Vec<TranscriptRecord>, LlmError> {
    let mut out = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let raw = line?;
        let text = std::str::from_utf8(&raw).map_err(|_| LlmError::Transcript {
            line: line_no,
            reason: "invalid UTF-8".into(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(text).map_err(|e| LlmError::Transcript {
                line: line_no,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Recomputes metrics from a saved transcript without contacting any endpoint.
///
/// Completions are parsed again; queries absent from the transcript count as failed.
pub fn replay_transcript<R: BufRead>(
    reader: R,
    queries: &[EvalQuery],
    task: LlmTask,
) -> Result<LlmEvaluation, LlmError> {
    let mut by_id: HashMap<String, TranscriptRecord> = HashMap::new();
    for r in read_transcript(reader)? {
        by_id.entry(r.query_id.clone()).or_insert(r);
    }
    let records = queries
        .iter()
        .map(|q| match by_id.remove(&q.id) {
            Some(r) => record_for(
                q,
                r.prompt,
                r.completion,
                task.taxonomy,
                r.attempts,
                Duration::from_millis(r.latency_ms),
                r.error,
            ),
            None => record_for(
                q,
                build_prompt(&q.text, task.taxonomy, task.mode),
                None,
                task.taxonomy,
                0,
                Duration::ZERO,
                Some("missing from transcript".into()),
            ),
        })
        .collect();
    summarize(queries, task, records)
}
