use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{DenseVector, FeatureError};
use crate::context::ContextWindow;

/// Width of imported encoder sentence embeddings.
pub const SENTENCE_EMBEDDING_DIM: usize = 768;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub window: ContextWindow,
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}#{}@{}",
            self.dialogue_id, self.turn_index, self.window
        )
    }
}

#[derive(Deserialize)]
struct SentenceRecord {
    dialogue_id: String,
    turn_index: usize,
    context_x: ContextWindow,
    values: Vec<f64>,
}

/// Precomputed sentence embeddings keyed by query and context window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentenceEmbeddings {
    vectors: HashMap<SentenceKey, DenseVector>,
}

impl SentenceEmbeddings {
    /// Reads newline-delimited `{dialogue_id, turn_index, context_x, values}` records.
    /// Duplicate keys keep the first record.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut vectors = HashMap::new();
        for (i, raw) in reader.split(b'\n').enumerate() {
            let line = i + 1;
            let raw = raw?;
            let text = std::str::from_utf8(&raw).map_err(|_| FeatureError::BadRecord {
                line,
                reason: "invalid UTF-8".into(),
            })?;
            if text.trim().is_empty() {
                continue;
            }
            let record: SentenceRecord =
                serde_json::from_str(text).map_err(|e| FeatureError::BadRecord {
                    line,
                    reason: e.to_string(),
                })?;
            if record.values.len() != SENTENCE_EMBEDDING_DIM {
                return Err(FeatureError::DimensionMismatch {
                    line,
                    expected: SENTENCE_EMBEDDING_DIM,
                    found: record.values.len(),
                });
            }
            let key = SentenceKey {
                dialogue_id: record.dialogue_id,
                turn_index: record.turn_index,
                window: record.context_x,
            };
            let vector = DenseVector::new(record.values).map_err(|e| FeatureError::BadRecord {
                line,
                reason: e.to_string(),
            })?;
            vectors.entry(key).or_insert(vector);
        }
        Ok(SentenceEmbeddings { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&DenseVector> {
        self.vectors.get(key)
    }

    /// Fails with every requested key that has no embedding, sorted.
    pub fn check_coverage<'a, I>(&self, keys: I) -> Result<(), FeatureError>
    where
        I: IntoIterator<Item = &'a SentenceKey>,
    {
        let mut missing: Vec<SentenceKey> = keys
            .into_iter()
            .filter(|k| !self.vectors.contains_key(*k))
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            missing.sort();
            missing.dedup();
            Err(FeatureError::MissingKeys(missing))
        }
    }
}

pub fn load_sentence_embeddings(
    path: impl AsRef<Path>,
) -> Result<SentenceEmbeddings, FeatureError> {
    SentenceEmbeddings::read(BufReader::new(File::open(path)?))
}
