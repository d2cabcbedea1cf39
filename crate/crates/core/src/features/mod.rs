//! Fixed-size feature vectors for contextualized queries.

mod embedding;
mod sentence;
mod vocabulary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{embed_average, load_embedding_table, EmbeddingFormat, EmbeddingTable};
pub use sentence::{
    load_sentence_embeddings, SentenceEmbeddings, SentenceKey, SENTENCE_EMBEDDING_DIM,
};
pub use vocabulary::{bow_vectorize, fit_vocabulary, tfidf_vectorize, Vocabulary};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("vocabulary corpus contains no tokens")]
    EmptyCorpus,
    #[error("bad embedding header: {0}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("missing sentence embeddings for {} keys (first: {})", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    MissingKeys(Vec<SentenceKey>),
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on runs of Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Whitespace split with case preserved, for lookups in case-sensitive embedding tables.
pub fn split_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self, FeatureError> {
        for (k, (i, v)) in entries.iter().enumerate() {
            if *i >= dim {
                return Err(FeatureError::InvalidVector(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            if k > 0 && entries[k - 1].0 >= *i {
                return Err(FeatureError::InvalidVector(
                    "indices not strictly increasing".into(),
                ));
            }
            if !v.is_finite() {
                return Err(FeatureError::InvalidVector(format!(
                    "non-finite value at {i}"
                )));
            }
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> DenseVector {
        let mut values = vec![0.0; self.dim];
        for (i, v) in &self.entries {
            values[*i] = *v;
        }
        DenseVector { values }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self, FeatureError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidVector(format!(
                "non-finite value at {i}"
            )));
        }
        Ok(DenseVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        DenseVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureVector {
    Sparse(SparseVector),
    Dense(DenseVector),
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Sparse(s) => s.dim(),
            FeatureVector::Dense(d) => d.dim(),
        }
    }

    /// Non-zero `(index, value)` pairs in increasing index order.
    pub fn nonzeros(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            FeatureVector::Sparse(s) => {
                Box::new(s.entries().iter().copied().filter(|(_, v)| *v != 0.0))
            }
            FeatureVector::Dense(d) => Box::new(
                d.values()
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|(_, v)| *v != 0.0),
            ),
        }
    }
}

impl From<SparseVector> for FeatureVector {
    fn from(v: SparseVector) -> Self {
        FeatureVector::Sparse(v)
    }
}

impl From<DenseVector> for FeatureVector {
    fn from(v: DenseVector) -> Self {
        FeatureVector::Dense(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("I want Jazz songs"),
            vec!["i", "want", "jazz", "songs"]
        );
        assert!(tokenize("  ").is_empty());
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("80 'reggae"), vec!["80", "'reggae"]);
        assert_eq!(tokenize("a\u{3000}b\t\nc"), vec!["a", "b", "c"]);
    }

    #[test]
    fn split_words_keeps_case() {
        assert_eq!(split_words(" Ed  Sheeran "), vec!["Ed", "Sheeran"]);
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseVector::new(3, vec![(0, 1.0), (2, 1.0)]).is_ok());
        assert!(SparseVector::new(3, vec![(2, 1.0), (0, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(0, f64::NAN)]).is_err());
        assert!(DenseVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn sparse_and_dense_share_nonzeros() {
        let s = SparseVector::new(4, vec![(1, 2.0), (3, -1.0)]).unwrap();
        let d = FeatureVector::Dense(s.to_dense());
        let s = FeatureVector::Sparse(s);
        assert_eq!(
            s.nonzeros().collect::<Vec<_>>(),
            d.nonzeros().collect::<Vec<_>>()
        );
    }
}
