use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{FeatureError, SparseVector};

/// Token index fitted on the training split, with document frequencies.
///
/// Indices are assigned in lexicographic token order so the layout does not depend
/// on document order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    document_frequency: Vec<u64>,
    corpus_size: u64,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    corpus_size: u64,
    tokens: Vec<String>,
    document_frequency: Vec<u64>,
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            corpus_size: v.corpus_size,
            tokens: v.tokens,
            document_frequency: v.document_frequency,
        }
    }
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabularyFile) -> Result<Self, Self::Error> {
        if f.tokens.len() != f.document_frequency.len() {
            return Err("tokens and document_frequency differ in length".into());
        }
        if let Some(df) = f.document_frequency.iter().find(|df| **df > f.corpus_size) {
            return Err(format!(
                "document frequency {df} exceeds corpus size {}",
                f.corpus_size
            ));
        }
        let mut index = HashMap::with_capacity(f.tokens.len());
        for (i, t) in f.tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate token `{t}`"));
            }
        }
        Ok(Vocabulary {
            tokens: f.tokens,
            document_frequency: f.document_frequency,
            corpus_size: f.corpus_size,
            index,
        })
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn document_frequency(&self, index: usize) -> u64 {
        self.document_frequency[index]
    }

    pub fn corpus_size(&self) -> u64 {
        self.corpus_size
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

pub fn fit_vocabulary<D, T>(corpus: &[D]) -> Result<Vocabulary, FeatureError>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    let mut df: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
        for token in unique {
            *df.entry(token).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let (tokens, document_frequency): (Vec<String>, Vec<u64>) =
        df.into_iter().map(|(t, c)| (t.to_owned(), c)).unzip();
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        tokens,
        document_frequency,
        corpus_size: corpus.len() as u64,
        index,
    })
}

fn term_counts<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> BTreeMap<usize, f64> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t.as_ref()) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Raw in-vocabulary term counts; out-of-vocabulary tokens are dropped.
pub fn bow_vectorize<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> SparseVector {
    SparseVector {
        dim: vocab.len(),
        entries: term_counts(tokens, vocab).into_iter().collect(),
    }
}

/// Raw term count times smoothed idf, L2-normalized. Empty when nothing is in vocabulary.
pub fn tfidf_vectorize<T: AsRef<str>>(tokens: &[T], vocab: &Vocabulary) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = term_counts(tokens, vocab)
        .into_iter()
        .map(|(i, tf)| (i, tf * vocab.idf(i)))
        .collect();
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}
