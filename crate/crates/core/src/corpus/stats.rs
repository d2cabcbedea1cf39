use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Dialogue, SplitPart, TaxonomyKind};
use crate::features::tokenize;

/// Unique token types of train and test seeker queries and their overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabularyStats {
    pub train_vocab: usize,
    pub test_vocab: usize,
    pub overlap: usize,
    /// `overlap / test_vocab`, 0 when the test vocabulary is empty.
    pub overlap_ratio: f64,
}

pub fn vocabulary_stats(split: &DatasetSplit, dialogues: &[Dialogue]) -> VocabularyStats {
    let vocab = |part| -> HashSet<String> {
        split
            .select(dialogues, part)
            .into_iter()
            .flat_map(|d| d.seeker_turns().map(|(_, t)| t))
            .flat_map(|t| tokenize(&t.text))
            .collect()
    };
    let train = vocab(SplitPart::Train);
    let test = vocab(SplitPart::Test);
    let overlap = test.intersection(&train).count();
    VocabularyStats {
        train_vocab: train.len(),
        test_vocab: test.len(),
        overlap,
        overlap_ratio: if test.is_empty() {
            0.0
        } else {
            overlap as f64 / test.len() as f64
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFrequency {
    pub taxonomy: TaxonomyKind,
    pub label: String,
    pub count: usize,
    /// Occurrences per dialogue.
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFrequencyReport {
    pub dialogues: usize,
    pub labels: Vec<LabelFrequency>,
}

impl LabelFrequencyReport {
    pub fn get(&self, label: &str) -> Option<&LabelFrequency> {
        self.labels.iter().find(|f| f.label == label)
    }
}

pub fn label_frequency_report(dialogues: &[Dialogue]) -> LabelFrequencyReport {
    let n = dialogues.len();
    let mut labels = Vec::new();
    for kind in TaxonomyKind::ALL {
        let taxonomy = kind.taxonomy();
        for (i, label) in taxonomy.labels().iter().enumerate() {
            let count = dialogues
                .iter()
                .flat_map(|d| &d.turns)
                .filter(|t| t.labels(kind).contains(i))
                .count();
            labels.push(LabelFrequency {
                taxonomy: kind,
                label: label.to_string(),
                count,
                average: if n == 0 { 0.0 } else { count as f64 / n as f64 },
            });
        }
    }
    LabelFrequencyReport {
        dialogues: n,
        labels,
    }
}
