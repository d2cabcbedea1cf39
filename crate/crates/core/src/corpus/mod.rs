//! Annotated dialogue corpus: loading, validation, splitting and statistics.
//!
//! The on-disk format is newline-delimited JSON, one record per turn:
//!
//! ```text
//! {"dialogue_id": "d1", "turn_index": 0, "speaker": "seeker", "text": "...", "intents": ["initial_query"], "attributes": ["genre"]}
//! ```
//!
//! Records of one dialogue must appear with consecutive `turn_index` values
//! starting at 0. Dialogues keep the order in which they first appear.

mod split;
mod stats;
mod taxonomy;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{stratified_split, DatasetSplit, SplitPart, SPLIT_RATIOS};
pub use stats::{
    label_frequency_report, vocabulary_stats, LabelFrequency, LabelFrequencyReport, VocabularyStats,
};
pub use taxonomy::{LabelSet, Taxonomy, TaxonomyKind, MUSICAL_ATTRIBUTES, USER_INTENTS};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { label: String, line: usize },
    #[error("dataset file contains no records")]
    EmptyFile,
    #[error("need at least {required} dialogues to split, got {found}")]
    TooFewDialogues { required: usize, found: usize },
    #[error("duplicate dialogue id `{0}`")]
    DuplicateDialogueId(String),
    #[error("split manifest: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    #[serde(alias = "user")]
    Seeker,
    #[serde(alias = "system", alias = "assistant")]
    Recommender,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// Over the user-intent taxonomy; empty for recommender turns.
    pub intents: LabelSet,
    /// Over the musical-attribute taxonomy; empty for recommender turns.
    pub attributes: LabelSet,
}

impl Turn {
    pub fn seeker(text: impl Into<String>, intents: LabelSet, attributes: LabelSet) -> Self {
        Turn {
            speaker: Speaker::Seeker,
            text: text.into(),
            intents,
            attributes,
        }
    }

    pub fn recommender(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::Recommender,
            text: text.into(),
            intents: LabelSet::empty(),
            attributes: LabelSet::empty(),
        }
    }

    pub fn labels(&self, kind: TaxonomyKind) -> LabelSet {
        match kind {
            TaxonomyKind::UserIntent => self.intents,
            TaxonomyKind::MusicalAttribute => self.attributes,
        }
    }

    pub fn is_seeker(&self) -> bool {
        self.speaker == Speaker::Seeker
    }

    /// A seeker turn carrying at least one label of either taxonomy.
    pub fn is_annotated_query(&self) -> bool {
        self.is_seeker() && !(self.intents.is_empty() && self.attributes.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn seeker_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns.iter().enumerate().filter(|(_, t)| t.is_seeker())
    }
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    dialogue_id: String,
    turn_index: usize,
    speaker: Speaker,
    text: String,
    intents: Vec<String>,
    attributes: Vec<String>,
}

#[derive(Serialize)]
struct TurnRecordRef<'a> {
    dialogue_id: &'a str,
    turn_index: usize,
    speaker: Speaker,
    text: &'a str,
    intents: Vec<&'static str>,
    attributes: Vec<&'static str>,
}

/// Loads and validates a newline-delimited dialogue file.
pub fn load_dialogues(path: impl AsRef<Path>) -> Result<Vec<Dialogue>, CorpusError> {
    let file = File::open(path)?;
    read_dialogues(BufReader::new(file))
}

pub fn parse_dialogues(input: &[u8]) -> Result<Vec<Dialogue>, CorpusError> {
    read_dialogues(input)
}

pub fn read_dialogues<R: BufRead>(reader: R) -> Result<Vec<Dialogue>, CorpusError> {
    let intents = Taxonomy::user_intent();
    let attributes = Taxonomy::musical_attribute();

    let mut dialogues: Vec<Dialogue> = Vec::new();
    // dialogue id -> (position in `dialogues`, line of first record)
    let mut by_id: HashMap<String, (usize, usize)> = HashMap::new();
    let mut records = 0usize;

    for (i, raw) in reader.split(b'\n').enumerate() {
        let line = i + 1;
        let raw = raw?;
        let text = std::str::from_utf8(&raw).map_err(|_| CorpusError::MalformedRecord {
            line,
            reason: "invalid UTF-8".into(),
        })?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        records += 1;

        let record: TurnRecord =
            serde_json::from_str(text).map_err(|e| CorpusError::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
        let malformed = |reason: String| CorpusError::MalformedRecord { line, reason };

        if record.dialogue_id.is_empty() {
            return Err(malformed("empty dialogue_id".into()));
        }
        if record.text.trim().is_empty() {
            return Err(malformed("turn text is empty".into()));
        }
        let intent_set = intents
            .label_set(&record.intents)
            .map_err(|label| CorpusError::UnknownLabel { label, line })?;
        let attribute_set = attributes
            .label_set(&record.attributes)
            .map_err(|label| CorpusError::UnknownLabel { label, line })?;
        if record.speaker == Speaker::Recommender
            && !(intent_set.is_empty() && attribute_set.is_empty())
        {
            return Err(malformed("recommender turns cannot carry labels".into()));
        }

        let (slot, _) = *by_id.entry(record.dialogue_id.clone()).or_insert_with(|| {
            dialogues.push(Dialogue {
                id: record.dialogue_id.clone(),
                turns: Vec::new(),
            });
            (dialogues.len() - 1, line)
        });
        let dialogue = &mut dialogues[slot];
        if record.turn_index != dialogue.turns.len() {
            return Err(malformed(format!(
                "dialogue `{}`: turn_index {} out of order (expected {})",
                dialogue.id,
                record.turn_index,
                dialogue.turns.len()
            )));
        }
        dialogue.turns.push(Turn {
            speaker: record.speaker,
            text: record.text,
            intents: intent_set,
            attributes: attribute_set,
        });
    }

    if records == 0 {
        return Err(CorpusError::EmptyFile);
    }
    for dialogue in &dialogues {
        if !dialogue.turns.iter().any(Turn::is_seeker) {
            let (_, line) = by_id[&dialogue.id];
            return Err(CorpusError::MalformedRecord {
                line,
                reason: format!("dialogue `{}` has no seeker turn", dialogue.id),
            });
        }
    }
    Ok(dialogues)
}

/// Writes dialogues in the same newline-delimited format `read_dialogues` accepts.
pub fn write_dialogues<W: Write>(mut writer: W, dialogues: &[Dialogue]) -> io::Result<()> {
    let intents = Taxonomy::user_intent();
    let attributes = Taxonomy::musical_attribute();
    for dialogue in dialogues {
        for (turn_index, turn) in dialogue.turns.iter().enumerate() {
            let record = TurnRecordRef {
                dialogue_id: &dialogue.id,
                turn_index,
                speaker: turn.speaker,
                text: &turn.text,
                intents: intents.names(turn.intents),
                attributes: attributes.names(turn.attributes),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<Dialogue>, CorpusError> {
        parse_dialogues(s.as_bytes())
    }

    const TWO_DIALOGUES: &str = r#"{"dialogue_id":"a","turn_index":0,"speaker":"seeker","text":"I want jazz songs to listen to with my dad","intents":["initial_query","add_filter"],"attributes":["genre","user"]}
{"dialogue_id":"a","turn_index":1,"speaker":"recommender","text":"Here is some jazz.","intents":[],"attributes":[]}
{"dialogue_id":"b","turn_index":0,"speaker":"seeker","text":"hello","intents":["greeting"],"attributes":[]}
{"dialogue_id":"a","turn_index":2,"speaker":"seeker","text":"great","intents":["accept_response"],"attributes":[]}
"#;

    #[test]
    fn loads_and_groups_turns() {
        let dialogues = parse(TWO_DIALOGUES).unwrap();
        assert_eq!(dialogues.len(), 2);
        assert_eq!(dialogues[0].id, "a");
        assert_eq!(dialogues[0].turns.len(), 3);
        assert_eq!(dialogues[0].turns[2].text, "great");
        let intents = Taxonomy::user_intent();
        assert_eq!(
            intents.names(dialogues[0].turns[0].intents),
            vec!["initial_query", "add_filter"]
        );
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(parse(""), Err(CorpusError::EmptyFile)));
        assert!(matches!(parse("\n  \n"), Err(CorpusError::EmptyFile)));
    }

    #[test]
    fn unknown_label_reports_label_and_line() {
        let input = r#"{"dialogue_id":"a","turn_index":0,"speaker":"seeker","text":"hi","intents":["greeting"],"attributes":[]}
{"dialogue_id":"a","turn_index":1,"speaker":"seeker","text":"Best Friend is my favorite","intents":[],"attributes":["gender"]}"#;
        match parse(input) {
            Err(CorpusError::UnknownLabel { label, line }) => {
                assert_eq!(label, "gender");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_records_carry_line_numbers() {
        let cases = [
            "not json",
            r#"{"dialogue_id":"a","turn_index":0,"speaker":"seeker","text":"   ","intents":[],"attributes":[]}"#,
            r#"{"dialogue_id":"a","turn_index":1,"speaker":"seeker","text":"x","intents":[],"attributes":[]}"#,
            r#"{"dialogue_id":"a","turn_index":0,"speaker":"recommender","text":"x","intents":["greeting"],"attributes":[]}"#,
            r#"{"dialogue_id":"a","turn_index":0,"speaker":"seeker","text":"x","attributes":[]}"#,
            r#"{"dialogue_id":"a","turn_index":0,"speaker":"recommender","text":"x","intents":[],"attributes":[]}"#,
        ];
        for case in cases {
            let input = format!("\n{case}\n");
            match parse(&input) {
                Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 2, "{case}"),
                other => panic!("{case}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_utf8_is_malformed() {
        let err = parse_dialogues(b"\xff\xfe\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn write_then_read_is_identity() {
        let dialogues = parse(TWO_DIALOGUES).unwrap();
        let mut buf = Vec::new();
        write_dialogues(&mut buf, &dialogues).unwrap();
        assert_eq!(parse_dialogues(&buf).unwrap(), dialogues);
    }
}
