//! Classifier input construction from the current query plus preceding dialogue.
//!
//! Window sizes:
//! - `0`: the current seeker query alone.
//! - `0.5`: the immediately preceding message when it comes from the recommender,
//!   then the current query.
//! - `k` in 1..=4: preceding messages back to and including the k-th most recent
//!   seeker message (k recommender/seeker exchanges), then the current query.
//!
//! Recommender messages are prefixed with the system marker (`[MUSIC]` by default,
//! no space after it). Windows are cut at the start of the dialogue.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{Dialogue, LabelSet, Speaker, TaxonomyKind};

pub const DEFAULT_SYSTEM_PREFIX: &str = "[MUSIC]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("dialogue `{dialogue_id}` turn {turn_index} is not a seeker turn")]
    NotASeekerTurn {
        dialogue_id: String,
        turn_index: usize,
    },
    #[error("dialogue `{dialogue_id}` has no turn {turn_index}")]
    TurnOutOfRange {
        dialogue_id: String,
        turn_index: usize,
    },
    #[error("invalid context window `{0}` (expected one of 0, 0.5, 1, 2, 3, 4)")]
    InvalidWindow(String),
}

/// Amount of preceding dialogue concatenated before the query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextWindow {
    half_steps: u8,
}

impl ContextWindow {
    pub const CURRENT: ContextWindow = ContextWindow { half_steps: 0 };
    pub const PREVIOUS_MESSAGE: ContextWindow = ContextWindow { half_steps: 1 };
    pub const ALL: [ContextWindow; 6] = [
        ContextWindow { half_steps: 0 },
        ContextWindow { half_steps: 1 },
        ContextWindow { half_steps: 2 },
        ContextWindow { half_steps: 4 },
        ContextWindow { half_steps: 6 },
        ContextWindow { half_steps: 8 },
    ];

    /// `k` previous exchanges, `k` in 1..=4.
    pub fn turns(k: u8) -> Result<Self, ContextError> {
        if (1..=4).contains(&k) {
            Ok(ContextWindow { half_steps: 2 * k })
        } else {
            Err(ContextError::InvalidWindow(k.to_string()))
        }
    }

    pub fn from_f64(x: f64) -> Result<Self, ContextError> {
        Self::ALL
            .into_iter()
            .find(|w| w.as_f64() == x)
            .ok_or_else(|| ContextError::InvalidWindow(x.to_string()))
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.half_steps) / 2.0
    }

    /// Number of preceding exchanges, `None` for 0 and 0.5.
    pub fn previous_turns(self) -> Option<usize> {
        (self.half_steps >= 2).then_some(usize::from(self.half_steps / 2))
    }
}

impl Default for ContextWindow {
    fn default() -> Self {
        ContextWindow::CURRENT
    }
}

impl fmt::Display for ContextWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.half_steps % 2 == 0 {
            write!(f, "{}", self.half_steps / 2)
        } else {
            write!(f, "{}", self.as_f64())
        }
    }
}

impl FromStr for ContextWindow {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let x: f64 = s
            .trim()
            .parse()
            .map_err(|_| ContextError::InvalidWindow(s.to_string()))?;
        Self::from_f64(x).map_err(|_| ContextError::InvalidWindow(s.to_string()))
    }
}

impl Serialize for ContextWindow {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.half_steps % 2 == 0 {
            serializer.serialize_u64(u64::from(self.half_steps / 2))
        } else {
            serializer.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for ContextWindow {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(x) => ContextWindow::from_f64(x),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub window: ContextWindow,
    pub separator: String,
    pub system_prefix: String,
}

impl ContextSpec {
    pub fn new(window: ContextWindow) -> Self {
        ContextSpec {
            window,
            ..Default::default()
        }
    }
}

impl Default for ContextSpec {
    fn default() -> Self {
        ContextSpec {
            window: ContextWindow::CURRENT,
            separator: " ".into(),
            system_prefix: DEFAULT_SYSTEM_PREFIX.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextualizedQuery {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub window: ContextWindow,
    pub input_text: String,
    pub intents: LabelSet,
    pub attributes: LabelSet,
}

impl ContextualizedQuery {
    pub fn labels(&self, kind: TaxonomyKind) -> LabelSet {
        match kind {
            TaxonomyKind::UserIntent => self.intents,
            TaxonomyKind::MusicalAttribute => self.attributes,
        }
    }
}

pub fn build_context(
    dialogue: &Dialogue,
    turn_index: usize,
    spec: &ContextSpec,
) -> Result<ContextualizedQuery, ContextError> {
    let turn = dialogue
        .turns
        .get(turn_index)
        .ok_or_else(|| ContextError::TurnOutOfRange {
            dialogue_id: dialogue.id.clone(),
            turn_index,
        })?;
    if turn.speaker != Speaker::Seeker {
        return Err(ContextError::NotASeekerTurn {
            dialogue_id: dialogue.id.clone(),
            turn_index,
        });
    }

    let history = &dialogue.turns[..turn_index];
    let start = match spec.window.previous_turns() {
        None if spec.window == ContextWindow::PREVIOUS_MESSAGE => match history.last() {
            Some(prev) if prev.speaker == Speaker::Recommender => turn_index - 1,
            _ => turn_index,
        },
        None => turn_index,
        Some(k) => {
            let mut seekers = 0;
            let mut start = turn_index;
            for (i, t) in history.iter().enumerate().rev() {
                start = i;
                if t.speaker == Speaker::Seeker {
                    seekers += 1;
                    if seekers == k {
                        break;
                    }
                }
            }
            start
        }
    };

    let mut input_text = String::new();
    for t in &history[start..] {
        if t.speaker == Speaker::Recommender {
            input_text.push_str(&spec.system_prefix);
        }
        input_text.push_str(&t.text);
        input_text.push_str(&spec.separator);
    }
    input_text.push_str(&turn.text);

    Ok(ContextualizedQuery {
        dialogue_id: dialogue.id.clone(),
        turn_index,
        window: spec.window,
        input_text,
        intents: turn.intents,
        attributes: turn.attributes,
    })
}

/// Contextualized inputs for every annotated seeker query of the given dialogues.
pub fn contextualize<'a, I>(dialogues: I, spec: &ContextSpec) -> Vec<ContextualizedQuery>
where
    I: IntoIterator<Item = &'a Dialogue>,
{
    dialogues
        .into_iter()
        .flat_map(|d| {
            d.turns
                .iter()
                .enumerate()
                .filter(|(_, t)| t.is_annotated_query())
                .map(move |(i, _)| build_context(d, i, spec).expect("seeker turn"))
        })
        .collect()
}
