use std::fmt;
use std::str::FromStr;

use music_intent::corpus::TaxonomyKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

impl PromptMode {
    pub const ALL: [PromptMode; 2] = [PromptMode::ZeroShot, PromptMode::FewShot];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::FewShot => "few_shot",
        }
    }

    /// Report method name, e.g. `llm_few_shot`.
    pub fn method_name(self) -> String {
        format!("llm_{}", self.as_str())
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zero" | "0" => Ok(PromptMode::ZeroShot),
            "few_shot" | "few" | "5" => Ok(PromptMode::FewShot),
            _ => Err(format!(
                "unknown prompt mode `{s}` (expected zero_shot or few_shot)"
            )),
        }
    }
}

const PLACEHOLDER: &str = "{input text}";

const INTENT_ZERO_SHOT: &str = "From the following list of user intents:
[initial_query, greeting, add_filter, remove_filter, continue, accept_response, reject_response].
Return only the intents that directly and accurately describe the input text.
Ignore any loosely related or vaguely connected intents.
Provide the result strictly in a list format.
Do not generate any additional text or explanation.

Input: \"{input text}\" Output: [";

const INTENT_FEW_SHOT: &str = "From the following list of user intents:
[initial_query, greeting, add_filter, remove_filter, continue, accept_response, reject_response].
Return only the intents that directly and accurately describe the input text.
Ignore any loosely related or vaguely connected intents.
Provide the result strictly in a list format.
Do not generate any additional text or explanation.

Example:

Input: \"I want to listen recent famous songs.\"
Output: [add_filter]

Input: \"Hello, can you suggest calm music to listen while sleeping?\"
Output: [initial_query, greeting, add_filter]

Input: \"Wow, I love the vide of these songs!\"
Output: [accept_response]

Input: \"I think these songs are too fast and loud for me.\"
Output: [remove_filter, reject_response]

Input: \"Can you suggest more like these?\"
Output: [continue]

Input: \"{input text}\" Output: [";

const ATTRIBUTE_ZERO_SHOT: &str = "From the following list of musical attributes:
[track, artist, year, popularity, culture, similar_track, similar_artist, user, theme, mood, genre, instrument, vocal, tempo].
Return only the attributes that directly and accurately describe the input text.
Ignore any loosely related or vaguely connected attributes.
Provide the result strictly in a list format.
Do not generate any additional text or explanation.

Input: \"{input text}\" Output: [";

const ATTRIBUTE_FEW_SHOT: &str = "From the following list of musical attributes:
[track, artist, year, popularity, culture, similar_track, similar_artist, user, theme, mood, genre, instrument, vocal, tempo].
Return only the attributes that directly and accurately describe the input text.
Ignore any loosely related or vaguely connected attributes.
Provide the result strictly in a list format.
Do not generate any additional text or explanation.

Example:

Input: \"I want to listen recent famous songs.\"
Output: [year, popularity]

Input: \"Show me faster songs than Ed Sheeran - Shape of You.\"
Output: [tempo, artist, track]

Input: \"Please recommend me some female artists like Rihanna.\"
Output: [similar_artist, vocal]

Input: \"I need exciting hiphop playlist to listen while I exercise.\"
Output: [mood, genre, theme]

Input: \"African songs to listen with my friends.\"
Output: [culture, user]

Input: \"{input text}\" Output: [";

/// A classification prompt for one taxonomy and prompting mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub taxonomy: TaxonomyKind,
    pub mode: PromptMode,
}

impl PromptTemplate {
    pub fn new(taxonomy: TaxonomyKind, mode: PromptMode) -> Self {
        PromptTemplate { taxonomy, mode }
    }

    /// Template text with the `{input text}` placeholder.
    pub fn raw(&self) -> &'static str {
        match (self.taxonomy, self.mode) {
            (TaxonomyKind::UserIntent, PromptMode::ZeroShot) => INTENT_ZERO_SHOT,
            (TaxonomyKind::UserIntent, PromptMode::FewShot) => INTENT_FEW_SHOT,
            (TaxonomyKind::MusicalAttribute, PromptMode::ZeroShot) => ATTRIBUTE_ZERO_SHOT,
            (TaxonomyKind::MusicalAttribute, PromptMode::FewShot) => ATTRIBUTE_FEW_SHOT,
        }
    }

    /// Worked examples embedded in the template, as `(input, output list)` pairs.
    pub fn exemplars(&self) -> Vec<(&'static str, &'static str)> {
        let raw = self.raw();
        let mut out = Vec::new();
        let mut rest = raw;
        while let Some(start) = rest.find("Input: \"") {
            let after = &rest[start + 8..];
            let Some(end) = after.find("\"\nOutput: [") else {
                break;
            };
            let input = &after[..end];
            let list_start = end + "\"\nOutput: [".len();
            let list_end = after[list_start..].find(']').expect("closed list") + list_start;
            out.push((input, &after[list_start..list_end]));
            rest = &after[list_end..];
        }
        out
    }

    pub fn render(&self, query: &str) -> String {
        self.raw().replacen(PLACEHOLDER, query, 1)
    }
}

/// Renders the classification prompt for `query`.
pub fn build_prompt(query: &str, taxonomy: TaxonomyKind, mode: PromptMode) -> String {
    PromptTemplate::new(taxonomy, mode).render(query)
}
