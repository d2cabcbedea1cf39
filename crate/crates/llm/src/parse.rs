use music_intent::corpus::{LabelSet, TaxonomyKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Malformed,
}

/// Labels recovered from a completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedLabels {
    pub in_taxonomy: LabelSet,
    /// Normalized tokens that name no label of the taxonomy, first occurrence order.
    pub wrong_inferences: Vec<String>,
    pub status: ParseStatus,
}

impl ParsedLabels {
    pub fn malformed() -> Self {
        ParsedLabels {
            in_taxonomy: LabelSet::empty(),
            wrong_inferences: Vec::new(),
            status: ParseStatus::Malformed,
        }
    }
}

const QUOTES: &[char] = &[
    '\'', '"', '`', '\u{2018}', '\u{2019}', '\u{201c}', '\u{201d}',
];

/// Body of the first bracketed list. A `]` before any `[` closes the list the prompt opened.
fn list_body(raw: &str) -> Option<&str> {
    let close = raw.find(']')?;
    match raw.find('[') {
        Some(open) if open < close => Some(&raw[open + 1..close]),
        _ => Some(&raw[..close]),
    }
}

fn normalize(token: &str) -> String {
    token
        .trim()
        .trim_matches(|c: char| QUOTES.contains(&c) || c.is_whitespace())
        .to_lowercase()
}

/// Splits a completion's label list into taxonomy labels and wrong inferences.
pub fn parse_label_list(raw: &str, taxonomy: TaxonomyKind) -> ParsedLabels {
    let Some(body) = list_body(raw) else {
        return ParsedLabels::malformed();
    };
    let tax = taxonomy.taxonomy();
    let mut parsed = ParsedLabels {
        in_taxonomy: LabelSet::empty(),
        wrong_inferences: Vec::new(),
        status: ParseStatus::Ok,
    };
    for token in body.split(',').map(normalize).filter(|t| !t.is_empty()) {
        match tax.index_of(&token) {
            Some(i) => parsed.in_taxonomy.insert(i),
            None if !parsed.wrong_inferences.contains(&token) => {
                parsed.wrong_inferences.push(token)
            }
            None => {}
        }
    }
    parsed
}

/// `[a, b]` with labels in taxonomy order.
pub fn format_label_list(set: LabelSet, taxonomy: TaxonomyKind) -> String {
    format!("[{}]", taxonomy.taxonomy().names(set).join(", "))
}
