use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// User-intent labels, in their canonical table order.
pub const USER_INTENTS: [&str; 7] = [
    "initial_query",
    "greeting",
    "add_filter",
    "remove_filter",
    "continue",
    "accept_response",
    "reject_response",
];

/// Musical-attribute labels, in their canonical table order.
pub const MUSICAL_ATTRIBUTES: [&str; 14] = [
    "track",
    "artist",
    "year",
    "popularity",
    "culture",
    "similar_track",
    "similar_artist",
    "user",
    "theme",
    "mood",
    "genre",
    "instrument",
    "vocal",
    "tempo",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyKind {
    UserIntent,
    MusicalAttribute,
}

impl TaxonomyKind {
    pub const ALL: [TaxonomyKind; 2] = [TaxonomyKind::UserIntent, TaxonomyKind::MusicalAttribute];

    pub fn taxonomy(self) -> Taxonomy {
        Taxonomy::of(self)
    }

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            TaxonomyKind::UserIntent => "intent",
            TaxonomyKind::MusicalAttribute => "attribute",
        }
    }
}

impl fmt::Display for TaxonomyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TaxonomyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intent" | "intents" | "user_intent" => Ok(TaxonomyKind::UserIntent),
            "attribute" | "attributes" | "musical_attribute" => Ok(TaxonomyKind::MusicalAttribute),
            other => Err(format!(
                "unknown taxonomy `{other}` (expected `intent` or `attribute`)"
            )),
        }
    }
}

/// A closed, ordered label set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    kind: TaxonomyKind,
    labels: &'static [&'static str],
}

impl Taxonomy {
    pub fn of(kind: TaxonomyKind) -> Self {
        let labels: &'static [&'static str] = match kind {
            TaxonomyKind::UserIntent => &USER_INTENTS,
            TaxonomyKind::MusicalAttribute => &MUSICAL_ATTRIBUTES,
        };
        Taxonomy { kind, labels }
    }

    pub fn user_intent() -> Self {
        Self::of(TaxonomyKind::UserIntent)
    }

    pub fn musical_attribute() -> Self {
        Self::of(TaxonomyKind::MusicalAttribute)
    }

    pub fn kind(&self) -> TaxonomyKind {
        self.kind
    }

    pub fn labels(&self) -> &'static [&'static str] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn label(&self, index: usize) -> Option<&'static str> {
        self.labels.get(index).copied()
    }

    /// Builds a label set from names, failing on the first name outside the taxonomy.
    pub fn label_set<S: AsRef<str>>(&self, names: &[S]) -> Result<LabelSet, String> {
        let mut set = LabelSet::empty();
        for name in names {
            let name = name.as_ref();
            match self.index_of(name) {
                Some(i) => set.insert(i),
                None => return Err(name.to_string()),
            }
        }
        Ok(set)
    }

    pub fn names(&self, set: LabelSet) -> Vec<&'static str> {
        set.iter().filter_map(|i| self.label(i)).collect()
    }
}

/// Set of label indices within one taxonomy. Both taxonomies have fewer than 32 labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const fn empty() -> Self {
        LabelSet(0)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut set = LabelSet::empty();
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < 32, "label index {index} out of range");
        self.0 |= 1 << index;
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 32 && self.0 & (1 << index) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |i| self.contains(*i))
    }

    pub fn bits(&self) -> u32 {
        self.0
    }
}
