use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dialogue, MUSICAL_ATTRIBUTES, USER_INTENTS};

/// Train / validation / test proportions.
pub const SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

const MIN_DIALOGUES: usize = 10;
const LABEL_COUNT: usize = USER_INTENTS.len() + MUSICAL_ATTRIBUTES.len();
const MAX_REFINE_PASSES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    pub const ALL: [SplitPart; 3] = [SplitPart::Train, SplitPart::Validation, SplitPart::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        }
    }
}

impl std::fmt::Display for SplitPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dialogue-level partition of a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SplitManifest", into = "SplitManifest")]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    seed: u64,
    ratios: [f64; 3],
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

impl From<DatasetSplit> for SplitManifest {
    fn from(s: DatasetSplit) -> Self {
        SplitManifest {
            seed: s.seed,
            ratios: SPLIT_RATIOS,
            train: s.train,
            validation: s.validation,
            test: s.test,
        }
    }
}

impl TryFrom<SplitManifest> for DatasetSplit {
    type Error = String;

    fn try_from(m: SplitManifest) -> Result<Self, Self::Error> {
        if m.ratios != SPLIT_RATIOS {
            return Err(format!("unsupported split ratios {:?}", m.ratios));
        }
        let split = DatasetSplit {
            seed: m.seed,
            train: m.train,
            validation: m.validation,
            test: m.test,
        };
        let mut seen = HashSet::new();
        for id in split.all_ids() {
            if !seen.insert(id) {
                return Err(format!("dialogue `{id}` listed more than once"));
            }
        }
        Ok(split)
    }
}

impl DatasetSplit {
    pub fn ids(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }

    fn all_ids(&self) -> impl Iterator<Item = &str> {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn part_of(&self, id: &str) -> Option<SplitPart> {
        SplitPart::ALL
            .into_iter()
            .find(|p| self.ids(*p).iter().any(|x| x == id))
    }

    /// Dialogues of one part, in corpus order.
    pub fn select<'a>(&self, dialogues: &'a [Dialogue], part: SplitPart) -> Vec<&'a Dialogue> {
        let wanted: HashSet<&str> = self.ids(part).iter().map(String::as_str).collect();
        dialogues
            .iter()
            .filter(|d| wanted.contains(d.id.as_str()))
            .collect()
    }

    /// Checks that the split partitions exactly the given corpus.
    pub fn validate_against(&self, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
        let corpus: HashSet<&str> = dialogues.iter().map(|d| d.id.as_str()).collect();
        let mut seen = HashSet::new();
        for id in self.all_ids() {
            if !seen.insert(id) {
                return Err(CorpusError::InvalidSplit(format!(
                    "dialogue `{id}` listed more than once"
                )));
            }
            if !corpus.contains(id) {
                return Err(CorpusError::InvalidSplit(format!(
                    "dialogue `{id}` is not in the corpus"
                )));
            }
        }
        if let Some(missing) = corpus.iter().find(|id| !seen.contains(*id)) {
            return Err(CorpusError::InvalidSplit(format!(
                "dialogue `{missing}` is not assigned to any split"
            )));
        }
        Ok(())
    }

    /// Largest absolute difference, over every label and split part, between the
    /// fraction of the part's dialogues containing the label and the corpus-wide fraction.
    pub fn max_label_deviation(&self, dialogues: &[Dialogue]) -> f64 {
        let presence: HashMap<&str, u32> = dialogues
            .iter()
            .map(|d| (d.id.as_str(), label_presence(d)))
            .collect();
        let n = dialogues.len() as f64;
        let mut worst = 0.0f64;
        for l in 0..LABEL_COUNT {
            let global = dialogues
                .iter()
                .filter(|d| label_presence(d) & (1 << l) != 0)
                .count() as f64
                / n;
            for part in SplitPart::ALL {
                let ids = self.ids(part);
                if ids.is_empty() {
                    continue;
                }
                let hits = ids
                    .iter()
                    .filter(|id| presence.get(id.as_str()).is_some_and(|p| p & (1 << l) != 0))
                    .count() as f64;
                worst = worst.max((hits / ids.len() as f64 - global).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split manifest serializes")
    }

    pub fn from_json(input: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(input).map_err(|e| CorpusError::InvalidSplit(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Bit `l` set when the dialogue carries label `l` anywhere, intents first then attributes.
fn label_presence(dialogue: &Dialogue) -> u32 {
    dialogue.turns.iter().fold(0u32, |acc, t| {
        acc | t.intents.bits() | (t.attributes.bits() << USER_INTENTS.len())
    })
}

/// Part sizes: train = floor(0.8 n), the remainder halved between validation and test
/// (test takes the odd one).
pub(crate) fn split_sizes(n: usize) -> [usize; 3] {
    let train = n * 8 / 10;
    let rest = n - train;
    let validation = rest / 2;
    [train, validation, rest - validation]
}

/// Label-preserving 8:1:1 split at dialogue granularity.
///
/// Greedy iterative stratification over per-dialogue label presence: the label with
/// the fewest unassigned dialogues is handled first, and each of its dialogues goes to
/// the part whose remaining demand for that label is largest. A swap-based pass then
/// reduces the squared deviation between per-part and global label prevalence.
/// Part sizes are exact; the result depends only on dialogue ids, labels and `seed`.
pub fn stratified_split(dialogues: &[Dialogue], seed: u64) -> Result<DatasetSplit, CorpusError> {
    let n = dialogues.len();
    if n < MIN_DIALOGUES {
        return Err(CorpusError::TooFewDialogues {
            required: MIN_DIALOGUES,
            found: n,
        });
    }
    let mut ids = HashSet::new();
    for d in dialogues {
        if !ids.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateDialogueId(d.id.clone()));
        }
    }

    let sizes = split_sizes(n);
    let presence: Vec<u32> = dialogues.iter().map(label_presence).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| dialogues[*a].id.cmp(&dialogues[*b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut remaining = [0usize; LABEL_COUNT];
    for p in &presence {
        for (l, r) in remaining.iter_mut().enumerate() {
            if p & (1 << l) != 0 {
                *r += 1;
            }
        }
    }
    let mut desired: Vec<[f64; 3]> = remaining
        .iter()
        .map(|&c| sizes.map(|s| c as f64 * s as f64 / n as f64))
        .collect();
    let mut capacity = sizes;
    let mut assignment: Vec<Option<usize>> = vec![None; n];

    let assign = |d: usize,
                  j: usize,
                  assignment: &mut Vec<Option<usize>>,
                  capacity: &mut [usize; 3],
                  desired: &mut Vec<[f64; 3]>,
                  remaining: &mut [usize; LABEL_COUNT]| {
        assignment[d] = Some(j);
        capacity[j] -= 1;
        for l in 0..LABEL_COUNT {
            if presence[d] & (1 << l) != 0 {
                desired[l][j] -= 1.0;
                remaining[l] -= 1;
            }
        }
    };

    while let Some(label) = (0..LABEL_COUNT)
        .filter(|l| remaining[*l] > 0)
        .min_by_key(|l| (remaining[*l], *l))
    {
        for &d in &order {
            if assignment[d].is_some() || presence[d] & (1 << label) == 0 {
                continue;
            }
            let part = (0..3)
                .filter(|j| capacity[*j] > 0)
                .max_by(|a, b| {
                    desired[label][*a]
                        .total_cmp(&desired[label][*b])
                        .then(capacity[*a].cmp(&capacity[*b]))
                        .then(b.cmp(a))
                })
                .expect("capacity covers every unassigned dialogue");
            assign(
                d,
                part,
                &mut assignment,
                &mut capacity,
                &mut desired,
                &mut remaining,
            );
        }
    }
    for &d in &order {
        if assignment[d].is_none() {
            let part = (0..3)
                .max_by(|a, b| capacity[*a].cmp(&capacity[*b]).then(b.cmp(a)))
                .expect("three parts");
            assign(
                d,
                part,
                &mut assignment,
                &mut capacity,
                &mut desired,
                &mut remaining,
            );
        }
    }

    let mut assignment: Vec<usize> = assignment
        .into_iter()
        .map(|a| a.expect("assigned"))
        .collect();
    refine(&presence, &sizes, &order, &mut assignment);

    let mut parts: [Vec<String>; 3] = Default::default();
    for &d in &order {
        parts[assignment[d]].push(dialogues[d].id.clone());
    }
    let [train, validation, test] = parts;
    Ok(DatasetSplit {
        seed,
        train,
        validation,
        test,
    })
}

/// Pairwise swaps between parts while they lower the summed squared prevalence
/// deviation. Sizes are preserved by construction.
fn refine(presence: &[u32], sizes: &[usize; 3], order: &[usize], assignment: &mut [usize]) {
    let n = presence.len() as f64;
    let mut counts = [[0i64; 3]; LABEL_COUNT];
    let mut global = [0.0f64; LABEL_COUNT];
    for (d, p) in presence.iter().enumerate() {
        for l in 0..LABEL_COUNT {
            if p & (1 << l) != 0 {
                counts[l][assignment[d]] += 1;
                global[l] += 1.0 / n;
            }
        }
    }
    let cost = |c: i64, part: usize, l: usize| {
        let dev = c as f64 / sizes[part] as f64 - global[l];
        dev * dev
    };

    for _ in 0..MAX_REFINE_PASSES {
        let mut improved = false;
        for &a in order {
            let pa = assignment[a];
            let mut best: Option<(f64, usize)> = None;
            for &b in order {
                let pb = assignment[b];
                let diff = presence[a] ^ presence[b];
                if pa == pb || diff == 0 {
                    continue;
                }
                let mut delta = 0.0;
                for l in 0..LABEL_COUNT {
                    if diff & (1 << l) == 0 {
                        continue;
                    }
                    // +1 when `a` carries the label (it leaves pa, enters pb).
                    let shift = if presence[a] & (1 << l) != 0 { 1 } else { -1 };
                    let (ca, cb) = (counts[l][pa], counts[l][pb]);
                    delta += cost(ca - shift, pa, l) + cost(cb + shift, pb, l)
                        - cost(ca, pa, l)
                        - cost(cb, pb, l);
                }
                if delta < -1e-12 && best.is_none_or(|(d, _)| delta < d) {
                    best = Some((delta, b));
                }
            }
            if let Some((_, b)) = best {
                let pb = assignment[b];
                for l in 0..LABEL_COUNT {
                    if presence[a] & (1 << l) != 0 {
                        counts[l][pa] -= 1;
                        counts[l][pb] += 1;
                    }
                    if presence[b] & (1 << l) != 0 {
                        counts[l][pb] -= 1;
                        counts[l][pa] += 1;
                    }
                }
                assignment.swap(a, b);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, Turn};

    fn dialogue(id: &str, intents: &[usize], attributes: &[usize]) -> Dialogue {
        Dialogue {
            id: id.to_string(),
            turns: vec![Turn::seeker(
                "q",
                LabelSet::from_indices(intents.iter().copied()),
                LabelSet::from_indices(attributes.iter().copied()),
            )],
        }
    }

    #[test]
    fn sizes_follow_the_rounding_rule() {
        assert_eq!(split_sizes(888), [710, 89, 89]);
        assert_eq!(split_sizes(10), [8, 1, 1]);
        assert_eq!(split_sizes(11), [8, 1, 2]);
        assert_eq!(split_sizes(13), [10, 1, 2]);
    }

    #[test]
    fn ten_uniform_dialogues_split_8_1_1() {
        let dialogues: Vec<_> = (0..10)
            .map(|i| dialogue(&format!("d{i}"), &[0], &[10]))
            .collect();
        let split = stratified_split(&dialogues, 7).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (8, 1, 1)
        );
        split.validate_against(&dialogues).unwrap();
    }

    #[test]
    fn too_few_dialogues() {
        let dialogues: Vec<_> = (0..9)
            .map(|i| dialogue(&format!("d{i}"), &[0], &[]))
            .collect();
        assert!(matches!(
            stratified_split(&dialogues, 0),
            Err(CorpusError::TooFewDialogues { found: 9, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut dialogues: Vec<_> = (0..10)
            .map(|i| dialogue(&format!("d{i}"), &[0], &[]))
            .collect();
        dialogues[3].id = "d0".into();
        assert!(matches!(
            stratified_split(&dialogues, 0),
            Err(CorpusError::DuplicateDialogueId(_))
        ));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let mut dialogues: Vec<_> = (0..60)
            .map(|i| dialogue(&format!("d{i}"), &[i % 7], &[i % 14, (i * 3) % 14]))
            .collect();
        let a = stratified_split(&dialogues, 3).unwrap();
        let b = stratified_split(&dialogues, 3).unwrap();
        assert_eq!(a, b);
        dialogues.reverse();
        let c = stratified_split(&dialogues, 3).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn manifest_round_trips_and_rejects_duplicates() {
        let dialogues: Vec<_> = (0..20)
            .map(|i| dialogue(&format!("d{i}"), &[i % 3], &[]))
            .collect();
        let split = stratified_split(&dialogues, 11).unwrap();
        let json = split.to_json();
        assert_eq!(DatasetSplit::from_json(&json).unwrap(), split);

        let bad =
            r#"{"seed":1,"ratios":[0.8,0.1,0.1],"train":["a","b"],"validation":["a"],"test":[]}"#;
        assert!(DatasetSplit::from_json(bad).is_err());
        let bad_ratio =
            r#"{"seed":1,"ratios":[0.7,0.2,0.1],"train":["a"],"validation":[],"test":[]}"#;
        assert!(DatasetSplit::from_json(bad_ratio).is_err());
    }

    #[test]
    fn validate_against_detects_mismatch() {
        let dialogues: Vec<_> = (0..10)
            .map(|i| dialogue(&format!("d{i}"), &[0], &[]))
            .collect();
        let mut split = stratified_split(&dialogues, 1).unwrap();
        split.train.pop();
        assert!(split.validate_against(&dialogues).is_err());
    }
}
