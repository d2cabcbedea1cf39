//! Deterministic synthetic dialogues with learnable label cues.
//!
//! Useful for smoke tests, demos and benchmarking the pipeline without the
//! real corpus. Every label is signalled by phrases drawn from a small bank, so
//! the classifiers can reach high scores on it.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, LabelSet, Taxonomy, Turn};

const INTENT_PHRASES: [&[&str]; 7] = [
    &[
        "i want a playlist",
        "can you make me a playlist",
        "start a new playlist",
    ],
    &["hello", "hi there", "hey"],
    &["please add", "also include", "mix in some"],
    &["please remove", "no more", "drop the"],
    &["more like these", "keep them coming", "another batch"],
    &["love these", "great picks", "these are perfect"],
    &["not these", "i dislike this", "nope not for me"],
];

const ATTRIBUTE_PHRASES: [&[&str]; 14] = [
    &["the song yellow submarine", "the track blinding lights"],
    &["by taylor swift", "by miles davis", "by bts"],
    &["from the 90s", "from the 80s", "released in 2010"],
    &["famous hits", "popular chart toppers"],
    &["african", "korean", "latin"],
    &["songs like bohemian rhapsody", "tracks similar to hey jude"],
    &["artists like rihanna", "bands similar to coldplay"],
    &["for my dad", "with my friends", "for my kids"],
    &["for a workout", "while studying", "for a road trip"],
    &["happy", "melancholic", "calm", "energetic"],
    &["jazz", "rock", "hiphop", "country"],
    &["with guitar", "piano driven", "heavy drums"],
    &["female vocals", "male singer", "acapella"],
    &["fast", "slow", "upbeat tempo"],
];

const RECOMMENDER_PHRASES: [&str; 5] = [
    "Here are some tracks you might like.",
    "Sure, I added a few songs.",
    "How about these?",
    "I updated the playlist.",
    "Let me know what you think of these.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, bank: &[&'a str]) -> &'a str {
    bank.choose(rng).expect("non-empty bank")
}

fn seeker_turn(rng: &mut ChaCha8Rng, first: bool) -> Turn {
    let mut intents = LabelSet::empty();
    if first {
        intents.insert(0);
        if rng.random_bool(0.3) {
            intents.insert(1);
        }
    } else {
        intents.insert(rng.random_range(2..7));
        if rng.random_bool(0.15) {
            intents.insert(rng.random_range(2..7));
        }
    }
    let mut attributes = LabelSet::empty();
    let n_attr = if intents.contains(4) || intents.contains(5) {
        rng.random_range(0..2)
    } else {
        rng.random_range(1..4)
    };
    let mut order: Vec<usize> = (0..14).collect();
    order.shuffle(rng);
    for &a in &order[..n_attr] {
        attributes.insert(a);
    }

    let mut parts: Vec<&str> = intents
        .iter()
        .map(|i| pick(rng, INTENT_PHRASES[i]))
        .collect();
    parts.extend(attributes.iter().map(|a| pick(rng, ATTRIBUTE_PHRASES[a])));
    Turn::seeker(parts.join(" "), intents, attributes)
}

/// `n` dialogues named `syn-0000`, `syn-0001`, ...
pub fn generate_corpus(n: usize, seed: u64) -> Vec<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    debug_assert_eq!(Taxonomy::user_intent().len(), INTENT_PHRASES.len());
    debug_assert_eq!(Taxonomy::musical_attribute().len(), ATTRIBUTE_PHRASES.len());
    (0..n)
        .map(|i| {
            let queries = rng.random_range(2..6);
            let mut turns = Vec::with_capacity(queries * 2);
            for q in 0..queries {
                turns.push(seeker_turn(&mut rng, q == 0));
                turns.push(Turn::recommender(pick(&mut rng, &RECOMMENDER_PHRASES)));
            }
            Dialogue {
                id: format!("syn-{i:04}"),
                turns,
            }
        })
        .collect()
}
