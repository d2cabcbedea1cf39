#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::corpus::{Taxonomy, TaxonomyKind};
use music_intent_llm::parse_label_list;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for kind in [TaxonomyKind::UserIntent, TaxonomyKind::MusicalAttribute] {
        let parsed = parse_label_list(text, kind);
        let taxonomy = Taxonomy::of(kind);
        assert!(parsed.in_taxonomy.iter().all(|i| i < taxonomy.len()));
        assert!(parsed
            .wrong_inferences
            .iter()
            .all(|w| !taxonomy.contains(w)));
    }
});
