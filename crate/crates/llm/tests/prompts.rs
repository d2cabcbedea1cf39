use music_intent::corpus::{LabelSet, Taxonomy, TaxonomyKind};
use music_intent_llm::{
    build_prompt, format_label_list, parse_label_list, ParseStatus, PromptMode, PromptTemplate,
};
use proptest::prelude::*;

const GOLDEN_INTENT_ZERO_SHOT: &str = "From the following list of user intents:\n\
[initial_query, greeting, add_filter, remove_filter, continue, accept_response, reject_response].\n\
Return only the intents that directly and accurately describe the input text.\n\
Ignore any loosely related or vaguely connected intents.\n\
Provide the result strictly in a list format.\n\
Do not generate any additional text or explanation.\n\
\n\
Input: \"I want jazz songs to listen to with my dad\" Output: [";

#[test]
fn zero_shot_intent_prompt_matches_golden_text() {
    let got = build_prompt(
        "I want jazz songs to listen to with my dad",
        TaxonomyKind::UserIntent,
        PromptMode::ZeroShot,
    );
    assert_eq!(got, GOLDEN_INTENT_ZERO_SHOT);
}

#[test]
fn every_template_ends_with_the_open_list_and_has_right_exemplar_count() {
    for taxonomy in [TaxonomyKind::UserIntent, TaxonomyKind::MusicalAttribute] {
        for mode in [PromptMode::ZeroShot, PromptMode::FewShot] {
            let t = PromptTemplate::new(taxonomy, mode);
            let text = t.render("q");
            assert!(
                text.ends_with("Input: \"q\" Output: ["),
                "{taxonomy:?} {mode:?}"
            );
            let expected = if mode == PromptMode::FewShot { 5 } else { 0 };
            assert_eq!(t.exemplars().len(), expected);
            let labels = Taxonomy::of(taxonomy).labels().join(", ");
            assert!(text.contains(&format!("[{labels}]")));
            for (_, list) in t.exemplars() {
                let parsed = parse_label_list(&format!("[{list}]"), taxonomy);
                assert_eq!(parsed.status, ParseStatus::Ok);
                assert!(parsed.wrong_inferences.is_empty(), "{list}");
            }
        }
    }
}

fn label_set(taxonomy: TaxonomyKind) -> impl Strategy<Value = LabelSet> {
    let n = Taxonomy::of(taxonomy).len();
    prop::collection::vec(any::<bool>(), n).prop_map(|bits| {
        LabelSet::from_indices(bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    })
}

proptest! {
    #[test]
    fn rendering_is_byte_stable(query in "\\PC{0,80}", few in any::<bool>(), attr in any::<bool>()) {
        let taxonomy = if attr { TaxonomyKind::MusicalAttribute } else { TaxonomyKind::UserIntent };
        let mode = if few { PromptMode::FewShot } else { PromptMode::ZeroShot };
        let a = build_prompt(&query, taxonomy, mode);
        let b = build_prompt(&query, taxonomy, mode);
        prop_assert_eq!(a.as_bytes(), b.as_bytes());
        let expected_tail = format!("Input: \"{query}\" Output: [");
        prop_assert!(a.ends_with(&expected_tail));
    }

    #[test]
    fn label_lists_round_trip(intents in label_set(TaxonomyKind::UserIntent), attributes in label_set(TaxonomyKind::MusicalAttribute)) {
        for (set, taxonomy) in [(intents, TaxonomyKind::UserIntent), (attributes, TaxonomyKind::MusicalAttribute)] {
            let text = format_label_list(set, taxonomy);
            let parsed = parse_label_list(&text, taxonomy);
            prop_assert_eq!(parsed.in_taxonomy, set);
            prop_assert_eq!(parsed.status, ParseStatus::Ok);
            // Completion continuing the prompt's pre-opened bracket.
            prop_assert_eq!(parse_label_list(&text[1..], taxonomy).in_taxonomy, set);
        }
    }

    #[test]
    fn parsed_tokens_split_cleanly(tokens in prop::collection::vec("[a-z_]{1,12}", 0..6)) {
        let taxonomy = Taxonomy::musical_attribute();
        let raw = format!("['{}']", tokens.join("', '"));
        let parsed = parse_label_list(&raw, TaxonomyKind::MusicalAttribute);
        for w in &parsed.wrong_inferences {
            prop_assert!(!taxonomy.contains(w));
        }
        for t in &tokens {
            match taxonomy.index_of(t) {
                Some(i) => prop_assert!(parsed.in_taxonomy.contains(i)),
                None => prop_assert!(parsed.wrong_inferences.contains(t)),
            }
        }
    }
}
