#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::features::{tfidf_vectorize, Vocabulary};

fuzz_target!(|data: &[u8]| {
    if let Ok(vocab) = serde_json::from_slice::<Vocabulary>(data) {
        let tokens: Vec<&str> = (0..vocab.len().min(64))
            .filter_map(|i| vocab.token(i))
            .collect();
        let v = tfidf_vectorize(&tokens, &vocab);
        assert!(v.is_empty() || (v.norm() - 1.0).abs() < 1e-9);
    }
});
