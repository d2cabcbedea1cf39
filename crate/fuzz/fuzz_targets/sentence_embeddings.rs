#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::features::SentenceEmbeddings;

fuzz_target!(|data: &[u8]| {
    let _ = SentenceEmbeddings::read(data);
});
