#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent_llm::read_transcript;

fuzz_target!(|data: &[u8]| {
    let _ = read_transcript(data);
});
