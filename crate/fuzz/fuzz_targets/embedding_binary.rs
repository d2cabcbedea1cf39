#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::features::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    let _ = EmbeddingTable::read_binary(data, None);
});
