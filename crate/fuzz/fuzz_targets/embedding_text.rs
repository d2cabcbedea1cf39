#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::features::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = EmbeddingTable::read_text(data, None) {
        assert!(table.dim() > 0 || table.is_empty());
    }
});
