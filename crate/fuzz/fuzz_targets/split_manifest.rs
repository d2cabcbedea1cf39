#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::corpus::DatasetSplit;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(split) = DatasetSplit::from_json(text) {
        assert_eq!(DatasetSplit::from_json(&split.to_json()).unwrap(), split);
    }
});
