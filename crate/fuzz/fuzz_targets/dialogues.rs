#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::corpus::{parse_dialogues, write_dialogues};

fuzz_target!(|data: &[u8]| {
    if let Ok(dialogues) = parse_dialogues(data) {
        let mut out = Vec::new();
        write_dialogues(&mut out, &dialogues).unwrap();
        assert_eq!(parse_dialogues(&out).unwrap(), dialogues);
    }
});
