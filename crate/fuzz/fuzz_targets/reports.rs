#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::eval::{render_report, F1Report};

fuzz_target!(|data: &[u8]| {
    if let Ok(reports) = serde_json::from_slice::<Vec<F1Report>>(data) {
        let _ = render_report(&reports);
    }
});
