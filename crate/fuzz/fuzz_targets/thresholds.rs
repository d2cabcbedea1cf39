#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::calibrate::ThresholdVector;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = ThresholdVector::read(data) {
        let mut out = Vec::new();
        t.write(&mut out).unwrap();
        assert_eq!(ThresholdVector::read(&out[..]).unwrap(), t);
    }
});
