#![no_main]

use libfuzzer_sys::fuzz_target;
use music_intent::features::{FeatureVector, SparseVector};
use music_intent::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::read(data) {
        if c.model.input_dim() <= 1 << 16 {
            let x = FeatureVector::Sparse(SparseVector::new(c.model.input_dim(), vec![]).unwrap());
            for p in c.model.forward(&x).unwrap() {
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }
});
