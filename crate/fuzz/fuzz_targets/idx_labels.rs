#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = axm_core::nn::idx::parse_idx_labels(data) {
        assert!(labels.len() <= data.len());
    }
});
