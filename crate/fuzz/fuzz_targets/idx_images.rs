#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = axm_core::nn::idx::parse_idx_images(data) {
        assert_eq!(t.rank(), 4);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
