#![no_main]
use axm_core::nn::ModelSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ModelSpec::from_json(text) {
        assert_eq!(ModelSpec::from_json(&spec.to_json()).expect("round trip"), spec);
        let _ = spec.param_slots();
    }
});
