#![no_main]
use axm_core::nn::TensorArchive;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(archive) = TensorArchive::decode(data) {
        // anything accepted must survive a re-encode
        let again = TensorArchive::decode(&archive.encode()).expect("re-encoded archive decodes");
        assert_eq!(again.encode(), archive.encode());
    }
});
