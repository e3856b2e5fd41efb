//! Replays the fuzz seed corpus, and byte-level mutations of it, through the
//! decoders with the same invariants the fuzz targets check.

use std::path::PathBuf;

use axm_core::nn::idx::{parse_idx_images, parse_idx_labels};
use axm_core::nn::{ModelSpec, TensorArchive};
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds for {target}");
    paths.into_iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn idx_images(data: &[u8]) {
    if let Ok(t) = parse_idx_images(data) {
        assert_eq!(t.rank(), 4);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn idx_labels(data: &[u8]) {
    if let Ok(labels) = parse_idx_labels(data) {
        assert!(labels.len() <= data.len());
    }
}

fn axtf_archive(data: &[u8]) {
    if let Ok(archive) = TensorArchive::decode(data) {
        let again = TensorArchive::decode(&archive.encode()).expect("re-encoded archive decodes");
        assert_eq!(again.encode(), archive.encode());
    }
}

fn model_spec(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ModelSpec::from_json(text) {
        assert_eq!(ModelSpec::from_json(&spec.to_json()).expect("round trip"), spec);
        let _ = spec.param_slots();
    }
}

type Target = (&'static str, fn(&[u8]));
const TARGETS: [Target; 4] = [
    ("idx_images", idx_images),
    ("idx_labels", idx_labels),
    ("axtf_archive", axtf_archive),
    ("model_spec", model_spec),
];

#[test]
fn seeds_are_well_formed() {
    assert!(seeds("idx_images").iter().any(|s| parse_idx_images(s).is_ok()));
    assert!(seeds("idx_labels").iter().any(|s| parse_idx_labels(s).is_ok()));
    assert!(seeds("axtf_archive")
        .iter()
        .any(|s| TensorArchive::decode(s).map(|a| a.len() > 1).unwrap_or(false)));
    for s in seeds("model_spec") {
        ModelSpec::from_json(std::str::from_utf8(&s).unwrap()).unwrap();
    }
    for (name, check) in TARGETS {
        for s in seeds(name) {
            check(&s);
        }
    }
}

#[derive(Debug, Clone)]
enum Edit {
    Flip(usize, u8),
    Truncate(usize),
    Insert(usize, Vec<u8>),
}

fn apply(mut bytes: Vec<u8>, edits: &[Edit]) -> Vec<u8> {
    for e in edits {
        let n = bytes.len();
        match e {
            Edit::Flip(i, m) if n > 0 => bytes[i % n] ^= m,
            Edit::Truncate(i) => bytes.truncate(i % (n + 1)),
            Edit::Insert(i, b) => {
                let at = i % (n + 1);
                bytes.splice(at..at, b.iter().copied());
            }
            _ => {}
        }
    }
    bytes
}

fn edit() -> impl Strategy<Value = Edit> {
    prop_oneof![
        (any::<usize>(), 1u8..).prop_map(|(i, m)| Edit::Flip(i, m)),
        any::<usize>().prop_map(Edit::Truncate),
        (any::<usize>(), proptest::collection::vec(any::<u8>(), 1..8)).prop_map(|(i, b)| Edit::Insert(i, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(target in 0usize..4, pick in any::<usize>(), edits in proptest::collection::vec(edit(), 1..6)) {
        let (name, check) = TARGETS[target];
        let all = seeds(name);
        check(&apply(all[pick % all.len()].clone(), &edits));
    }

    #[test]
    fn random_bytes_never_panic(data in proptest::collection::vec(any::<u8>(), 0..64)) {
        for (_, check) in TARGETS {
            check(&data);
        }
    }
}
