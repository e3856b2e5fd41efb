use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn axm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axm"))
        .args(args)
        .env_remove("AXM_SEED")
        .output()
        .expect("spawn axm")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_error(o: &Output, code: i32, kind: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "one-line error expected: {err}");
    assert!(err.starts_with(&format!("axm: error[{kind}]: ")), "{err}");
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

/// Writes a tiny 28x28 MNIST-shaped split in raw IDX form.
fn write_mnist(dir: &Path, prefix: &str, count: u32) {
    let mut images = Vec::new();
    for v in [0x0803u32, count, 28, 28] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    let mut labels = Vec::new();
    for v in [0x0801u32, count] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..count {
        let class = (i % 2) as u8;
        for r in 0..28u32 {
            for c in 0..28u32 {
                let on = if class == 0 { r < 14 } else { c < 14 };
                images.push(if on {
                    200 + ((r + c + i) % 40) as u8
                } else {
                    ((r * c + i) % 30) as u8
                });
            }
        }
        labels.push(class);
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
}

#[test]
fn help_for_every_subcommand() {
    let paths: &[&[&str]] = &[
        &[],
        &["mul"],
        &["mul", "characterize"],
        &["mul", "metrics"],
        &["nn"],
        &["nn", "train"],
        &["nn", "eval"],
        &["conv"],
        &["conv", "similarity"],
        &["attack"],
        &["attack", "craft"],
        &["attack", "transfer"],
        &["report"],
        &["report", "confidence"],
        &["report", "whitebox"],
    ];
    for p in paths {
        let mut args = p.to_vec();
        args.push("--help");
        let o = axm(&args);
        ok(&o);
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{args:?}");
    }
    ok(&axm(&["--version"]));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o").to_string_lossy().into_owned();
    assert_error(&axm(&[]), 2, "usage");
    assert_error(&axm(&["frobnicate"]), 2, "usage");
    // seed is mandatory
    assert_error(
        &axm(&[
            "mul",
            "characterize",
            "--backend",
            "ama5",
            "--samples",
            "10",
            "--out",
            &out,
        ]),
        2,
        "usage",
    );
    assert_error(
        &axm(&["mul", "characterize", "--backend", "nope", "--seed", "1", "--out", &out]),
        2,
        "usage",
    );
    assert_error(
        &axm(&[
            "mul",
            "metrics",
            "--backend",
            "ama5",
            "--range",
            "1",
            "0",
            "--samples",
            "10",
            "--seed",
            "1",
            "--out",
            &out,
        ]),
        2,
        "usage",
    );
    assert_error(
        &axm(&[
            "--workers",
            "0",
            "mul",
            "characterize",
            "--backend",
            "ama5",
            "--samples",
            "10",
            "--seed",
            "1",
            "--out",
            &out,
        ]),
        2,
        "usage",
    );
    assert!(!dir.path().join("o.json").exists());
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("absent").to_string_lossy().into_owned();
    let out = d.join("o").to_string_lossy().into_owned();
    assert_error(
        &axm(&["nn", "eval", "--weights", &missing, "--data", &missing, "--out", &out]),
        3,
        "missing-file",
    );
    assert_error(
        &axm(&[
            "attack",
            "transfer",
            "--adv",
            &missing,
            "--weights",
            &missing,
            "--out",
            &out,
        ]),
        3,
        "missing-file",
    );
    assert_error(
        &axm(&["nn", "train", "--data", &missing, "--seed", "1", "--out", &out]),
        3,
        "missing-file",
    );
    // data directory present but without the expected files
    let empty = d.to_string_lossy().into_owned();
    assert_error(
        &axm(&["nn", "train", "--data", &empty, "--seed", "1", "--out", &out]),
        3,
        "missing-file",
    );
}

#[test]
fn malformed_inputs_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mnist(d, "train", 4);
    let data = d.to_string_lossy().into_owned();
    let model = d.join("model.json");
    fs::write(&model, "{\"input\": [1, 28, 28], \"layers\": [").unwrap();
    let out = d.join("w.axtf").to_string_lossy().into_owned();
    let o = axm(&[
        "nn",
        "train",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &data,
        "--seed",
        "1",
        "--out",
        &out,
    ]);
    assert_error(&o, 5, "format");

    write_mnist(d, "t10k", 4);
    let weights = d.join("junk.axtf");
    fs::write(&weights, b"not an archive").unwrap();
    let o = axm(&[
        "nn",
        "eval",
        "--weights",
        weights.to_str().unwrap(),
        "--data",
        &data,
        "--out",
        &out,
    ]);
    assert_error(&o, 5, "format");

    fs::write(d.join("t10k-labels-idx1-ubyte"), [0u8, 0, 8, 1, 0, 0, 0, 9, 1]).unwrap();
    let good = d.join("good.axtf").to_string_lossy().into_owned();
    ok(&axm(&[
        "nn", "train", "--data", &data, "--limit", "4", "--epochs", "1", "--seed", "1", "--out", &good,
    ]));
    let o = axm(&["nn", "eval", "--weights", &good, "--data", &data, "--out", &out]);
    assert_error(&o, 5, "format");
}

#[test]
fn characterize_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&axm(&[
            "mul",
            "characterize",
            "--backend",
            "ama5",
            "--samples",
            "500",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]));
        (
            fs::read(out.with_extension("json")).unwrap(),
            fs::read(out.with_extension("csv")).unwrap(),
        )
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["summary"]["n"], 500);
    let csv = String::from_utf8(a.1).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert!(!csv.contains('\r'));

    // a directory target gets a derived file name
    let sub = dir.path().join("runs");
    fs::create_dir(&sub).unwrap();
    ok(&axm(&[
        "mul",
        "metrics",
        "--backend",
        "ama5",
        "--samples",
        "100",
        "--seed",
        "4",
        "--out",
        sub.to_str().unwrap(),
    ]));
    assert!(fs::read_dir(&sub).unwrap().count() >= 1);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = Command::new(env!("CARGO_BIN_EXE_axm"))
        .args([
            "mul",
            "metrics",
            "--backend",
            "ama5",
            "--samples",
            "50",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("AXM_SEED", "17")
        .output()
        .unwrap();
    ok(&o);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 17);
}

#[test]
fn pipeline_on_tiny_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mnist(d, "train", 16);
    write_mnist(d, "t10k", 8);
    let data = d.to_string_lossy().into_owned();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();

    ok(&axm(&[
        "nn",
        "train",
        "--data",
        &data,
        "--epochs",
        "2",
        "--batch",
        "4",
        "--seed",
        "3",
        "--out",
        &p("w.axtf"),
    ]));
    ok(&axm(&[
        "nn",
        "eval",
        "--weights",
        &p("w.axtf"),
        "--data",
        &data,
        "--backend",
        "exact",
        "--backend",
        "bf16",
        "--out",
        &p("eval"),
    ]));
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(p("eval.json")).unwrap()).unwrap();
    assert!(eval["summary"].is_object() || eval["summary"].is_array());

    ok(&axm(&[
        "attack",
        "craft",
        "--weights",
        &p("w.axtf"),
        "--data",
        &data,
        "--method",
        "pgd",
        "--epsilon",
        "0.1",
        "--samples",
        "4",
        "--out",
        &p("adv.axtf"),
    ]));
    ok(&axm(&[
        "attack",
        "transfer",
        "--adv",
        &p("adv.axtf"),
        "--weights",
        &p("w.axtf"),
        "--out",
        &p("transfer"),
    ]));
    let t: serde_json::Value = serde_json::from_slice(&fs::read(p("transfer.json")).unwrap()).unwrap();
    assert_eq!(t["experiment"], "attack-transfer");
    ok(&axm(&["conv", "similarity", "--out", &p("sim")]));
    assert_eq!(fs::read_to_string(p("sim.csv")).unwrap().lines().count(), 7);
}
