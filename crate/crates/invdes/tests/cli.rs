use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn invdes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invdes"))
        .args(args)
        .env_remove("FALCON_REGISTRY")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = invdes(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_flag() {
    let out = invdes(&["--help"]);
    assert!(out.status.success());
    let help = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--data", "--out", "--model", "--seed", "--epochs", "--batch", "--lr", "--topology", "--target",
        "--netlist", "--params", "--trace", "--registry", "--n",
    ] {
        assert!(help.contains(&format!("{flag} ")) || help.contains(&format!("{flag}\n")), "{flag}");
    }
    for sub in [
        "gen-data", "train-classifier", "train-gnn", "finetune", "predict", "design", "layout-report",
        "export-graph", "eval",
    ] {
        assert!(help.contains(sub), "{sub}");
    }
}

#[test]
fn gen_data_is_reproducible() {
    let a = invdes(&["gen-data", "--n", "100", "--seed", "1"]);
    let b = invdes(&["gen-data", "--n", "100", "--seed", "1"]);
    let c = invdes(&["gen-data", "--n", "100", "--seed", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(a.stdout.iter().filter(|&&b| b == b'\n').count(), 300);

    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("d.jsonl");
    let doc = ok_json(&["gen-data", "--n", "100", "--seed", "1", "--out", s(&f)]);
    assert_eq!(doc["records"], 300);
    assert_eq!(fs::read(&f).unwrap(), a.stdout);
    let one = invdes(&["gen-data", "--n", "10", "--topology", "rdiv_att"]);
    assert_eq!(one.stdout.iter().filter(|&&b| b == b'\n').count(), 10);
}

#[test]
fn bad_flags_exit_2_runtime_failures_exit_1() {
    assert_eq!(invdes(&["gen-data", "--bogus"]).status.code(), Some(2));
    assert_eq!(invdes(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(invdes(&["gen-data", "--n", "ten"]).status.code(), Some(2));
    let missing = invdes(&["train-gnn"]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(missing.stderr.split(|&b| b == b'\n').find(|l| l.starts_with(b"{")).unwrap()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    assert_eq!(invdes(&["eval", "--data", "/no/such/file", "--model", "/tmp"]).status.code(), Some(2));
    assert_eq!(invdes(&["gen-data", "--topology", "nand_gate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    fs::write(&p, r#"{"W": "50u", "R": 1000, "C": "100f"}"#).unwrap();
    let out = invdes(&["layout-report", "--topology", "rc_amp", "--params", s(&p)]);
    assert_eq!(out.status.code(), Some(1), "W is out of bounds");
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
}

#[test]
fn layout_report_totals_components() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("a.net");
    fs::write(
        &net,
        ".param R 10 100k 1k\n.param C 1f 10p 100f\nV1 vsource in 0 src=ac\nR1 resistor in out R=R\nC1 capacitor out 0 C=C\nL1 inductor out 0 L=0.22n\n",
    )
    .unwrap();
    let p = dir.path().join("p.json");
    fs::write(&p, r#"{"R": 50, "C": "500f"}"#).unwrap();
    let doc = ok_json(&["layout-report", "--netlist", s(&net), "--params", s(&p)]);
    let comps = doc["components"].as_array().unwrap();
    assert_eq!(comps.len(), 3);
    let sum: f64 = comps.iter().map(|c| c["area_um2"].as_f64().unwrap()).sum();
    let total = doc["total_area_um2"].as_f64().unwrap();
    assert!((sum - total).abs() < 1e-9 * total);
    let r = comps.iter().find(|c| c["id"] == "R1").unwrap();
    assert_eq!(r["n"], 3);
    assert!((r["area_um2"].as_f64().unwrap() - 86.36).abs() < 0.01);
    assert!((doc["normalized_loss"].as_f64().unwrap() - total / 1e6).abs() < 1e-15);
}

#[test]
fn export_graph_json_and_dot() {
    let doc = ok_json(&["export-graph", "--topology", "DPA"]);
    assert_eq!(doc["graph"]["edges"].as_array().unwrap().len(), doc["edges"].as_u64().unwrap() as usize);
    assert!(doc["dot"].as_str().unwrap().starts_with("graph") || doc["dot"].as_str().unwrap().contains("--"));
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    ok_json(&["export-graph", "--topology", "CCVCO", "--out", s(&dot)]);
    assert!(fs::read_to_string(&dot).unwrap().contains("--"));
}

#[test]
fn registry_env_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_invdes"))
        .args(["export-graph", "--topology", "CSVA"])
        .env("FALCON_REGISTRY", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "empty registry from the environment must be used");
    let bundled = invdes::registry::Registry::bundled_path();
    let out = Command::new(env!("CARGO_BIN_EXE_invdes"))
        .args(["export-graph", "--topology", "CSVA", "--registry", s(&bundled)])
        .env("FALCON_REGISTRY", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "--registry wins over the environment");
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("d.jsonl");
    let model = d.join("m");
    ok_json(&["gen-data", "--n", "60", "--seed", "3", "--out", s(&data)]);

    let clf = ok_json(&["train-classifier", "--data", s(&data), "--out", s(&model), "--epochs", "3"]);
    assert_eq!(clf["split"]["test"], 18);
    let gnn = ok_json(&["train-gnn", "--data", s(&data), "--out", s(&model), "--epochs", "2", "--batch", "64"]);
    assert_eq!(gnn["epochs"], 2);

    let p = d.join("p.json");
    fs::write(&p, r#"{"W": "10u", "R": 1000, "C": "159.155f"}"#).unwrap();
    let pred = ok_json(&["predict", "--model", s(&model), "--topology", "rc_amp", "--params", s(&p)]);
    assert_eq!(pred["predicted"].as_object().unwrap().len(), 3);

    let t = d.join("t.json");
    fs::write(&t, r#"{"DCP": 2.0, "VGain": 20.0, "BW": 1e9}"#).unwrap();
    let top = ok_json(&["predict", "--model", s(&model), "--target", s(&t)]);
    assert_eq!(top["probabilities"].as_array().unwrap().len(), 20);

    let trace = d.join("trace.jsonl");
    let run = |seed: &str| {
        ok_json(&[
            "design", "--model", s(&model), "--target", s(&t), "--topology", "rc_amp", "--seed", seed, "--trace",
            s(&trace),
        ])
    };
    let a = run("7");
    // Every restart is traced; the result keeps the best run only.
    let traced = fs::read_to_string(&trace).unwrap().lines().count();
    assert!(a["result"]["steps"].as_u64().unwrap() as usize <= traced);
    assert!(a["result"]["oracle"]["mean_relative_error"].is_number());
    let b = run("7");
    assert_eq!(a["result"], b["result"], "design is seed-reproducible");
    let auto = ok_json(&["design", "--model", s(&model), "--target", s(&t), "--seed", "1"]);
    assert!(auto["classifier_probabilities"].is_array());

    let ev = ok_json(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert!(ev["classifier"]["accuracy"].is_number());
    assert!(ev["forward"]["mean_relative_error"].is_number());

    let held = d.join("h.jsonl");
    ok_json(&["gen-data", "--n", "40", "--seed", "4", "--topology", "rdiv_att", "--out", s(&held)]);
    let tuned = d.join("tuned");
    let ft = ok_json(&["finetune", "--model", s(&model), "--data", s(&held), "--out", s(&tuned), "--epochs", "2"]);
    assert_eq!(ft["trunk_unchanged"], true);
    assert_eq!(ft["trunk_sha256_before"], gnn["trunk_sha256"]);
}
