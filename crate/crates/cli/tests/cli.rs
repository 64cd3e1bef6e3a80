use std::path::Path;
use std::process::{Command, Output};

use roughwave::coeff::{build_pairs, make_counterexample_density, make_sequences, Cutoff, ModulusDescriptor, Psi, SequenceMode, SequenceSpec};
use roughwave::observability::{run_counterexample_sweep, SweepOptions};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn roughwave(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughwave")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const COUNTEREXAMPLE: &str = "orders = [0, 1, 2]\n[coefficient]\nsource = \"counterexample\"\n[sequence]\nj_min = 2\nj_max = 5\n";

#[test]
fn simulate_writes_checksummed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = roughwave(&["simulate", "--out", "run", "--resolution", "256"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("run");
    let m = manifest(&dir);
    assert_eq!(m["provenance"]["kind"], "simulate");
    let files = m["files"].as_array().unwrap();
    for name in ["config.json", "summary.json", "traces.csv", "energies.csv", "energies.svg"] {
        assert!(files.iter().any(|f| f["file"] == name), "{name} missing");
    }
    for f in files {
        let bytes = std::fs::read(dir.join(f["file"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    let hash = m["provenance"]["config_sha256"].as_str().unwrap();
    let config = std::fs::read(dir.join("config.json")).unwrap();
    assert_eq!(hash, hex::encode(Sha256::digest(&config)));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["config_sha256"], hash);
    assert_eq!(summary["data"]["n"], 256);
    let svg = std::fs::read_to_string(dir.join("energies.svg")).unwrap();
    assert!(svg.contains(hash));
    // Defaults are echoed: the horizon is resolved to 2 T_omega + 1/2 = 2.5.
    let echoed: Value = serde_json::from_slice(&config).unwrap();
    assert!((echoed["t"].as_f64().unwrap() - 2.5).abs() < 1e-9);
}

#[test]
fn counterexample_table_is_reproducible_and_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("ce.toml"), COUNTEREXAMPLE).unwrap();
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|d| {
            let o = roughwave(&["counterexample", "--config", "ce.toml", "--out", d, "--jobs", "2"], tmp.path());
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(tmp.path().join(d).join("divergence.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(manifest(&tmp.path().join("a"))["files"], manifest(&tmp.path().join("b"))["files"]);

    let spec = SequenceSpec {
        descriptor: ModulusDescriptor::Psi(Psi::Identity),
        n: 1,
        j_min: 2,
        j_max: 5,
        mode: SequenceMode::Scaled { j0: 4 },
        m_const: 25.0,
    };
    let params = make_sequences(&spec).unwrap();
    let pairs = build_pairs(&params, Cutoff::default(), 0.3).unwrap();
    let omegas = make_counterexample_density(&params, &pairs).unwrap();
    let opts = SweepOptions {
        quasimode: Default::default(),
        points_per_wave: 16.0,
        min_resolution: 1024,
        max_resolution: 1 << 16,
        horizon: None,
    };
    let table = run_counterexample_sweep(&params, &omegas, &[0, 1, 2], &opts).unwrap();
    assert_eq!(String::from_utf8(runs[0].clone()).unwrap(), table.to_csv());
}

#[test]
fn report_aggregates_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    for (kind, dir) in [("simulate", "runs/sim"), ("modulus", "runs/mod")] {
        let o = roughwave(&[kind, "--out", dir, "--resolution", "256"], tmp.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = roughwave(&["report", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("runs/report.json")).unwrap()).unwrap();
    let runs = rep["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let kinds: Vec<&str> = runs.iter().map(|r| r["manifest"]["provenance"]["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["modulus", "simulate"]);
    assert!(runs.iter().all(|r| r["problems"].as_array().unwrap().is_empty()));

    std::fs::write(tmp.path().join("runs/sim/traces.csv"), "tampered").unwrap();
    let o = roughwave(&["report", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_configuration_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "resolutoin = 256\n",
        "resolution = 1000\n",
        "[coefficient]\nfamily = \"constant\"\nvalue = -1.0\n",
        "kind = \"control\"\n",
        "t = [1.0]\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        std::fs::write(tmp.path().join("bad.toml"), text).unwrap();
        let o = roughwave(&["simulate", "--config", "bad.toml", "--out", &format!("o{i}")], tmp.path());
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&roughwave(&["simulate", "--no-such-flag"], tmp.path())), 2);
    assert_eq!(code(&roughwave(&["simulate", "--config", "missing.toml"], tmp.path())), 2);
    // The unscaled conditions fail for n = 1 and hold for n = 8.
    std::fs::write(tmp.path().join("s.toml"), "[sequence]\nn = 1\n").unwrap();
    assert_eq!(code(&roughwave(&["simulate", "--config", "s.toml", "--strict-paper", "--out", "s1"], tmp.path())), 2);
    std::fs::write(tmp.path().join("s.toml"), "[sequence]\nn = 8\nj_max = 6\n").unwrap();
    let o = roughwave(&["simulate", "--config", "s.toml", "--strict-paper", "--resolution", "128", "--out", "s8"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("s8/strict_conditions.csv").exists());
}

#[test]
fn truncated_sweep_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{COUNTEREXAMPLE}[sweep]\nmax_resolution = 1024\n");
    std::fs::write(tmp.path().join("tr.toml"), text).unwrap();
    let o = roughwave(&["counterexample", "--config", "tr.toml", "--out", "tr"], tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let notes = manifest(&tmp.path().join("tr"))["notes"].to_string();
    assert!(notes.contains("truncated"), "{notes}");
}

#[test]
fn json_config_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let json = r#"{"resolution": 128, "t": 1.0, "data": {"type": "bump", "center": 0.5, "width": 0.2}}"#;
    std::fs::write(tmp.path().join("c.json"), json).unwrap();
    let o = roughwave(&["simulate", "--config", "c.json", "--out", "j"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn selftest_passes_and_detects_injected_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let measured = |dir: &str| -> Vec<Value> {
        let v: Value = serde_json::from_slice(&std::fs::read(tmp.path().join(dir).join("selftest.json")).unwrap()).unwrap();
        v["data"].as_array().unwrap().iter().map(|c| c["measured"].clone()).collect()
    };
    for dir in ["a", "b"] {
        let o = roughwave(&["selftest", "--criteria", "2,3,8", "--out", dir], tmp.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 3);
    }
    assert_eq!(measured("a"), measured("b"));
    let o = roughwave(&["selftest", "--criteria", "2,3", "--inject", "2"], tmp.path());
    assert_eq!(code(&o), 4);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().any(|l| l.starts_with("FAIL [ 2]")) && out.lines().any(|l| l.starts_with("PASS [ 3]")), "{out}");
    assert_eq!(code(&roughwave(&["selftest", "--criteria", "12"], tmp.path())), 2);
}
