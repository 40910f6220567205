use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn weyl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weyl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn corpus_gen_writes_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let r = weyl(&["corpus", "gen", "--family", "spheroid", "--level", "2", "--params", "a=1,c=2", "--out", p(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["topology.json", "metric.json", "embedding.json", "corpus.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let emb = json(&out.join("embedding.json"));
    assert_eq!(emb["residual"], 0.0);
    assert_eq!(emb["converged"], true);
    assert_eq!(json(&out.join("corpus.json"))["certified"], true);
}

#[test]
fn bad_params_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let r = weyl(&["corpus", "gen", "--family", "round", "--params", "radius=-1", "--out", p(&out)]);
    assert_eq!(code(&r), 2);
    let r = weyl(&["corpus", "gen", "--family", "round", "--params", "colour=red", "--out", p(&out)]);
    assert_eq!(code(&r), 2);
    assert!(!out.exists());
}

#[test]
fn stagewise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let reg = dir.path().join("reg");
    let emb = dir.path().join("emb");
    assert_eq!(
        code(&weyl(&["corpus", "gen", "--family", "flatspot", "--level", "3", "--params", "flatness=pole,order=2", "--out", p(&corpus)])),
        0
    );
    assert_eq!(code(&weyl(&["regularize", "--input", p(&corpus), "--epsilon", "0.01", "--out", p(&reg)])), 0);
    let regf = json(&reg.join("regularization.json"));
    assert!(regf["min_K"].as_f64().unwrap() > 0.0);
    assert_eq!(regf["epsilon"], 0.01);

    let r = weyl(&["embed", "--input", p(&reg), "--init", "round", "--bend-schedule", "1e-2,1e-3,0", "--out", p(&emb)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(json(&emb.join("embedding.json"))["residual"].as_f64().unwrap() < 1e-8);

    // Warm start from a file.
    let emb2 = dir.path().join("emb2");
    let init = emb.join("embedding.json");
    assert_eq!(code(&weyl(&["embed", "--input", p(&reg), "--init", "file", "--init-file", p(&init), "--out", p(&emb2)])), 0);

    let report = dir.path().join("report.csv");
    assert_eq!(code(&weyl(&["analyze", "--input", p(&emb), "--epsilon", "0.01", "--out", p(&report)])), 0);
    let text = fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "vertex_id,epsilon,K_intr,kappa1,kappa2,H,k_sq,W,gauss_residual,area_weight,clamped");
    assert_eq!(lines.count(), 642);
}

#[test]
fn embed_rejects_bad_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(code(&weyl(&["corpus", "gen", "--family", "round", "--level", "1", "--out", p(&corpus)])), 0);
    let r = weyl(&["embed", "--input", p(&corpus), "--bend-schedule", "1e-3,1e-2", "--out", p(&dir.path().join("e"))]);
    assert_eq!(code(&r), 2);
}

#[test]
fn sweep_verify_plots_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let sweep = dir.path().join("sweep");
    assert_eq!(code(&weyl(&["corpus", "gen", "--family", "spheroid", "--level", "3", "--out", p(&corpus)])), 0);
    let r = weyl(&["sweep", "--input", p(&corpus), "--out", p(&sweep), "--epsilons", "0.1,0.01,0.001"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for eps in ["eps_1e-1", "eps_1e-2", "eps_1e-3"] {
        for f in ["metric.json", "regularization.json", "embedding.json", "report.csv"] {
            assert!(sweep.join(eps).join(f).exists(), "{eps}/{f}");
        }
    }
    let verdict = json(&sweep.join("verdict.json"));
    assert_eq!(verdict["corollary"], "uniform_h");
    for key in ["epsilons", "dichotomy", "rate", "harnack", "corollary", "total_curvature", "tolerances"] {
        assert!(verdict.get(key).is_some(), "{key}");
    }
    let manifest = json(&sweep.join("manifest.json"));
    assert!(manifest["outputs"]["verdict.json"].is_string());
    assert!(manifest["outputs"]["eps_1e-2/report.csv"].is_string());

    let before = fs::read(sweep.join("verdict.json")).unwrap();
    assert_eq!(code(&weyl(&["verify", "--dir", p(&sweep)])), 0);
    assert_eq!(before, fs::read(sweep.join("verdict.json")).unwrap());

    let rerun = dir.path().join("rerun");
    let manifest_path = sweep.join("manifest.json");
    assert_eq!(code(&weyl(&["sweep", "--from-manifest", p(&manifest_path), "--out", p(&rerun)])), 0);
    assert_eq!(before, fs::read(rerun.join("verdict.json")).unwrap());

    fs::remove_dir_all(sweep.join("plots")).unwrap();
    assert_eq!(code(&weyl(&["plots", "--dir", p(&sweep)])), 0);
    for f in ["max_h.svg", "max_hk.csv", "kappa_scatter.svg", "rate_reference.csv", "total_mean_curvature.csv"] {
        assert!(sweep.join("plots").join(f).exists(), "{f}");
    }

    let report = sweep.join("eps_1e-1").join("report.csv");
    let mut text = fs::read_to_string(&report).unwrap();
    text = text.replacen(",0\n", ",1\n", 1);
    fs::write(&report, text).unwrap();
    assert_eq!(code(&weyl(&["verify", "--dir", p(&sweep)])), 3);
}

#[test]
fn verifier_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let sweep = dir.path().join("sweep");
    assert_eq!(code(&weyl(&["corpus", "gen", "--family", "round", "--level", "2", "--out", p(&corpus)])), 0);
    assert_eq!(code(&weyl(&["sweep", "--input", p(&corpus), "--out", p(&sweep), "--epsilons", "0.1,0.01"])), 0);
    // An absurdly small b0 makes every vertex violate the product bound.
    let cfg = dir.path().join("verifier.json");
    fs::write(&cfg, r#"{"a0": 0.1, "b0_override": 1e-6}"#).unwrap();
    assert_eq!(code(&weyl(&["verify", "--dir", p(&sweep), "--config", p(&cfg)])), 1);
}

#[test]
fn missing_input_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = weyl(&["sweep", "--input", p(&dir.path().join("absent")), "--out", p(&out)]);
    assert_eq!(code(&r), 2);
    assert!(!out.exists());
}

#[test]
fn plots_on_empty_dir_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let r = weyl(&["plots", "--dir", p(dir.path())]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stderr).contains("nothing to plot"));
}
