use std::fs;
use std::path::Path;

use weyl_lab::corpus::{gen_flat_spot, gen_round, gen_spheroid, CorpusSample, FlatnessSpec};
use weyl_lab::io::{self, IoError, SweepConfig};
use weyl_lab::verify::{default_b0, default_delta, Branch, Verdict, VerifierConfig};

fn write_input(dir: &Path, s: &CorpusSample) {
    io::save_topology(&dir.join(io::TOPOLOGY_FILE), &s.mesh).unwrap();
    io::write_json(&dir.join(io::METRIC_FILE), &s.metric).unwrap();
    io::write_json(&dir.join(io::EMBEDDING_FILE), &s.embedding).unwrap();
}

fn sweep(s: &CorpusSample, cfg: &SweepConfig) -> (tempfile::TempDir, Verdict) {
    let root = tempfile::tempdir().unwrap();
    let input = root.path().join("input");
    write_input(&input, s);
    let run = io::run_sweep(&input, &root.path().join("out"), cfg, &[]).unwrap();
    assert!(run.manifest.failure.is_none(), "{:?}", run.manifest.failure);
    let v = run.verdict.unwrap();
    (root, v)
}

#[test]
fn small_flat_pole_blows_up_with_bounded_product() {
    // Scaling lengths by s scales H by 1/s; ε/s² keeps the conformal factor fixed.
    let s = 0.25;
    let sample = gen_flat_spot(4, FlatnessSpec::FlatPole { order: 2 }, s).unwrap();
    let cfg = SweepConfig {
        epsilons: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3].iter().map(|e| e / (s * s)).collect(),
        verifier: VerifierConfig { a0: Some(5.0), ..Default::default() },
        ..Default::default()
    };
    let (_dir, v) = sweep(&sample, &cfg);
    for d in &v.dichotomy {
        assert_eq!(d.branch, Branch::BlowupWithProduct, "eps {}", d.epsilon);
        assert!(d.violations.is_empty());
        assert!(d.max_hk_on_blowup_set <= d.b0_used * 1.05);
    }
    assert!(v.passed(), "{:?}", v.failures);
}

#[test]
fn spheroid_sweep_is_uniform_h() {
    let sample = gen_spheroid(3, 1.0, 2.0).unwrap();
    let (_dir, v) = sweep(&sample, &SweepConfig::default());
    assert_eq!(v.corollary, "uniform_h");
    assert!(v.passed(), "{:?}", v.failures);
}

#[test]
fn b0_and_delta_come_from_the_regularized_metric() {
    let sample = gen_flat_spot(3, FlatnessSpec::FlatPole { order: 2 }, 1.0).unwrap();
    let (dir, v) = sweep(&sample, &SweepConfig::default());
    let loaded = io::load_sweep(&dir.path().join("out")).unwrap();
    for (i, m) in loaded.members.iter().enumerate() {
        assert_eq!(v.dichotomy[i].b0_used, default_b0(&m.intrinsic).unwrap());
        assert_eq!(v.harnack[i].delta_used, default_delta(&m.intrinsic).unwrap());
        // K_intr stored in the report equals the recomputed intrinsic curvature.
        assert_eq!(m.report.k_intr, m.intrinsic.per_vertex_k);
    }
}

#[test]
fn unit_sphere_sweep_plots() {
    let sample = gen_round(3, 1.0).unwrap();
    let (dir, v) = sweep(&sample, &SweepConfig { epsilons: vec![1e-1, 1e-2, 1e-3], ..Default::default() });
    assert!(v.total_curvature.pass);
    let out = dir.path().join("out");
    let scatter = fs::read_to_string(out.join("plots/kappa_scatter.csv")).unwrap();
    for line in scatter.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[2] - 1.0).abs() < 0.03 && (cols[3] - 1.0).abs() < 0.03);
    }
    // The reference curve uses the same C0 as the verdict.
    let c0 = v.rate.last().unwrap().c0_bound;
    let reference = fs::read_to_string(out.join("plots/rate_reference.csv")).unwrap();
    for line in reference.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] - c0 / cols[0].cbrt()).abs() <= 1e-12 * cols[1]);
    }
    let svg = fs::read_to_string(out.join("plots/kappa_scatter.svg")).unwrap();
    let again = weyl_lab::plots::emit_plots(&out).unwrap();
    assert!(!again.is_empty());
    assert_eq!(svg, fs::read_to_string(out.join("plots/kappa_scatter.svg")).unwrap());
}

#[test]
fn verify_is_idempotent_and_detects_tampering() {
    let sample = gen_round(2, 1.0).unwrap();
    let (dir, v) = sweep(&sample, &SweepConfig { epsilons: vec![1e-1, 1e-2, 1e-3], ..Default::default() });
    let out = dir.path().join("out");
    let before = fs::read(out.join(io::VERDICT_FILE)).unwrap();
    let again = io::verify_dir(&out, None).unwrap();
    assert_eq!(again, v);
    assert_eq!(before, fs::read(out.join(io::VERDICT_FILE)).unwrap());

    // A different a0 changes thresholds only, never curvature values.
    let shifted = io::verify_dir(&out, Some(&VerifierConfig { a0: Some(0.5), ..Default::default() })).unwrap();
    assert_eq!(shifted.dichotomy[0].branch, Branch::BlowupWithProduct);
    assert_eq!(shifted.dichotomy[0].max_h, v.dichotomy[0].max_h);
    assert_eq!(shifted.rate[0].c0_fit, v.rate[0].c0_fit);
    assert_eq!(shifted.total_curvature, v.total_curvature);

    let report = out.join("eps_1e-2").join(io::REPORT_FILE);
    let mut text = fs::read_to_string(&report).unwrap();
    text.push('\n');
    fs::write(&report, text).unwrap();
    assert!(matches!(io::verify_dir(&out, None), Err(IoError::HashMismatch { .. })));
}

#[test]
fn rerun_from_manifest_reproduces_verdict() {
    let sample = gen_flat_spot(3, FlatnessSpec::FlatPole { order: 3 }, 1.0).unwrap();
    let (dir, _) = sweep(&sample, &SweepConfig::default());
    let out = dir.path().join("out");
    let rerun = dir.path().join("rerun");
    io::rerun_from_manifest(&out.join(io::MANIFEST_FILE), &rerun, &[]).unwrap();
    assert_eq!(fs::read(out.join(io::VERDICT_FILE)).unwrap(), fs::read(rerun.join(io::VERDICT_FILE)).unwrap());
}

#[test]
fn rerun_rejects_changed_inputs() {
    let sample = gen_round(2, 1.0).unwrap();
    let (dir, _) = sweep(&sample, &SweepConfig { epsilons: vec![1e-1], ..Default::default() });
    let metric = dir.path().join("input").join(io::METRIC_FILE);
    let other = gen_round(2, 1.1).unwrap();
    io::write_json(&metric, &other.metric).unwrap();
    let err = io::rerun_from_manifest(&dir.path().join("out").join(io::MANIFEST_FILE), &dir.path().join("r"), &[]);
    assert!(matches!(err, Err(IoError::HashMismatch { .. })));
}
