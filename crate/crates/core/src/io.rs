//! File schemas, atomic persistence, run manifests, and the sweep driver.
//!
//! Sweep directory layout:
//!
//! ```text
//! <out>/manifest.json
//! <out>/topology.json
//! <out>/eps_<ε>/{metric.json, regularization.json, embedding.json, report.csv}
//! <out>/verdict.json
//! <out>/plots/*
//! ```
//!
//! Floats are written in shortest round-trip form, so reloading a directory
//! reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curvature::{analyze, CurvatureError, CurvatureReport};
use crate::embed::{continuation_sweep, EmbedInit, EmbeddingState, SolverConfig, SweepError};
use crate::mesh::{MeshError, TopologyFile, TriSphere};
use crate::metric::{angle_defect_curvature, AmbientSpec, MetricError, MetricField, RegularizationStep};
use crate::plots;
use crate::verify::{verify_sweep, SweepMember, Verdict, VerifierConfig, VerifyError};

pub const TOOL_NAME: &str = "weyl";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOPOLOGY_FILE: &str = "topology.json";
pub const METRIC_FILE: &str = "metric.json";
pub const EMBEDDING_FILE: &str = "embedding.json";
pub const REGULARIZATION_FILE: &str = "regularization.json";
pub const REPORT_FILE: &str = "report.csv";
pub const VERDICT_FILE: &str = "verdict.json";
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("{path}: hash mismatch (manifest {expected}, file {found})")]
    HashMismatch { path: PathBuf, expected: String, found: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl IoError {
    /// Missing or unreadable input, as opposed to present but malformed data.
    pub fn is_input_error(&self) -> bool {
        matches!(self, IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Writes through a sibling temp file and a rename. Returns the content hash.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<String, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(sha256_hex(bytes))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, IoError> {
    write_atomic(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn load_topology(path: &Path) -> Result<TriSphere, IoError> {
    let file: TopologyFile = read_json(path)?;
    Ok(TriSphere::try_from(file)?)
}

pub fn save_topology(path: &Path, mesh: &TriSphere) -> Result<String, IoError> {
    write_json(path, &TopologyFile::from(mesh))
}

/// Loads a metric and checks it belongs to `mesh`.
pub fn load_metric(path: &Path, mesh: &TriSphere) -> Result<MetricField, IoError> {
    let g: MetricField = read_json(path)?;
    check_metric(&g, mesh, path)?;
    Ok(g)
}

fn check_metric(g: &MetricField, mesh: &TriSphere, path: &Path) -> Result<(), IoError> {
    if g.topology_ref != mesh.topology_hash() {
        return Err(IoError::Schema(format!("{}: topology_ref does not match the topology", path.display())));
    }
    g.validate(mesh)?;
    Ok(())
}

/// Loads an embedding and checks it belongs to `g`.
pub fn load_embedding(path: &Path, mesh: &TriSphere, g: &MetricField) -> Result<EmbeddingState, IoError> {
    let e: EmbeddingState = read_json(path)?;
    if e.metric_ref != g.content_hash() {
        return Err(IoError::Schema(format!("{}: metric_ref does not match the metric", path.display())));
    }
    if e.positions.len() != mesh.vertex_count() {
        return Err(IoError::Schema(format!(
            "{}: {} positions for {} vertices",
            path.display(),
            e.positions.len(),
            mesh.vertex_count()
        )));
    }
    Ok(e)
}

/// Serialized regularization: the lifted metric plus the potential that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationFile {
    pub topology_ref: String,
    pub edge_lengths: Vec<f64>,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    #[serde(rename = "min_K")]
    pub min_k: f64,
    pub amplitude: f64,
    pub tau_deg: f64,
    pub conformal_residual_rms: f64,
    pub discrete_curvature_gap: f64,
}

impl From<&RegularizationStep> for RegularizationFile {
    fn from(s: &RegularizationStep) -> Self {
        RegularizationFile {
            topology_ref: s.regularized_metric.topology_ref.clone(),
            edge_lengths: s.regularized_metric.edge_lengths.clone(),
            epsilon: s.epsilon,
            lambda: s.lambda.clone(),
            min_k: s.min_regularized_k,
            amplitude: s.amplitude,
            tau_deg: s.tau_deg,
            conformal_residual_rms: s.conformal_residual_rms,
            discrete_curvature_gap: s.discrete_curvature_gap,
        }
    }
}

impl RegularizationFile {
    pub fn metric(&self) -> MetricField {
        MetricField { topology_ref: self.topology_ref.clone(), edge_lengths: self.edge_lengths.clone() }
    }
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "vertex_id",
    "epsilon",
    "K_intr",
    "kappa1",
    "kappa2",
    "H",
    "k_sq",
    "W",
    "gauss_residual",
    "area_weight",
    "clamped",
];

pub fn report_csv_bytes(report: &CurvatureReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory CSV");
    for v in 0..report.len() {
        let w_cell = report.w[v].map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            v.to_string(),
            report.epsilon.to_string(),
            report.k_intr[v].to_string(),
            report.kappa1[v].to_string(),
            report.kappa2[v].to_string(),
            report.h[v].to_string(),
            report.k_sq[v].to_string(),
            w_cell,
            report.gauss_residual[v].to_string(),
            report.area_weight[v].to_string(),
            u8::from(report.clamped[v]).to_string(),
        ])
        .expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

pub fn write_report_csv(path: &Path, report: &CurvatureReport) -> Result<String, IoError> {
    write_atomic(path, &report_csv_bytes(report))
}

/// Reads a report CSV. `mean_edge` and `fit_ring` are not stored per row and
/// come from the metric and run configuration.
pub fn read_report_csv(path: &Path, mean_edge: f64, fit_ring: usize) -> Result<CurvatureReport, IoError> {
    let bad = |message: String| IoError::Csv { path: path.to_path_buf(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::Io { path: path.to_path_buf(), source },
        other => bad(format!("{other:?}")),
    })?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(REPORT_COLUMNS.iter().copied()) {
        return Err(IoError::Schema(format!("{}: unexpected report columns", path.display())));
    }
    let mut rep = CurvatureReport {
        epsilon: 0.0,
        fit_ring,
        mean_edge,
        k_intr: vec![],
        kappa1: vec![],
        kappa2: vec![],
        h: vec![],
        k_sq: vec![],
        w: vec![],
        gauss_residual: vec![],
        area_weight: vec![],
        clamped: vec![],
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<f64, IoError> {
            rec[i].parse::<f64>().map_err(|_| bad(format!("row {row}: bad {} value {:?}", REPORT_COLUMNS[i], &rec[i])))
        };
        let id: usize = rec[0].parse().map_err(|_| bad(format!("row {row}: bad vertex_id")))?;
        if id != row {
            return Err(bad(format!("row {row}: vertex_id {id} out of order")));
        }
        rep.epsilon = num(1)?;
        rep.k_intr.push(num(2)?);
        rep.kappa1.push(num(3)?);
        rep.kappa2.push(num(4)?);
        rep.h.push(num(5)?);
        rep.k_sq.push(num(6)?);
        rep.w.push(if rec[7].is_empty() { None } else { Some(num(7)?) });
        rep.gauss_residual.push(num(8)?);
        rep.area_weight.push(num(9)?);
        rep.clamped.push(match &rec[10] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("row {row}: bad clamped flag {other:?}"))),
        });
    }
    Ok(rep)
}

/// Initial embedding for the first ε of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Round,
    Spectral,
    /// The `embedding.json` of the input directory.
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub ambient: AmbientSpec,
    pub tau_deg: Option<f64>,
    pub init: InitKind,
    pub fit_ring: usize,
    pub solver: SolverConfig,
    pub verifier: VerifierConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            ambient: AmbientSpec::Euclidean,
            tau_deg: None,
            init: InitKind::Round,
            fit_ring: 2,
            solver: SolverConfig::default(),
            verifier: VerifierConfig::default(),
        }
    }
}

/// Where a sweep stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub epsilon: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub config: SweepConfig,
    pub input_dir: String,
    /// Input file name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Output path relative to the run directory to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub failure: Option<StageFailure>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn epsilon_dir_name(epsilon: f64) -> String {
    format!("eps_{epsilon:e}")
}

/// Topology, metric, and optional embedding read from a corpus-style directory.
#[derive(Debug, Clone)]
pub struct SweepInput {
    pub mesh: TriSphere,
    pub metric: MetricField,
    pub embedding: Option<EmbeddingState>,
    pub hashes: BTreeMap<String, String>,
}

pub fn load_input_dir(dir: &Path) -> Result<SweepInput, IoError> {
    let mut hashes = BTreeMap::new();
    let topo_path = dir.join(TOPOLOGY_FILE);
    let metric_path = dir.join(METRIC_FILE);
    let emb_path = dir.join(EMBEDDING_FILE);
    hashes.insert(TOPOLOGY_FILE.to_string(), file_sha256(&topo_path)?);
    hashes.insert(METRIC_FILE.to_string(), file_sha256(&metric_path)?);
    let mesh = load_topology(&topo_path)?;
    let metric = load_metric(&metric_path, &mesh)?;
    let embedding = if emb_path.exists() {
        hashes.insert(EMBEDDING_FILE.to_string(), file_sha256(&emb_path)?);
        Some(load_embedding(&emb_path, &mesh, &metric)?)
    } else {
        None
    };
    Ok(SweepInput { mesh, metric, embedding, hashes })
}

/// Result of a sweep run: the verdict when every stage completed.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub manifest: RunManifest,
    pub verdict: Option<Verdict>,
}

/// Runs regularize, embed, and analyze per ε, then the verifier on the reloaded
/// directory, then plots. Partial results are kept when a stage fails.
pub fn run_sweep(
    input_dir: &Path,
    out_dir: &Path,
    cfg: &SweepConfig,
    command_line: &[String],
) -> Result<SweepRun, IoError> {
    cfg.verifier.validate()?;
    let input = load_input_dir(input_dir)?;
    let started = unix_now();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        command_line: command_line.to_vec(),
        config: cfg.clone(),
        input_dir: input_dir.to_string_lossy().into_owned(),
        inputs: input.hashes.clone(),
        started_unix: started,
        finished_unix: started,
        outputs: BTreeMap::new(),
        failure: None,
    };
    let mesh = &input.mesh;
    manifest.outputs.insert(TOPOLOGY_FILE.to_string(), save_topology(&out_dir.join(TOPOLOGY_FILE), mesh)?);

    let init = match cfg.init {
        InitKind::Round => EmbedInit::Round,
        InitKind::Spectral => EmbedInit::Spectral,
        InitKind::Input => match &input.embedding {
            Some(e) => EmbedInit::State(e.clone()),
            None => {
                return Err(IoError::Io {
                    path: input_dir.join(EMBEDDING_FILE),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "init = input needs an embedding"),
                })
            }
        },
    };

    let outcome = match continuation_sweep(
        mesh,
        &input.metric,
        &cfg.epsilons,
        cfg.ambient.k0(),
        cfg.tau_deg,
        &init,
        &cfg.solver,
    ) {
        Ok(o) => o,
        Err(e) => {
            // Only a malformed ε list fails before any stage runs.
            return Err(IoError::Schema(e.to_string()));
        }
    };

    for entry in &outcome.entries {
        let dir_name = epsilon_dir_name(entry.epsilon);
        let dir = out_dir.join(&dir_name);
        let g = &entry.regularization.regularized_metric;
        let rel = |name: &str| format!("{dir_name}/{name}");
        let hash = write_json(&dir.join(METRIC_FILE), g)?;
        manifest.outputs.insert(rel(METRIC_FILE), hash);
        let hash = write_json(&dir.join(REGULARIZATION_FILE), &RegularizationFile::from(&entry.regularization))?;
        manifest.outputs.insert(rel(REGULARIZATION_FILE), hash);
        let hash = write_json(&dir.join(EMBEDDING_FILE), &entry.embedding)?;
        manifest.outputs.insert(rel(EMBEDDING_FILE), hash);
        let intr = angle_defect_curvature(mesh, g)?;
        match analyze(mesh, &intr, &entry.embedding, g.mean_edge_length(), entry.epsilon, cfg.fit_ring, cfg.ambient) {
            Ok(report) => {
                let hash = write_report_csv(&dir.join(REPORT_FILE), &report)?;
                manifest.outputs.insert(rel(REPORT_FILE), hash);
            }
            Err(e) => {
                manifest.failure = Some(curvature_failure(entry.epsilon, &e));
                break;
            }
        }
    }
    if manifest.failure.is_none() {
        manifest.failure = outcome.failure.as_ref().map(sweep_failure);
    }
    manifest.finished_unix = unix_now();
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    if manifest.failure.is_some() {
        return Ok(SweepRun { manifest, verdict: None });
    }

    let verdict = verify_dir(out_dir, None)?;
    let manifest = read_json(&out_dir.join(MANIFEST_FILE))?;
    Ok(SweepRun { manifest, verdict: Some(verdict) })
}

fn sweep_failure(e: &SweepError) -> StageFailure {
    let (stage, epsilon) = match e {
        SweepError::BadEpsilons => ("config", None),
        SweepError::Regularize { epsilon, .. } => ("regularize", Some(*epsilon)),
        SweepError::Embed { epsilon, .. } => ("embed", Some(*epsilon)),
    };
    StageFailure { stage: stage.to_string(), epsilon, message: e.to_string() }
}

fn curvature_failure(epsilon: f64, e: &CurvatureError) -> StageFailure {
    StageFailure { stage: "analyze".to_string(), epsilon: Some(epsilon), message: e.to_string() }
}

/// A sweep directory read back with every stage output hash-checked.
#[derive(Debug, Clone)]
pub struct LoadedSweep {
    pub manifest: RunManifest,
    pub mesh: TriSphere,
    pub members: Vec<SweepMember>,
    /// Regularized metric per member, same order.
    pub metrics: Vec<MetricField>,
}

fn is_stage_output(rel: &str) -> bool {
    rel != VERDICT_FILE && !rel.starts_with(&format!("{PLOTS_DIR}/"))
}

pub fn load_sweep(dir: &Path) -> Result<LoadedSweep, IoError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    for (rel, expected) in manifest.outputs.iter().filter(|(rel, _)| is_stage_output(rel)) {
        let path = dir.join(rel);
        let found = file_sha256(&path)?;
        if &found != expected {
            return Err(IoError::HashMismatch { path, expected: expected.clone(), found });
        }
    }
    let mesh = load_topology(&dir.join(TOPOLOGY_FILE))?;
    let mut members = Vec::new();
    let mut metrics = Vec::new();
    for &eps in &manifest.config.epsilons {
        let name = epsilon_dir_name(eps);
        let report_rel = format!("{name}/{REPORT_FILE}");
        if !manifest.outputs.contains_key(&report_rel) {
            continue;
        }
        let sub = dir.join(&name);
        let g = load_metric(&sub.join(METRIC_FILE), &mesh)?;
        let emb = load_embedding(&sub.join(EMBEDDING_FILE), &mesh, &g)?;
        let report = read_report_csv(&sub.join(REPORT_FILE), g.mean_edge_length(), manifest.config.fit_ring)?;
        if report.len() != mesh.vertex_count() || report.epsilon != eps {
            return Err(IoError::Schema(format!("{}: report does not match its sweep entry", report_rel)));
        }
        let intrinsic = angle_defect_curvature(&mesh, &g)?;
        members.push(SweepMember { epsilon: eps, report, intrinsic, converged: emb.converged });
        metrics.push(g);
    }
    Ok(LoadedSweep { manifest, mesh, members, metrics })
}

/// Re-runs the verifier on a sweep directory, writes `verdict.json` and the
/// plots, and records their hashes in the manifest. `cfg` overrides the
/// manifest's verifier configuration.
pub fn verify_dir(dir: &Path, cfg: Option<&VerifierConfig>) -> Result<Verdict, IoError> {
    let loaded = load_sweep(dir)?;
    let cfg = cfg.unwrap_or(&loaded.manifest.config.verifier);
    let verdict = verify_sweep(&loaded.mesh, &loaded.members, cfg)?;
    let mut manifest = loaded.manifest.clone();
    manifest.outputs.insert(VERDICT_FILE.to_string(), write_json(&dir.join(VERDICT_FILE), &verdict)?);
    manifest.outputs.retain(|rel, _| is_stage_output(rel) || rel == VERDICT_FILE);
    for (rel, hash) in plots::emit_plots_for(&loaded, &verdict, &dir.join(PLOTS_DIR))? {
        manifest.outputs.insert(format!("{PLOTS_DIR}/{rel}"), hash);
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(verdict)
}

/// Re-runs a sweep from a manifest's input directory and configuration after
/// checking the inputs are unchanged.
pub fn rerun_from_manifest(manifest_path: &Path, out_dir: &Path, command_line: &[String]) -> Result<SweepRun, IoError> {
    let manifest: RunManifest = read_json(manifest_path)?;
    let input_dir = PathBuf::from(&manifest.input_dir);
    for (name, expected) in &manifest.inputs {
        let path = input_dir.join(name);
        let found = file_sha256(&path)?;
        if &found != expected {
            return Err(IoError::HashMismatch { path, expected: expected.clone(), found });
        }
    }
    run_sweep(&input_dir, out_dir, &manifest.config, command_line)
}
