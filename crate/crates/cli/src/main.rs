//! `weyl`: command-line driver for the regularize, embed, analyze, and verify pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use weyl_lab::corpus::{generate, CorpusError, Family, FlatnessSpec};
use weyl_lab::curvature::analyze;
use weyl_lab::embed::{embed, EmbedError, EmbedInit, EmbeddingState, SolverConfig};
use weyl_lab::io::{
    self, IoError, InitKind, RegularizationFile, SweepConfig, EMBEDDING_FILE, METRIC_FILE, REGULARIZATION_FILE,
    REPORT_FILE, TOPOLOGY_FILE,
};
use weyl_lab::metric::{angle_defect_curvature, regularize, AmbientSpec, MetricError};
use weyl_lab::plots;
use weyl_lab::verify::VerifierConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Code {
    Verifier = 1,
    Input = 2,
    Schema = 3,
    Solver = 4,
}

#[derive(Debug)]
struct Failure {
    code: Code,
    message: String,
}

impl Failure {
    fn new(code: Code, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::Io { .. } => Code::Input,
            IoError::Verify(weyl_lab::verify::VerifyError::InvalidConfig(_)) => Code::Input,
            _ => Code::Schema,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        let code = match e {
            MetricError::SolverFailed(..) | MetricError::NotLifted { .. } => Code::Solver,
            MetricError::NonPositiveEpsilon(_) => Code::Input,
            _ => Code::Schema,
        };
        Failure::new(code, format!("regularize: {e}"))
    }
}

impl From<EmbedError> for Failure {
    fn from(e: EmbedError) -> Self {
        let code = match e {
            EmbedError::InvalidConfig(_) => Code::Input,
            EmbedError::Metric(_) | EmbedError::Mesh(_) | EmbedError::InitSize { .. } => Code::Schema,
            _ => Code::Solver,
        };
        Failure::new(code, format!("embed: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "weyl", version, about = "Regularize, embed, and verify degenerate-elliptic sphere metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate ground-truth surfaces.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Conformally lift a metric at one ε.
    Regularize(RegularizeArgs),
    /// Embed a metric in Euclidean space.
    Embed(EmbedArgs),
    /// Estimate curvatures of an embedding.
    Analyze(AnalyzeArgs),
    /// Run the full pipeline over a list of ε and verify the result.
    Sweep(SweepArgs),
    /// Re-run the verifier on an existing sweep directory.
    Verify(VerifyArgs),
    /// Emit plot data and SVG charts for a verified sweep.
    Plots(PlotsArgs),
}

#[derive(Subcommand, Debug)]
enum CorpusCommand {
    /// Write topology, metric, and exact embedding of a generated surface.
    Gen(CorpusArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FamilyName {
    Round,
    Spheroid,
    Flatspot,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long, value_enum)]
    family: FamilyName,
    #[arg(long, default_value_t = 4)]
    level: u32,
    /// Comma-separated `key=value` pairs: radius; a, c; flatness (pole|circle|none), order, polar_angle, scale.
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RegularizeArgs {
    /// Directory holding topology.json and metric.json.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Width of the degenerate band; defaults to 5% of sup(K − K0).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum InitName {
    Round,
    Spectral,
    File,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Directory holding topology.json and metric.json.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InitName::Round)]
    init: InitName,
    /// Embedding JSON used with `--init file`.
    #[arg(long)]
    init_file: Option<PathBuf>,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Comma-separated, strictly decreasing bending weights.
    #[arg(long)]
    bend_schedule: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Directory holding topology.json, metric.json, and embedding.json.
    #[arg(long)]
    input: PathBuf,
    /// Recorded in the report; read from regularization.json when present.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 2)]
    ring: usize,
    /// Output CSV; defaults to report.csv in the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Directory holding topology.json and metric.json (and embedding.json for `--init input`).
    #[arg(long, required_unless_present = "from_manifest")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long)]
    epsilons: Option<String>,
    /// JSON sweep configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run with the inputs and configuration recorded in a manifest.
    #[arg(long, conflicts_with_all = ["input", "config", "epsilons", "a0", "init"])]
    from_manifest: Option<PathBuf>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<SweepInit>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SweepInit {
    Round,
    Spectral,
    Input,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Sweep directory.
    #[arg(long)]
    dir: PathBuf,
    /// JSON verifier configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    a0: Option<f64>,
    #[arg(long)]
    tau_k1: Option<f64>,
}

#[derive(Args, Debug)]
struct PlotsArgs {
    /// Sweep directory.
    #[arg(long)]
    dir: PathBuf,
}

fn parse_params(s: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Failure::new(Code::Input, format!("parameter {pair:?} is not key=value")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn take_f64(params: &mut BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, Failure> {
    match params.remove(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| Failure::new(Code::Input, format!("parameter {key}={v:?} is not a number"))),
    }
}

fn family_from(name: FamilyName, params: &str) -> Result<Family, Failure> {
    let mut p = parse_params(params)?;
    let family = match name {
        FamilyName::Round => Family::Round { radius: take_f64(&mut p, "radius", 1.0)? },
        FamilyName::Spheroid => Family::Spheroid { a: take_f64(&mut p, "a", 1.0)?, c: take_f64(&mut p, "c", 2.0)? },
        FamilyName::Flatspot => {
            let kind = p.remove("flatness").unwrap_or_else(|| "pole".to_string());
            let flatness = match kind.as_str() {
                "pole" => {
                    let order = take_f64(&mut p, "order", 2.0)?;
                    if order.fract() != 0.0 || order < 1.0 {
                        return Err(Failure::new(Code::Input, format!("order {order} is not a positive integer")));
                    }
                    FlatnessSpec::FlatPole { order: order as u32 }
                }
                "circle" => FlatnessSpec::FlatCircle {
                    polar_angle: take_f64(&mut p, "polar_angle", std::f64::consts::FRAC_PI_2)?,
                },
                "none" => FlatnessSpec::None,
                other => return Err(Failure::new(Code::Input, format!("unknown flatness {other:?}"))),
            };
            Family::Flatspot { flatness, scale: take_f64(&mut p, "scale", 1.0)? }
        }
    };
    if let Some(k) = p.keys().next() {
        return Err(Failure::new(Code::Input, format!("unknown parameter {k:?} for this family")));
    }
    Ok(family)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Failure::new(Code::Input, format!("{what}: {t:?} is not a number"))))
        .collect()
}

fn cmd_corpus(args: &CorpusArgs) -> CmdResult {
    let family = family_from(args.family, &args.params)?;
    let sample = generate(&family, args.level).map_err(|e| match e {
        CorpusError::InvalidParameter(_) | CorpusError::Mesh(_) => Failure::new(Code::Input, e.to_string()),
        CorpusError::Metric(_) => Failure::new(Code::Schema, e.to_string()),
    })?;
    io::save_topology(&args.out.join(TOPOLOGY_FILE), &sample.mesh)?;
    io::write_json(&args.out.join(METRIC_FILE), &sample.metric)?;
    io::write_json(&args.out.join(EMBEDDING_FILE), &sample.embedding)?;
    let summary = serde_json::json!({
        "family": family,
        "level": args.level,
        "certified": sample.certified,
        "zero_set": sample.zero_set,
        "sup_K": sample.intrinsic.sup_k(),
        "min_K": sample.intrinsic.min_k(),
    });
    io::write_json(&args.out.join("corpus.json"), &summary)?;
    log::info!("wrote {} vertices to {}", sample.mesh.vertex_count(), args.out.display());
    Ok(())
}

fn cmd_regularize(args: &RegularizeArgs) -> CmdResult {
    let mesh = io::load_topology(&args.input.join(TOPOLOGY_FILE))?;
    let g = io::load_metric(&args.input.join(METRIC_FILE), &mesh)?;
    let step = regularize(&mesh, &g, args.epsilon, AmbientSpec::Euclidean.k0(), args.tau)?;
    io::save_topology(&args.out.join(TOPOLOGY_FILE), &mesh)?;
    io::write_json(&args.out.join(METRIC_FILE), &step.regularized_metric)?;
    io::write_json(&args.out.join(REGULARIZATION_FILE), &RegularizationFile::from(&step))?;
    log::info!("epsilon {}: min K {:e}, amplitude {}", step.epsilon, step.min_regularized_k, step.amplitude);
    Ok(())
}

fn cmd_embed(args: &EmbedArgs) -> CmdResult {
    let mesh = io::load_topology(&args.input.join(TOPOLOGY_FILE))?;
    let g = io::load_metric(&args.input.join(METRIC_FILE), &mesh)?;
    let mut cfg = SolverConfig::default();
    if let Some(t) = args.tol {
        cfg.residual_tol = t;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iterations = m;
    }
    if let Some(s) = &args.bend_schedule {
        cfg.bending_weight_schedule = parse_list(s, "bend schedule")?;
    }
    let init = match args.init {
        InitName::Round => EmbedInit::Round,
        InitName::Spectral => EmbedInit::Spectral,
        InitName::File => {
            let path = args
                .init_file
                .as_ref()
                .ok_or_else(|| Failure::new(Code::Input, "--init file needs --init-file"))?;
            let state: EmbeddingState = io::read_json(path)?;
            EmbedInit::State(state)
        }
    };
    let result = embed(&mesh, &g, &init, &cfg)?;
    io::save_topology(&args.out.join(TOPOLOGY_FILE), &mesh)?;
    io::write_json(&args.out.join(METRIC_FILE), &g)?;
    io::write_json(&args.out.join(EMBEDDING_FILE), &result)?;
    log::info!("residual {:e} after {} iterations", result.residual, result.iterations);
    if !result.converged {
        return Err(Failure::new(
            Code::Solver,
            format!("embed: not converged (residual {:e}); best state written", result.residual),
        ));
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> CmdResult {
    let mesh = io::load_topology(&args.input.join(TOPOLOGY_FILE))?;
    let g = io::load_metric(&args.input.join(METRIC_FILE), &mesh)?;
    let emb = io::load_embedding(&args.input.join(EMBEDDING_FILE), &mesh, &g)?;
    let reg_path = args.input.join(REGULARIZATION_FILE);
    let epsilon = match args.epsilon {
        Some(e) => e,
        None if reg_path.exists() => io::read_json::<RegularizationFile>(&reg_path)?.epsilon,
        None => 0.0,
    };
    let intr = angle_defect_curvature(&mesh, &g)?;
    let report = analyze(&mesh, &intr, &emb, g.mean_edge_length(), epsilon, args.ring, AmbientSpec::Euclidean)
        .map_err(|e| Failure::new(Code::Solver, format!("analyze: {e}")))?;
    let out = args.out.clone().unwrap_or_else(|| args.input.join(REPORT_FILE));
    io::write_report_csv(&out, &report)?;
    log::info!("max H {}, {} clamped vertices", report.max_h(), report.clamped_count());
    Ok(())
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    Ok(io::read_json(path)?)
}

fn finish_sweep(run: io::SweepRun) -> CmdResult {
    if let Some(f) = &run.manifest.failure {
        let eps = f.epsilon.map(|e| format!(" at epsilon {e}")).unwrap_or_default();
        return Err(Failure::new(Code::Solver, format!("{} failed{eps}: {}", f.stage, f.message)));
    }
    verdict_outcome(run.verdict.as_ref().expect("complete sweep has a verdict"))
}

fn verdict_outcome(v: &weyl_lab::verify::Verdict) -> CmdResult {
    log::info!("corollary: {}", v.corollary);
    if v.passed() {
        Ok(())
    } else {
        Err(Failure::new(Code::Verifier, format!("verifier failures: {}", v.failures.join(", "))))
    }
}

fn cmd_sweep(args: &SweepArgs, argv: &[String]) -> CmdResult {
    if let Some(m) = &args.from_manifest {
        return finish_sweep(io::rerun_from_manifest(m, &args.out, argv)?);
    }
    let input = args.input.as_ref().expect("clap requires --input without --from-manifest");
    let mut cfg: SweepConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => SweepConfig::default(),
    };
    if let Some(e) = &args.epsilons {
        cfg.epsilons = parse_list(e, "epsilons")?;
    }
    if let Some(a0) = args.a0 {
        cfg.verifier.a0 = Some(a0);
    }
    if let Some(init) = args.init {
        cfg.init = match init {
            SweepInit::Round => InitKind::Round,
            SweepInit::Spectral => InitKind::Spectral,
            SweepInit::Input => InitKind::Input,
        };
    }
    if cfg.epsilons.iter().any(|&e| !(e > 0.0)) || cfg.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Failure::new(Code::Input, "epsilons must be positive and strictly decreasing"));
    }
    cfg.solver.validate().map_err(Failure::from)?;
    // Check the input before creating any output.
    io::load_input_dir(input)?;
    finish_sweep(io::run_sweep(input, &args.out, &cfg, argv)?)
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let manifest: io::RunManifest = io::read_json(&args.dir.join(io::MANIFEST_FILE))?;
    let mut cfg: VerifierConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => manifest.config.verifier.clone(),
    };
    if let Some(a0) = args.a0 {
        cfg.a0 = Some(a0);
    }
    if let Some(t) = args.tau_k1 {
        cfg.tau_k1 = Some(t);
    }
    let verdict = io::verify_dir(&args.dir, Some(&cfg))?;
    verdict_outcome(&verdict)
}

fn cmd_plots(args: &PlotsArgs) -> CmdResult {
    let written = plots::emit_plots(&args.dir)?;
    log::info!("wrote {} plot files", written.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Corpus(CorpusCommand::Gen(a)) => cmd_corpus(a),
        Command::Regularize(a) => cmd_regularize(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a, &argv),
        Command::Verify(a) => cmd_verify(a),
        Command::Plots(a) => cmd_plots(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
