//! Consistency checks of the curvature estimates along an ε-family of
//! embeddings: the mean-curvature dichotomy, the κ₂ blowup rate, a Harnack
//! ratio on the degenerate set, the corollary classification, and uniform
//! boundedness of total mean curvature.
//!
//! These are empirical tests on discrete data. They cannot certify the
//! analytic estimates, only fail to contradict them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{total_mean_curvature, CurvatureReport};
use crate::mesh::{build_patches, PatchCover, TriSphere};
use crate::metric::IntrinsicCurvature;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("sup K = {0} is not positive")]
    NonPositiveCurvature(f64),
    #[error("invalid verifier config: {0}")]
    InvalidConfig(String),
    #[error("corollary needs at least 3 epsilon values, got {0}")]
    TooFewEpsilons(usize),
    #[error("report for epsilon {epsilon} has {found} vertices, mesh has {expected}")]
    SizeMismatch { epsilon: f64, expected: usize, found: usize },
}

/// Verifier thresholds. Unset values are derived per ε from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// Mean-curvature split level; default `4·(1 + sup k)`.
    pub a0: Option<f64>,
    /// κ₁ exclusion floor; default `1e-3 / mean_edge`.
    pub tau_k1: Option<f64>,
    pub patch_hops: usize,
    pub delta_override: Option<f64>,
    pub b0_override: Option<f64>,
    /// Relative slack on every inequality.
    pub tolerance: f64,
    /// Extra split levels tested, as multiples of `a0`.
    pub a_multipliers: Vec<f64>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            a0: None,
            tau_k1: None,
            patch_hops: 2,
            delta_override: None,
            b0_override: None,
            tolerance: 0.05,
            a_multipliers: vec![1.0, 2.0, 4.0],
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |what: &str| Err(VerifyError::InvalidConfig(what.to_string()));
        let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0 && x.is_finite());
        if !positive(self.a0) {
            return bad("a0 must be positive");
        }
        if !positive(self.tau_k1) {
            return bad("tau_k1 must be positive");
        }
        if !positive(self.delta_override) || !positive(self.b0_override) {
            return bad("overrides must be positive");
        }
        if self.patch_hops == 0 {
            return bad("patch_hops must be at least 1");
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be non-negative");
        }
        if self.a_multipliers.iter().any(|&m| !(m >= 1.0 && m.is_finite())) {
            return bad("a multipliers must be at least 1");
        }
        Ok(())
    }

    pub fn resolve_a0(&self, intr: &IntrinsicCurvature) -> f64 {
        self.a0.unwrap_or_else(|| 4.0 * (1.0 + sup_k(intr)))
    }

    pub fn resolve_tau_k1(&self, report: &CurvatureReport) -> f64 {
        self.tau_k1.unwrap_or(1e-3 / report.mean_edge)
    }
}

fn sup_pos_k(intr: &IntrinsicCurvature) -> f64 {
    intr.per_vertex_k.iter().fold(0.0f64, |m, &k| m.max(k))
}

/// `sup k = √(sup max(K, 0))`.
pub fn sup_k(intr: &IntrinsicCurvature) -> f64 {
    sup_pos_k(intr).sqrt()
}

/// `b₀ = 9 (sup k)⁴ = 9 (sup K)²`.
pub fn default_b0(intr: &IntrinsicCurvature) -> Result<f64, VerifyError> {
    let s = sup_pos_k(intr);
    if !(s > 0.0) {
        return Err(VerifyError::NonPositiveCurvature(s));
    }
    Ok(9.0 * s * s)
}

/// `δ = 1 / (8 (sup k)⁴)`.
pub fn default_delta(intr: &IntrinsicCurvature) -> Result<f64, VerifyError> {
    let s = sup_pos_k(intr);
    if !(s > 0.0) {
        return Err(VerifyError::NonPositiveCurvature(s));
    }
    Ok(1.0 / (8.0 * s * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    BoundedH,
    BlowupWithProduct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductViolation {
    pub vertex: usize,
    pub h: f64,
    pub k: f64,
    pub hk: f64,
}

/// Product bound tested on `{H > a}` for one split level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub a: f64,
    pub branch: Branch,
    pub blowup_count: usize,
    pub max_hk: f64,
    pub violation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyVerdict {
    pub epsilon: f64,
    pub a0: f64,
    pub branch: Branch,
    pub max_h: f64,
    /// Zero when the branch is `BoundedH`.
    pub max_hk_on_blowup_set: f64,
    pub b0_used: f64,
    pub violations: Vec<ProductViolation>,
    /// Checks at `a0 · multiplier` for each configured multiplier.
    pub range: Vec<ThresholdCheck>,
    /// The product bound over every vertex, a superset of every blowup set.
    pub all_vertices: ThresholdCheck,
}

fn threshold_check(report: &CurvatureReport, a: f64, bound: f64) -> (ThresholdCheck, Vec<ProductViolation>) {
    let max_h = report.max_h();
    let branch = if max_h <= a { Branch::BoundedH } else { Branch::BlowupWithProduct };
    let mut blowup_count = 0;
    let mut max_hk = 0.0f64;
    let mut violations = Vec::new();
    if branch == Branch::BlowupWithProduct {
        for v in 0..report.len() {
            let h = report.h[v];
            if h > a {
                blowup_count += 1;
                let k = report.k(v);
                let hk = h * k;
                max_hk = max_hk.max(hk);
                if hk > bound {
                    violations.push(ProductViolation { vertex: v, h, k, hk });
                }
            }
        }
        assert!(blowup_count > 0, "blowup branch with empty blowup set");
    }
    let check = ThresholdCheck { a, branch, blowup_count, max_hk, violation_count: violations.len() };
    (check, violations)
}

pub fn dichotomy_check(
    report: &CurvatureReport,
    intr: &IntrinsicCurvature,
    cfg: &VerifierConfig,
) -> Result<DichotomyVerdict, VerifyError> {
    let b0 = match cfg.b0_override {
        Some(b) => b,
        None => default_b0(intr)?,
    };
    let a0 = cfg.resolve_a0(intr);
    let bound = b0 * (1.0 + cfg.tolerance);
    let (main, violations) = threshold_check(report, a0, bound);
    let range = cfg.a_multipliers.iter().map(|&m| threshold_check(report, a0 * m, bound).0).collect();
    let all_vertices = threshold_check(report, 0.0, bound).0;
    Ok(DichotomyVerdict {
        epsilon: report.epsilon,
        a0,
        branch: main.branch,
        max_h: report.max_h(),
        max_hk_on_blowup_set: main.max_hk,
        b0_used: b0,
        violations,
        range,
        all_vertices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVerdict {
    pub epsilon: f64,
    pub tau_k1: f64,
    /// `max κ₂ ∛κ₁` over included vertices; zero when none are included.
    pub c0_fit: f64,
    /// `∛(4 b₀²)`.
    pub c0_bound: f64,
    /// `max(c0_bound, ∛4 · a0)`, the constant the pass test uses.
    pub c0_limit: f64,
    pub included_count: usize,
    pub excluded_count: usize,
    pub vacuous: bool,
    pub pass: bool,
}

pub fn c0_bound(b0: f64) -> f64 {
    (4.0 * b0 * b0).cbrt()
}

pub fn rate_check(report: &CurvatureReport, b0: f64, a0: f64, cfg: &VerifierConfig) -> RateVerdict {
    let tau = cfg.resolve_tau_k1(report);
    let mut c0_fit = 0.0f64;
    let mut included = 0;
    for v in 0..report.len() {
        let k1 = report.kappa1[v];
        if k1 > tau {
            included += 1;
            c0_fit = c0_fit.max(report.kappa2[v] * k1.cbrt());
        }
    }
    let bound = c0_bound(b0);
    let limit = bound.max(4f64.cbrt() * a0);
    RateVerdict {
        epsilon: report.epsilon,
        tau_k1: tau,
        c0_fit,
        c0_bound: bound,
        c0_limit: limit,
        included_count: included,
        excluded_count: report.len() - included,
        vacuous: included == 0,
        pass: c0_fit <= limit * (1.0 + cfg.tolerance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRatio {
    pub patch: usize,
    pub d0_count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub epsilon: f64,
    pub delta_used: f64,
    pub d0_vertices: Vec<usize>,
    pub patch_ratios: Vec<PatchRatio>,
    pub skipped_patches: usize,
    pub inf_ratio: Option<f64>,
    pub d0_empty: bool,
    /// D₀ vertices where `1 − 4k²W² > 1/2` fails.
    pub certification_violations: Vec<usize>,
}

pub fn harnack_check(
    report: &CurvatureReport,
    intr: &IntrinsicCurvature,
    patches: &PatchCover,
    cfg: &VerifierConfig,
) -> Result<HarnackReport, VerifyError> {
    let delta = match cfg.delta_override {
        Some(d) => d,
        None => default_delta(intr)?,
    };
    let n = report.len();
    let mut in_d0 = vec![false; n];
    let mut d0_vertices = Vec::new();
    let mut certification_violations = Vec::new();
    for v in 0..n {
        if let Some(w) = report.w[v] {
            let k = report.k(v);
            if w < delta * k {
                in_d0[v] = true;
                d0_vertices.push(v);
                if !(1.0 - 4.0 * k * k * w * w > 0.5) {
                    certification_violations.push(v);
                }
            }
        }
    }
    let mut patch_ratios = Vec::new();
    let mut skipped = 0;
    for (p, patch) in patches.patches.iter().enumerate() {
        let ws: Vec<f64> = patch.iter().filter(|&&v| in_d0[v]).filter_map(|&v| report.w[v]).collect();
        if ws.is_empty() {
            continue;
        }
        if ws.len() < 4 {
            skipped += 1;
            continue;
        }
        let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        patch_ratios.push(PatchRatio { patch: p, d0_count: ws.len(), ratio: lo / hi });
    }
    let inf_ratio = patch_ratios.iter().map(|r| r.ratio).reduce(f64::min);
    Ok(HarnackReport {
        epsilon: report.epsilon,
        delta_used: delta,
        d0_empty: d0_vertices.is_empty(),
        d0_vertices,
        patch_ratios,
        skipped_patches: skipped,
        inf_ratio,
        certification_violations,
    })
}

/// One member of an ε-family, as needed by the sweep-level checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMember {
    pub epsilon: f64,
    pub report: CurvatureReport,
    pub intrinsic: IntrinsicCurvature,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorollaryClass {
    UniformH,
    ProductDiverges,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryTracePoint {
    pub epsilon: f64,
    pub max_h: f64,
    pub argmax_vertex: usize,
    /// `κ₂ ∛κ₁` at the argmax-H vertex, with `κ₁` clamped at zero.
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryVerdict {
    pub class: CorollaryClass,
    /// Max/min of `max H` over the three smallest ε.
    pub h_spread: f64,
    /// Ordered by decreasing ε.
    pub trace: Vec<CorollaryTracePoint>,
}

fn by_decreasing_epsilon(members: &[SweepMember]) -> Vec<&SweepMember> {
    let mut sorted: Vec<&SweepMember> = members.iter().collect();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    sorted
}

pub fn corollary_classify(members: &[SweepMember]) -> Result<CorollaryVerdict, VerifyError> {
    if members.len() < 3 {
        return Err(VerifyError::TooFewEpsilons(members.len()));
    }
    let sorted = by_decreasing_epsilon(members);
    let trace: Vec<CorollaryTracePoint> = sorted
        .iter()
        .map(|m| {
            let r = &m.report;
            // First index attaining the max, so ties resolve independently of iteration tricks.
            let mut arg = 0;
            for v in 1..r.len() {
                if r.h[v] > r.h[arg] {
                    arg = v;
                }
            }
            CorollaryTracePoint {
                epsilon: m.epsilon,
                max_h: r.h[arg],
                argmax_vertex: arg,
                product: r.kappa2[arg] * r.kappa1[arg].max(0.0).cbrt(),
            }
        })
        .collect();
    let tail = &trace[trace.len() - 3..];
    let hi = tail.iter().map(|t| t.max_h).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|t| t.max_h).fold(f64::INFINITY, f64::min);
    let h_spread = hi / lo;
    let class = if h_spread <= 1.10 {
        CorollaryClass::UniformH
    } else {
        let increasing = trace.windows(2).all(|w| w[1].product > w[0].product);
        let growth = trace[trace.len() - 1].product / trace[0].product;
        if increasing && growth >= 2.0 {
            CorollaryClass::ProductDiverges
        } else {
            CorollaryClass::Neither
        }
    };
    Ok(CorollaryVerdict { class, h_spread, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalCurvatureVerdict {
    pub pass: bool,
    /// `(ε, ∫H dA)` ordered by decreasing ε.
    pub trace: Vec<(f64, f64)>,
    pub max_over_min: f64,
    pub unconverged: Vec<f64>,
    pub tag: Option<String>,
}

pub fn total_curvature_check(members: &[SweepMember]) -> TotalCurvatureVerdict {
    let sorted = by_decreasing_epsilon(members);
    let trace: Vec<(f64, f64)> = sorted.iter().map(|m| (m.epsilon, total_mean_curvature(&m.report))).collect();
    let unconverged: Vec<f64> = sorted.iter().filter(|m| !m.converged).map(|m| m.epsilon).collect();
    let hi = trace.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let max_over_min = if trace.is_empty() { 1.0 } else { hi / lo };
    let tag = if !unconverged.is_empty() {
        Some("unconverged_member".to_string())
    } else if !(lo > 0.0) && !trace.is_empty() {
        Some("nonpositive_total".to_string())
    } else {
        None
    };
    let pass = tag.is_none() && max_over_min <= 1.25;
    TotalCurvatureVerdict { pass, trace, max_over_min, unconverged, tag }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub relative: f64,
    pub patch_hops: usize,
    pub a_multipliers: Vec<f64>,
    pub a0_override: Option<f64>,
    pub tau_k1_override: Option<f64>,
    pub delta_override: Option<f64>,
    pub b0_override: Option<f64>,
    pub corollary_uniform_spread: f64,
    pub corollary_divergence_factor: f64,
    pub total_curvature_ratio: f64,
}

/// Everything the verifier concludes about one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub epsilons: Vec<f64>,
    pub dichotomy: Vec<DichotomyVerdict>,
    pub rate: Vec<RateVerdict>,
    pub harnack: Vec<HarnackReport>,
    /// `uniform_h`, `product_diverges`, `neither`, or `insufficient_epsilons`.
    pub corollary: String,
    pub corollary_detail: Option<CorollaryVerdict>,
    pub total_curvature: TotalCurvatureVerdict,
    pub tolerances: Tolerances,
    /// Names of the failed property checks; empty on success.
    pub failures: Vec<String>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every check. Members are reported in decreasing ε.
pub fn verify_sweep(
    mesh: &TriSphere,
    members: &[SweepMember],
    cfg: &VerifierConfig,
) -> Result<Verdict, VerifyError> {
    cfg.validate()?;
    for m in members {
        let n = m.report.len();
        if n != mesh.vertex_count() || m.intrinsic.per_vertex_k.len() != mesh.vertex_count() {
            return Err(VerifyError::SizeMismatch { epsilon: m.epsilon, expected: mesh.vertex_count(), found: n });
        }
    }
    let sorted: Vec<SweepMember> = by_decreasing_epsilon(members).into_iter().cloned().collect();
    let patches = build_patches(mesh, cfg.patch_hops);

    type PerEps = (DichotomyVerdict, RateVerdict, HarnackReport);
    let per_eps: Vec<PerEps> = sorted
        .par_iter()
        .map(|m| -> Result<PerEps, VerifyError> {
            let d = dichotomy_check(&m.report, &m.intrinsic, cfg)?;
            let r = rate_check(&m.report, d.b0_used, d.a0, cfg);
            let h = harnack_check(&m.report, &m.intrinsic, &patches, cfg)?;
            Ok((d, r, h))
        })
        .collect::<Result<_, _>>()?;
    let mut dichotomy = Vec::with_capacity(per_eps.len());
    let mut rate = Vec::with_capacity(per_eps.len());
    let mut harnack = Vec::with_capacity(per_eps.len());
    for (d, r, h) in per_eps {
        dichotomy.push(d);
        rate.push(r);
        harnack.push(h);
    }

    let (corollary, corollary_detail) = match corollary_classify(&sorted) {
        Ok(c) => {
            let name = serde_json::to_value(c.class).ok().and_then(|v| v.as_str().map(str::to_string));
            (name.unwrap_or_default(), Some(c))
        }
        Err(VerifyError::TooFewEpsilons(_)) => ("insufficient_epsilons".to_string(), None),
        Err(e) => return Err(e),
    };
    let total_curvature = total_curvature_check(&sorted);

    let mut failures = Vec::new();
    for d in &dichotomy {
        if !d.violations.is_empty() {
            failures.push(format!("dichotomy@{}", d.epsilon));
        }
    }
    for r in &rate {
        if !r.pass {
            failures.push(format!("rate@{}", r.epsilon));
        }
    }
    for h in &harnack {
        if h.inf_ratio.is_some_and(|r| !(r > 0.0)) {
            failures.push(format!("harnack@{}", h.epsilon));
        }
    }
    if let (Some(first), Some(last)) = (
        harnack.first().and_then(|h| h.inf_ratio),
        harnack.last().and_then(|h| h.inf_ratio),
    ) {
        if harnack.len() > 1 && last < 0.5 * first {
            failures.push("harnack_stability".to_string());
        }
    }
    if !total_curvature.pass {
        failures.push("total_curvature".to_string());
    }

    Ok(Verdict {
        epsilons: sorted.iter().map(|m| m.epsilon).collect(),
        dichotomy,
        rate,
        harnack,
        corollary,
        corollary_detail,
        total_curvature,
        tolerances: Tolerances {
            relative: cfg.tolerance,
            patch_hops: cfg.patch_hops,
            a_multipliers: cfg.a_multipliers.clone(),
            a0_override: cfg.a0,
            tau_k1_override: cfg.tau_k1,
            delta_override: cfg.delta_override,
            b0_override: cfg.b0_override,
            corollary_uniform_spread: 1.10,
            corollary_divergence_factor: 2.0,
            total_curvature_ratio: 1.25,
        },
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_round, gen_spheroid};
    use crate::curvature::analyze;
    use crate::metric::{angle_defect_curvature, AmbientSpec};

    fn intr_with(ks: &[f64]) -> IntrinsicCurvature {
        IntrinsicCurvature {
            per_vertex_k: ks.to_vec(),
            per_vertex_area: vec![1.0; ks.len()],
            angle_defects: ks.to_vec(),
        }
    }

    fn report_from(k1: &[f64], k2: &[f64]) -> CurvatureReport {
        let n = k1.len();
        let h: Vec<f64> = k1.iter().zip(k2).map(|(a, b)| 0.5 * (a + b)).collect();
        let k_sq: Vec<f64> = k1.iter().zip(k2).map(|(a, b)| (a * b).max(0.0)).collect();
        CurvatureReport {
            epsilon: 0.1,
            fit_ring: 2,
            mean_edge: 0.1,
            k_intr: k_sq.clone(),
            kappa1: k1.to_vec(),
            kappa2: k2.to_vec(),
            w: h.iter().map(|&x| (x > 0.0).then(|| 1.0 / x)).collect(),
            h,
            k_sq,
            gauss_residual: vec![0.0; n],
            area_weight: vec![1.0; n],
            clamped: vec![false; n],
        }
    }

    #[test]
    fn b0_and_delta_formulas() {
        assert_eq!(default_b0(&intr_with(&[0.5, 1.0])).unwrap(), 9.0);
        assert_eq!(default_b0(&intr_with(&[4.0, 1.0])).unwrap(), 144.0);
        assert_eq!(default_b0(&intr_with(&[0.0, -1.0])), Err(VerifyError::NonPositiveCurvature(0.0)));
        assert_eq!(default_delta(&intr_with(&[1.0])).unwrap(), 0.125);
        // sup k = 2 means sup K = 4.
        assert_eq!(default_delta(&intr_with(&[4.0, 0.3])).unwrap(), 1.0 / 128.0);
    }

    #[test]
    fn unit_sphere_is_bounded_branch() {
        let rep = report_from(&[1.0; 6], &[1.0; 6]);
        let intr = intr_with(&[1.0; 6]);
        let cfg = VerifierConfig { a0: Some(2.0), ..Default::default() };
        let d = dichotomy_check(&rep, &intr, &cfg).unwrap();
        assert_eq!(d.branch, Branch::BoundedH);
        assert!(d.violations.is_empty());
        assert_eq!(d.max_hk_on_blowup_set, 0.0);
        assert_eq!(d.all_vertices.blowup_count, 6);
        assert_eq!(d.all_vertices.max_hk, 1.0);
    }

    #[test]
    fn blowup_branch_lists_violations() {
        let rep = report_from(&[1.0, 1.0, 0.5], &[1.0, 30.0, 30.0]);
        let intr = intr_with(&[1.0, 1.0, 1.0]);
        let cfg = VerifierConfig { a0: Some(5.0), b0_override: Some(10.0), ..Default::default() };
        let d = dichotomy_check(&rep, &intr, &cfg).unwrap();
        assert_eq!(d.branch, Branch::BlowupWithProduct);
        // H·k at vertex 1 is 15.5·√30 > 10.5; at vertex 2 it is 15.25·√15.
        assert_eq!(d.violations.iter().map(|v| v.vertex).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(d.range.len(), 3);
        assert_eq!(d.range[2].a, 20.0);
        assert_eq!(d.range[2].branch, Branch::BoundedH);
    }

    #[test]
    fn rate_on_unit_sphere_and_exclusion() {
        let rep = report_from(&[1.0; 4], &[1.0; 4]);
        let cfg = VerifierConfig::default();
        let r = rate_check(&rep, 9.0, 8.0, &cfg);
        assert_eq!(r.c0_fit, 1.0);
        assert!((r.c0_bound - 324f64.cbrt()).abs() < 1e-12);
        assert!(r.pass && !r.vacuous);
        let strict = VerifierConfig { tau_k1: Some(2.0), ..Default::default() };
        let r = rate_check(&rep, 9.0, 8.0, &strict);
        assert!(r.vacuous && r.pass);
        assert_eq!(r.excluded_count, 4);
    }

    #[test]
    fn rate_bound_arithmetic() {
        // κ₁ = 0.01 with b0 = 9: κ₂ may reach (4·81/0.01)^{1/3} ≈ 31.9.
        let limit = c0_bound(9.0) / 0.01f64.cbrt();
        assert!((limit - 32400f64.cbrt()).abs() < 1e-9);
        let cfg = VerifierConfig { tau_k1: Some(1e-3), ..Default::default() };
        let ok = report_from(&[0.01], &[33.0]);
        assert!(rate_check(&ok, 9.0, 1.0, &cfg).pass);
        let bad = report_from(&[0.01], &[34.0]);
        assert!(!rate_check(&bad, 9.0, 1.0, &cfg).pass);
    }

    #[test]
    fn raising_tau_never_increases_fit() {
        let rep = report_from(&[0.1, 0.5, 1.0, 2.0], &[5.0, 3.0, 2.0, 2.5]);
        let mut last = f64::INFINITY;
        for tau in [0.01, 0.2, 0.7, 1.5, 3.0] {
            let cfg = VerifierConfig { tau_k1: Some(tau), ..Default::default() };
            let fit = rate_check(&rep, 9.0, 1.0, &cfg).c0_fit;
            assert!(fit <= last);
            last = fit;
        }
    }

    #[test]
    fn unit_sphere_has_empty_d0() {
        let s = gen_round(2, 1.0).unwrap();
        let n = s.mesh.vertex_count();
        let rep = report_from(&vec![1.0; n], &vec![1.0; n]);
        let intr = intr_with(&vec![1.0; n]);
        let patches = build_patches(&s.mesh, 2);
        let h = harnack_check(&rep, &intr, &patches, &VerifierConfig::default()).unwrap();
        assert_eq!(h.delta_used, 0.125);
        assert!(h.d0_empty && h.inf_ratio.is_none());
    }

    #[test]
    fn constant_w_on_d0_gives_unit_ratios() {
        let s = gen_round(2, 1.0).unwrap();
        let n = s.mesh.vertex_count();
        let rep = report_from(&vec![1.0; n], &vec![1.0; n]);
        let intr = intr_with(&vec![1.0; n]);
        let cfg = VerifierConfig { delta_override: Some(2.0), ..Default::default() };
        let h = harnack_check(&rep, &intr, &build_patches(&s.mesh, 2), &cfg).unwrap();
        assert_eq!(h.d0_vertices.len(), n);
        assert_eq!(h.patch_ratios.len(), n);
        assert!(h.patch_ratios.iter().all(|p| p.ratio == 1.0));
        assert_eq!(h.inf_ratio, Some(1.0));
        // W = 1, k = 1: 1 − 4 = −3 fails the certification everywhere.
        assert_eq!(h.certification_violations.len(), n);
    }

    fn member(eps: f64, k1: &[f64], k2: &[f64]) -> SweepMember {
        let mut report = report_from(k1, k2);
        report.epsilon = eps;
        SweepMember { epsilon: eps, intrinsic: intr_with(&report.k_sq), report, converged: true }
    }

    #[test]
    fn corollary_needs_three() {
        let ms = vec![member(0.1, &[1.0], &[1.0]), member(0.01, &[1.0], &[1.0])];
        assert_eq!(corollary_classify(&ms), Err(VerifyError::TooFewEpsilons(2)));
    }

    #[test]
    fn corollary_branches() {
        let uniform = vec![member(0.1, &[1.0], &[1.0]), member(0.01, &[1.0], &[1.05]), member(0.001, &[1.0], &[1.1])];
        assert_eq!(corollary_classify(&uniform).unwrap().class, CorollaryClass::UniformH);
        let diverging = vec![
            member(0.1, &[1.0], &[2.0]),
            member(0.01, &[1.0], &[4.0]),
            member(0.001, &[1.0], &[8.0]),
        ];
        let c = corollary_classify(&diverging).unwrap();
        assert_eq!(c.class, CorollaryClass::ProductDiverges);
        assert_eq!(c.trace[0].epsilon, 0.1);
        let flat = vec![member(0.1, &[1.0], &[2.0]), member(0.01, &[1.0], &[4.0]), member(0.001, &[1.0], &[3.0])];
        assert_eq!(corollary_classify(&flat).unwrap().class, CorollaryClass::Neither);
    }

    #[test]
    fn total_curvature_flags_unconverged() {
        let mut ms = vec![member(0.1, &[1.0; 3], &[1.0; 3]), member(0.01, &[1.0; 3], &[1.0; 3])];
        assert!(total_curvature_check(&ms).pass);
        ms[1].converged = false;
        let t = total_curvature_check(&ms);
        assert!(!t.pass);
        assert_eq!(t.tag.as_deref(), Some("unconverged_member"));
        assert_eq!(t.unconverged, vec![0.01]);
    }

    #[test]
    fn verdict_independent_of_member_order() {
        let s = gen_spheroid(2, 1.0, 1.3).unwrap();
        let intr = angle_defect_curvature(&s.mesh, &s.metric).unwrap();
        let rep = analyze(&s.mesh, &intr, &s.embedding, s.metric.mean_edge_length(), 0.0, 2, AmbientSpec::Euclidean).unwrap();
        let mk = |eps: f64| {
            let mut r = rep.clone();
            r.epsilon = eps;
            SweepMember { epsilon: eps, report: r, intrinsic: intr.clone(), converged: true }
        };
        let a = vec![mk(0.1), mk(0.01), mk(0.001)];
        let b = vec![mk(0.001), mk(0.1), mk(0.01)];
        let cfg = VerifierConfig::default();
        let va = verify_sweep(&s.mesh, &a, &cfg).unwrap();
        let vb = verify_sweep(&s.mesh, &b, &cfg).unwrap();
        assert_eq!(va, vb);
        assert_eq!(va.corollary, "uniform_h");
        assert!(va.passed(), "{:?}", va.failures);
    }

    #[test]
    fn config_validation() {
        assert!(VerifierConfig::default().validate().is_ok());
        assert!(VerifierConfig { a0: Some(0.0), ..Default::default() }.validate().is_err());
        assert!(VerifierConfig { tau_k1: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(VerifierConfig { patch_hops: 0, ..Default::default() }.validate().is_err());
        assert!(VerifierConfig { a_multipliers: vec![0.5], ..Default::default() }.validate().is_err());
    }
}
