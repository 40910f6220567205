//! Realizing an edge-length metric in Euclidean space.
//!
//! Minimizes
//!
//! ```text
//! E(x) = Σ_e ((|x_i − x_j|² − ℓ_e²) / ℓ_e²)²  +  β Σ_e (θ_e − θ_e^ref)²
//! ```
//!
//! by Gauss–Newton with matrix-free conjugate-gradient normal equations and an
//! Armijo backtracking line search. `θ_e` is the signed dihedral turning angle
//! (positive for convex edges) and `θ_e^ref` its value on a round sphere of the
//! same area, so the bending term biases early iterations toward the convex
//! branch. β runs down a decreasing schedule and the last stage is pure
//! edge-length least squares.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::mesh::{reference_points, MeshError, TriSphere};
use crate::metric::{
    angle_defect_curvature, apply_potential, conformal_potential, cotan_laplacian, MetricError,
    MetricField, RegularizationStep,
};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("metric is not strictly elliptic: vertex {vertex} has K = {curvature}")]
    NotElliptic { vertex: usize, curvature: f64 },
    #[error("initial state has a degenerate face ({0})")]
    DegenerateInit(usize),
    #[error("initial state has {found} vertices, mesh has {expected}")]
    InitSize { expected: usize, found: usize },
    #[error("line search kept hitting degenerate faces at iteration {0}")]
    PersistentDegeneracy(usize),
}

/// Vertex positions realizing (approximately) a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingState {
    pub metric_ref: String,
    pub positions: Vec<Vector3<f64>>,
    /// RMS over edges of `(|x_i − x_j| − ℓ_ij)/ℓ_ij`.
    pub residual: f64,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl EmbeddingState {
    /// An embedding that realizes `metric` by construction.
    pub fn exact(mesh: &TriSphere, metric: &MetricField, positions: Vec<Vector3<f64>>) -> Self {
        let residual = edge_residual(mesh, metric, &positions);
        EmbeddingState {
            metric_ref: metric.content_hash(),
            positions,
            residual,
            converged: true,
            iterations: 0,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        centroid(&self.positions)
    }
}

/// Relative RMS edge-length error.
pub fn edge_residual(mesh: &TriSphere, g: &MetricField, x: &[Vector3<f64>]) -> f64 {
    let sum: f64 = mesh
        .edges()
        .iter()
        .zip(&g.edge_lengths)
        .map(|(&[a, b], &l)| {
            let r = ((x[a] - x[b]).norm() - l) / l;
            r * r
        })
        .sum();
    (sum / mesh.edge_count() as f64).sqrt()
}

fn centroid(x: &[Vector3<f64>]) -> Vector3<f64> {
    x.iter().fold(Vector3::zeros(), |acc, p| acc + p) / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    /// Step multiplier after a rejected trial, in (0, 1).
    pub shrink: f64,
    /// Armijo sufficient-decrease constant, in (0, 1).
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch { shrink: 0.5, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Gauss–Newton iterations across all bending stages.
    pub max_iterations: usize,
    /// Bound on `mean_edge · ‖∇E‖_∞`.
    pub gradient_tol: f64,
    /// Bound on the relative RMS edge residual.
    pub residual_tol: f64,
    /// Bending weights, strictly decreasing to a non-negative floor.
    pub bending_weight_schedule: Vec<f64>,
    pub line_search: LineSearch,
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 400,
            gradient_tol: 1e-10,
            residual_tol: 1e-8,
            bending_weight_schedule: vec![1e-2, 1e-3, 1e-4, 0.0],
            line_search: LineSearch::default(),
            cg_tol: 1e-8,
            cg_max_iterations: 4000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_owned()));
        if !(self.gradient_tol > 0.0 && self.residual_tol > 0.0 && self.cg_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        let s = &self.bending_weight_schedule;
        if s.is_empty() {
            return bad("bending schedule is empty");
        }
        if s.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("bending schedule must be strictly decreasing");
        }
        if s.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return bad("bending weights must be finite and non-negative");
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0 && ls.armijo > 0.0 && ls.armijo < 1.0) {
            return bad("line search parameters out of range");
        }
        Ok(())
    }

    fn floor(&self) -> f64 {
        *self.bending_weight_schedule.last().expect("validated non-empty")
    }
}

/// Starting point for [`embed`].
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedInit {
    /// Reference icosphere positions on the sphere of matching total area.
    Round,
    /// First three non-trivial Laplacian eigenvectors.
    Spectral,
    /// Warm start from a previous solution; bending stages are skipped.
    State(EmbeddingState),
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveLog {
    /// Energy after each accepted step, with the stage's bending weight.
    pub energies: Vec<(f64, f64)>,
    pub gradient_norm: f64,
    pub gradient_fallbacks: usize,
}

pub fn embed(
    mesh: &TriSphere,
    g: &MetricField,
    init: &EmbedInit,
    cfg: &SolverConfig,
) -> Result<EmbeddingState, EmbedError> {
    embed_with_log(mesh, g, init, cfg).map(|(s, _)| s)
}

pub fn embed_with_log(
    mesh: &TriSphere,
    g: &MetricField,
    init: &EmbedInit,
    cfg: &SolverConfig,
) -> Result<(EmbeddingState, SolveLog), EmbedError> {
    cfg.validate()?;
    let intr = angle_defect_curvature(mesh, g)?;
    if let Some((vertex, &curvature)) =
        intr.per_vertex_k.iter().enumerate().find(|(_, &k)| !(k > 0.0))
    {
        return Err(EmbedError::NotElliptic { vertex, curvature });
    }

    let (mut x, schedule): (Vec<Vector3<f64>>, Vec<f64>) = match init {
        EmbedInit::Round => (round_init(mesh, g)?, cfg.bending_weight_schedule.clone()),
        EmbedInit::Spectral => (spectral_init(mesh, g)?, cfg.bending_weight_schedule.clone()),
        EmbedInit::State(s) => {
            if s.positions.len() != mesh.vertex_count() {
                return Err(EmbedError::InitSize {
                    expected: mesh.vertex_count(),
                    found: s.positions.len(),
                });
            }
            (s.positions.clone(), vec![cfg.floor()])
        }
    };
    let c = centroid(&x);
    x.iter_mut().for_each(|p| *p -= c);
    let reference = x.clone();

    let problem = Problem::new(mesh, g);
    if let Some(f) = problem.degenerate_face(&x) {
        return Err(EmbedError::DegenerateInit(f));
    }

    let mut log = SolveLog::default();
    let mut iterations = 0;
    let mut converged = problem.converged(&x, cfg, &mut log);
    if !converged {
        let last = schedule.len() - 1;
        for (stage, &beta) in schedule.iter().enumerate() {
            let final_stage = stage == last;
            let budget = if final_stage {
                cfg.max_iterations.saturating_sub(iterations)
            } else {
                40.min(cfg.max_iterations.saturating_sub(iterations))
            };
            let mut stage_iters = 0;
            while stage_iters < budget {
                let step = problem.step(&x, beta, cfg, &mut log)?;
                stage_iters += 1;
                iterations += 1;
                match step {
                    Some(next) => x = next,
                    None => break,
                }
                if final_stage {
                    if problem.converged(&x, cfg, &mut log) {
                        converged = true;
                        break;
                    }
                } else if log.gradient_norm < 1e-6 {
                    break;
                }
            }
        }
        if !converged {
            converged = problem.converged(&x, cfg, &mut log);
        }
    }

    if iterations > 0 {
        let c = centroid(&x);
        x.iter_mut().for_each(|p| *p -= c);
        let r = best_rotation(&x, &reference);
        x.iter_mut().for_each(|p| *p = r * *p);
    }
    let residual = edge_residual(mesh, g, &x);
    Ok((
        EmbeddingState { metric_ref: g.content_hash(), positions: x, residual, converged, iterations },
        log,
    ))
}

/// Proper rotation `R` minimizing `Σ |R x_i − y_i|²` for centred point sets.
pub fn best_rotation(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (p, q) in x.iter().zip(y) {
        h += q * p.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

fn round_radius(mesh: &TriSphere, g: &MetricField) -> f64 {
    (g.total_area(mesh) / (4.0 * std::f64::consts::PI)).sqrt()
}

pub fn round_init(mesh: &TriSphere, g: &MetricField) -> Result<Vec<Vector3<f64>>, EmbedError> {
    let r = round_radius(mesh, g);
    Ok(reference_points(mesh)?.into_iter().map(|p| p * r).collect())
}

/// Embedding by the three lowest non-constant eigenvectors of `L v = μ M v`,
/// scaled to the RMS radius of the area-matched sphere and oriented outward.
pub fn spectral_init(mesh: &TriSphere, g: &MetricField) -> Result<Vec<Vector3<f64>>, EmbedError> {
    let lap = cotan_laplacian(mesh, g)?;
    let n = mesh.vertex_count();
    let mass = lap.mass().to_vec();
    // Deterministic, non-symmetric start so the block does not collapse.
    let mut block: Vec<Vec<f64>> = (0..3)
        .map(|k| (0..n).map(|i| ((i * (k + 2) + 7 * k + 1) as f64 * 0.618_034).fract() - 0.5).collect())
        .collect();
    for _ in 0..30 {
        for col in block.iter_mut() {
            let rhs: Vec<f64> = col.iter().zip(&mass).map(|(v, m)| v * m).collect();
            let (sol, _) = lap.solve(&rhs, 1e-10);
            *col = sol;
        }
        m_orthonormalize(&mut block, &mass);
    }
    // Rayleigh–Ritz on the block to get eigenvector directions.
    let mut stiff = Matrix3::zeros();
    let mut tmp = vec![0.0; n];
    for a in 0..3 {
        lap.apply_stiffness(&block[a], &mut tmp);
        for b in 0..3 {
            stiff[(a, b)] = linalg::dot(&block[b], &tmp);
        }
    }
    let eig = nalgebra::SymmetricEigen::new(0.5 * (stiff + stiff.transpose()));
    let mut x: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let raw = Vector3::new(block[0][i], block[1][i], block[2][i]);
            eig.eigenvectors.transpose() * raw
        })
        .collect();
    let c = centroid(&x);
    x.iter_mut().for_each(|p| *p -= c);
    let rms = (x.iter().map(|p| p.norm_squared()).sum::<f64>() / n as f64).sqrt();
    let r = round_radius(mesh, g);
    x.iter_mut().for_each(|p| *p *= r / rms);
    if signed_volume(mesh, &x) < 0.0 {
        x.iter_mut().for_each(|p| p.z = -p.z);
    }
    Ok(x)
}

fn m_orthonormalize(block: &mut [Vec<f64>], mass: &[f64]) {
    let m_dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum::<f64>();
    for k in 0..block.len() {
        for j in 0..k {
            let (head, tail) = block.split_at_mut(k);
            let proj = m_dot(&tail[0], &head[j]);
            linalg::axpy(-proj, &head[j], &mut tail[0]);
        }
        let nrm = m_dot(&block[k], &block[k]).sqrt();
        block[k].iter_mut().for_each(|v| *v /= nrm);
    }
}

pub fn signed_volume(mesh: &TriSphere, x: &[Vector3<f64>]) -> f64 {
    mesh.faces().iter().map(|&[a, b, c]| x[a].dot(&x[b].cross(&x[c]))).sum::<f64>() / 6.0
}

/// Signed dihedral turning angle at edge `x0 → x1` between faces `(x0, x1, x2)`
/// and `(x1, x0, x3)`, positive when convex, with its gradient with respect to
/// `[x0, x1, x2, x3]`.
pub fn dihedral_with_gradient(
    x0: Vector3<f64>,
    x1: Vector3<f64>,
    x2: Vector3<f64>,
    x3: Vector3<f64>,
) -> (f64, [Vector3<f64>; 4]) {
    let e = x1 - x0;
    let len = e.norm();
    let na = e.cross(&(x2 - x0));
    let nb = (x0 - x1).cross(&(x3 - x1));
    let theta = na.cross(&nb).dot(&(e / len)).atan2(na.dot(&nb));
    let ga = na / na.norm_squared();
    let gb = nb / nb.norm_squared();
    let alpha_a = (x2 - x0).dot(&e) / (len * len);
    let alpha_b = (x3 - x0).dot(&e) / (len * len);
    let d2 = -len * ga;
    let d3 = -len * gb;
    let d0 = (1.0 - alpha_a) * len * ga + (1.0 - alpha_b) * len * gb;
    let d1 = alpha_a * len * ga + alpha_b * len * gb;
    (theta, [d0, d1, d2, d3])
}

/// Residual row: a value and its sparse gradient.
struct Row {
    value: f64,
    verts: [usize; 4],
    grads: [Vector3<f64>; 4],
    width: usize,
}

struct Problem<'a> {
    mesh: &'a TriSphere,
    lengths: &'a [f64],
    /// (edge, x0, x1, x2, x3) with x0→x1 traversed by the first face.
    hinges: Vec<[usize; 4]>,
    theta_ref: Vec<f64>,
    mean_edge: f64,
}

impl<'a> Problem<'a> {
    fn new(mesh: &'a TriSphere, g: &'a MetricField) -> Self {
        let hinges = mesh
            .edges()
            .iter()
            .enumerate()
            .map(|(e, _)| {
                let [fa, fb] = mesh.edge_faces()[e];
                let c = mesh.face_edges()[fa].iter().position(|&x| x == e).expect("edge in face");
                let face = mesh.faces()[fa];
                let (v0, v1, v2) = (face[(c + 1) % 3], face[(c + 2) % 3], face[c]);
                [v0, v1, v2, mesh.opposite_vertex(fb, e)]
            })
            .collect();
        let r = round_radius(mesh, g);
        let sum_sq: f64 = g.edge_lengths.iter().map(|l| l * l).sum();
        let theta_ref =
            g.edge_lengths.iter().map(|l| l * 8.0 * std::f64::consts::PI * r / sum_sq).collect();
        Problem { mesh, lengths: &g.edge_lengths, hinges, theta_ref, mean_edge: g.mean_edge_length() }
    }

    fn rows(&self, x: &[Vector3<f64>], beta: f64) -> Vec<Row> {
        let mut rows = Vec::with_capacity(self.lengths.len() * if beta > 0.0 { 2 } else { 1 });
        for (&[a, b], &l) in self.mesh.edges().iter().zip(self.lengths) {
            let d = x[a] - x[b];
            let l2 = l * l;
            let gv = d * (2.0 / l2);
            rows.push(Row {
                value: (d.norm_squared() - l2) / l2,
                verts: [a, b, 0, 0],
                grads: [gv, -gv, Vector3::zeros(), Vector3::zeros()],
                width: 2,
            });
        }
        if beta > 0.0 {
            let w = beta.sqrt();
            for (h, &t_ref) in self.hinges.iter().zip(&self.theta_ref) {
                let (theta, grads) = dihedral_with_gradient(x[h[0]], x[h[1]], x[h[2]], x[h[3]]);
                rows.push(Row {
                    value: w * (theta - t_ref),
                    verts: *h,
                    grads: grads.map(|g| g * w),
                    width: 4,
                });
            }
        }
        rows
    }

    fn energy(&self, x: &[Vector3<f64>], beta: f64) -> f64 {
        let mut e = 0.0;
        for (&[a, b], &l) in self.mesh.edges().iter().zip(self.lengths) {
            let l2 = l * l;
            let r = ((x[a] - x[b]).norm_squared() - l2) / l2;
            e += r * r;
        }
        if beta > 0.0 {
            for (h, &t_ref) in self.hinges.iter().zip(&self.theta_ref) {
                let (theta, _) = dihedral_with_gradient(x[h[0]], x[h[1]], x[h[2]], x[h[3]]);
                e += beta * (theta - t_ref).powi(2);
            }
        }
        e
    }

    /// `∇E = 2 Jᵀ r` as a flat vector.
    fn gradient(&self, rows: &[Row], n: usize) -> Vec<f64> {
        let mut g = vec![0.0; 3 * n];
        for row in rows {
            for k in 0..row.width {
                let v = row.verts[k];
                for c in 0..3 {
                    g[3 * v + c] += 2.0 * row.value * row.grads[k][c];
                }
            }
        }
        g
    }

    fn gradient_measure(&self, grad: &[f64]) -> f64 {
        self.mean_edge * grad.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn converged(&self, x: &[Vector3<f64>], cfg: &SolverConfig, log: &mut SolveLog) -> bool {
        let rows = self.rows(x, 0.0);
        let grad = self.gradient(&rows, x.len());
        log.gradient_norm = self.gradient_measure(&grad);
        let residual = edge_residual(self.mesh, &self.metric_view(), x);
        log.gradient_norm < cfg.gradient_tol && residual < cfg.residual_tol
    }

    fn metric_view(&self) -> MetricField {
        MetricField {
            topology_ref: self.mesh.topology_hash().to_owned(),
            edge_lengths: self.lengths.to_vec(),
        }
    }

    fn degenerate_face(&self, x: &[Vector3<f64>]) -> Option<usize> {
        let min_area = 1e-12 * self.mean_edge * self.mean_edge;
        self.mesh.faces().iter().position(|&[a, b, c]| {
            let n = (x[b] - x[a]).cross(&(x[c] - x[a]));
            !(0.5 * n.norm() > min_area)
        })
    }

    /// One Gauss–Newton step with line search. `None` when no decrease is possible.
    fn step(
        &self,
        x: &[Vector3<f64>],
        beta: f64,
        cfg: &SolverConfig,
        log: &mut SolveLog,
    ) -> Result<Option<Vec<Vector3<f64>>>, EmbedError> {
        let n = x.len();
        let rows = self.rows(x, beta);
        let grad = self.gradient(&rows, n);
        log.gradient_norm = self.gradient_measure(&grad);
        let e0: f64 = rows.iter().map(|r| r.value * r.value).sum();

        let mut diag = vec![0.0; 3 * n];
        for row in &rows {
            for k in 0..row.width {
                for c in 0..3 {
                    diag[3 * row.verts[k] + c] += row.grads[k][c] * row.grads[k][c];
                }
            }
        }
        let mean_diag = linalg::mean(&diag);
        let damping = 1e-10 * mean_diag;
        let precond: Vec<f64> = diag.iter().map(|d| 1.0 / (d + damping).max(1e-300)).collect();
        let apply = |p: &[f64], y: &mut [f64]| {
            y.iter_mut().zip(p).for_each(|(yi, pi)| *yi = damping * pi);
            for row in &rows {
                let mut s = 0.0;
                for k in 0..row.width {
                    let v = row.verts[k];
                    s += row.grads[k].x * p[3 * v] + row.grads[k].y * p[3 * v + 1] + row.grads[k].z * p[3 * v + 2];
                }
                for k in 0..row.width {
                    let v = row.verts[k];
                    y[3 * v] += s * row.grads[k].x;
                    y[3 * v + 1] += s * row.grads[k].y;
                    y[3 * v + 2] += s * row.grads[k].z;
                }
            }
        };
        let rhs: Vec<f64> = grad.iter().map(|g| -0.5 * g).collect();
        let mut p = vec![0.0; 3 * n];
        linalg::conjugate_gradient(apply, &rhs, &mut p, &precond, cfg.cg_tol, cfg.cg_max_iterations, false);

        let mut slope = linalg::dot(&grad, &p);
        if !(slope < 0.0) || p.iter().any(|v| !v.is_finite()) {
            log.gradient_fallbacks += 1;
            let gn = linalg::norm(&grad).max(1e-300);
            // Steepest descent scaled to a tenth of an edge.
            p = grad.iter().map(|g| -g * 0.1 * self.mean_edge / gn).collect();
            slope = linalg::dot(&grad, &p);
        }

        let ls = &cfg.line_search;
        let mut t = 1.0;
        let mut saw_degenerate = false;
        for _ in 0..ls.max_backtracks {
            let trial: Vec<Vector3<f64>> = (0..n)
                .map(|i| x[i] + t * Vector3::new(p[3 * i], p[3 * i + 1], p[3 * i + 2]))
                .collect();
            if self.degenerate_face(&trial).is_some() {
                saw_degenerate = true;
                t *= ls.shrink;
                continue;
            }
            let e1 = self.energy(&trial, beta);
            if e1 <= e0 + ls.armijo * t * slope {
                debug_assert!(e1 <= e0, "energy increased on an accepted step");
                log.energies.push((beta, e1));
                return Ok(Some(trial));
            }
            t *= ls.shrink;
        }
        if saw_degenerate && e0 > 1e-20 {
            return Err(EmbedError::PersistentDegeneracy(log.energies.len()));
        }
        Ok(None)
    }
}

/// Per-ε record of a continuation sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub regularization: RegularizationStep,
    pub embedding: EmbeddingState,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("epsilons must be positive and strictly decreasing")]
    BadEpsilons,
    #[error("at epsilon {epsilon}: {source}")]
    Regularize { epsilon: f64, source: MetricError },
    #[error("at epsilon {epsilon}: {source}")]
    Embed { epsilon: f64, source: EmbedError },
}

/// Completed entries plus the failure that stopped the sweep, if any.
#[derive(Debug)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    pub failure: Option<SweepError>,
}

/// Regularize then embed for each ε in decreasing order, warm-starting each
/// solve from the previous one. One conformal potential is shared by every ε.
pub fn continuation_sweep(
    mesh: &TriSphere,
    g: &MetricField,
    epsilons: &[f64],
    k0: f64,
    tau_deg: Option<f64>,
    init: &EmbedInit,
    cfg: &SolverConfig,
) -> Result<SweepOutcome, SweepError> {
    if epsilons.iter().any(|&e| !(e > 0.0)) || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SweepError::BadEpsilons);
    }
    let mut entries = Vec::with_capacity(epsilons.len());
    if epsilons.is_empty() {
        return Ok(SweepOutcome { entries, failure: None });
    }
    let potential = match conformal_potential(mesh, g, k0, tau_deg) {
        Ok(p) => p,
        Err(source) => {
            return Ok(SweepOutcome {
                entries,
                failure: Some(SweepError::Regularize { epsilon: epsilons[0], source }),
            })
        }
    };
    let mut start = init.clone();
    for &epsilon in epsilons {
        let regularization = match apply_potential(mesh, g, &potential, epsilon) {
            Ok(r) => r,
            Err(source) => {
                return Ok(SweepOutcome { entries, failure: Some(SweepError::Regularize { epsilon, source }) })
            }
        };
        let embedding = match embed(mesh, &regularization.regularized_metric, &start, cfg) {
            Ok(e) => e,
            Err(source) => {
                return Ok(SweepOutcome { entries, failure: Some(SweepError::Embed { epsilon, source }) })
            }
        };
        log::info!(
            "eps {epsilon:e}: residual {:.3e}, {} iterations, converged {}",
            embedding.residual,
            embedding.iterations,
            embedding.converged
        );
        start = EmbedInit::State(embedding.clone());
        entries.push(SweepEntry { epsilon, regularization, embedding });
    }
    Ok(SweepOutcome { entries, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn dihedral_gradient_matches_finite_differences() {
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.1, 0.0),
            Vector3::new(0.4, 1.0, -0.3),
            Vector3::new(0.6, -0.9, -0.2),
        ];
        let (theta, grads) = dihedral_with_gradient(pts[0], pts[1], pts[2], pts[3]);
        assert!(theta > 0.0, "convex fold must be positive");
        let h = 1e-6;
        for v in 0..4 {
            for c in 0..3 {
                let mut p = pts;
                let mut m = pts;
                p[v][c] += h;
                m[v][c] -= h;
                let fd = (dihedral_with_gradient(p[0], p[1], p[2], p[3]).0
                    - dihedral_with_gradient(m[0], m[1], m[2], m[3]).0)
                    / (2.0 * h);
                assert!((fd - grads[v][c]).abs() < 1e-7, "v{v} c{c}: fd {fd} vs {}", grads[v][c]);
            }
        }
    }

    #[test]
    fn sphere_hinges_are_convex() {
        let s = corpus::gen_round(2, 1.0).unwrap();
        let prob = Problem::new(&s.mesh, &s.metric);
        let x = &s.embedding.positions;
        for (h, &t_ref) in prob.hinges.iter().zip(&prob.theta_ref) {
            let (theta, _) = dihedral_with_gradient(x[h[0]], x[h[1]], x[h[2]], x[h[3]]);
            assert!(theta > 0.0);
            assert!(theta > 0.5 * t_ref && theta < 1.5 * t_ref);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.bending_weight_schedule = vec![1e-3, 1e-2];
        assert!(cfg.validate().is_err());
        cfg = SolverConfig { gradient_tol: 0.0, ..SolverConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exact_init_needs_no_iterations() {
        let s = corpus::gen_spheroid(3, 1.0, 2.0).unwrap();
        let out = embed(&s.mesh, &s.metric, &EmbedInit::State(s.embedding.clone()), &SolverConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
        assert!(out.residual < 1e-12);
    }

    #[test]
    fn round_metric_from_round_init_level2() {
        let s = corpus::gen_round(2, 1.0).unwrap();
        let out = embed(&s.mesh, &s.metric, &EmbedInit::Round, &SolverConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.residual < 1e-8);
        assert!(out.centroid().norm() < 1e-12);
    }

    #[test]
    fn rejects_non_elliptic_metric() {
        let s = corpus::gen_round(2, 1.0).unwrap();
        // Shortened spokes open the apex angles past 2π: a saddle vertex.
        let mut g = s.metric.clone();
        for &e in s.mesh.vertex_edges(20) {
            g.edge_lengths[e] *= 0.8;
        }
        let r = embed(&s.mesh, &g, &EmbedInit::Round, &SolverConfig::default());
        assert!(matches!(r, Err(EmbedError::NotElliptic { vertex: 20, .. })), "{r:?}");
    }

    #[test]
    fn empty_sweep() {
        let s = corpus::gen_round(1, 1.0).unwrap();
        let out = continuation_sweep(&s.mesh, &s.metric, &[], 0.0, None, &EmbedInit::Round, &SolverConfig::default()).unwrap();
        assert!(out.entries.is_empty() && out.failure.is_none());
    }

    #[test]
    fn sweep_rejects_increasing_epsilons() {
        let s = corpus::gen_round(1, 1.0).unwrap();
        let r = continuation_sweep(&s.mesh, &s.metric, &[1e-3, 1e-2], 0.0, None, &EmbedInit::Round, &SolverConfig::default());
        assert!(matches!(r, Err(SweepError::BadEpsilons)));
    }
}
