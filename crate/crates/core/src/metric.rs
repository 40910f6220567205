//! Intrinsic (edge-length) metrics on a [`TriSphere`].
//!
//! Everything here is computed from edge lengths alone: corner angles by the
//! law of cosines, angle-defect Gauss curvature over mixed Voronoi areas, the
//! cotangent Laplacian, conformal rescaling, and the conformal lift that
//! pushes a degenerate-elliptic metric to strictly positive curvature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CgOutcome};
use crate::mesh::TriSphere;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric was built for topology {found}, mesh is {expected}")]
    TopologyMismatch { expected: String, found: String },
    #[error("expected {expected} edge lengths, got {found}")]
    LengthCount { expected: usize, found: usize },
    #[error("edge {edge} has invalid length {length}")]
    InvalidLength { edge: usize, length: f64 },
    #[error("face {face} violates the strict triangle inequality")]
    TriangleInequality { face: usize },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("vertex {vertex} has curvature {curvature} below the bound {bound}")]
    BelowBound { vertex: usize, curvature: f64, bound: f64 },
    #[error("curvature never exceeds the bound {0}")]
    NoExcessCurvature(f64),
    #[error("Poisson solve did not converge (relative residual {0:e})")]
    SolverFailed(f64),
    #[error("regularized curvature minimum {min_k} still <= {bound} after amplitude escalation")]
    NotLifted { min_k: f64, bound: f64 },
}

/// Per-edge lengths on a fixed topology, in canonical edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub topology_ref: String,
    pub edge_lengths: Vec<f64>,
}

impl MetricField {
    /// Validates positivity and the strict triangle inequality in every face.
    pub fn new(mesh: &TriSphere, edge_lengths: Vec<f64>) -> Result<Self, MetricError> {
        let g = MetricField { topology_ref: mesh.topology_hash().to_owned(), edge_lengths };
        g.validate(mesh)?;
        Ok(g)
    }

    /// Induced metric of an embedding.
    pub fn from_positions(
        mesh: &TriSphere,
        positions: &[nalgebra::Vector3<f64>],
    ) -> Result<Self, MetricError> {
        let lengths = mesh.edges().iter().map(|&[a, b]| (positions[a] - positions[b]).norm()).collect();
        Self::new(mesh, lengths)
    }

    pub fn validate(&self, mesh: &TriSphere) -> Result<(), MetricError> {
        if self.topology_ref != mesh.topology_hash() {
            return Err(MetricError::TopologyMismatch {
                expected: mesh.topology_hash().to_owned(),
                found: self.topology_ref.clone(),
            });
        }
        if self.edge_lengths.len() != mesh.edge_count() {
            return Err(MetricError::LengthCount {
                expected: mesh.edge_count(),
                found: self.edge_lengths.len(),
            });
        }
        for (edge, &length) in self.edge_lengths.iter().enumerate() {
            if !(length.is_finite() && length > 0.0) {
                return Err(MetricError::InvalidLength { edge, length });
            }
        }
        for face in 0..mesh.face_count() {
            let [a, b, c] = self.face_lengths(mesh, face);
            if a >= b + c || b >= a + c || c >= a + b {
                return Err(MetricError::TriangleInequality { face });
            }
        }
        Ok(())
    }

    /// Lengths opposite corners 0, 1, 2 of `face`.
    pub fn face_lengths(&self, mesh: &TriSphere, face: usize) -> [f64; 3] {
        let fe = mesh.face_edges()[face];
        [self.edge_lengths[fe[0]], self.edge_lengths[fe[1]], self.edge_lengths[fe[2]]]
    }

    /// Hex SHA-256 over the topology reference and the exact length bits.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.topology_ref.as_bytes());
        for l in &self.edge_lengths {
            h.update(l.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn mean_edge_length(&self) -> f64 {
        linalg::mean(&self.edge_lengths)
    }

    pub fn scaled(&self, c: f64) -> Self {
        MetricField {
            topology_ref: self.topology_ref.clone(),
            edge_lengths: self.edge_lengths.iter().map(|l| l * c).collect(),
        }
    }

    pub fn total_area(&self, mesh: &TriSphere) -> f64 {
        (0..mesh.face_count()).map(|f| triangle_area(self.face_lengths(mesh, f))).sum()
    }
}

/// Triangle area from side lengths (Kahan's cancellation-safe Heron form).
pub fn triangle_area(sides: [f64; 3]) -> f64 {
    let mut s = sides;
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    let p = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    0.25 * p.max(0.0).sqrt()
}

/// Corner angles of a triangle whose side `sides[i]` is opposite corner `i`.
pub fn corner_angles(sides: [f64; 3]) -> [f64; 3] {
    let four_area = 4.0 * triangle_area(sides);
    let [a, b, c] = sides;
    let sq = [a * a, b * b, c * c];
    let ang = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        four_area.atan2(sq[j] + sq[k] - sq[i])
    };
    [ang(0), ang(1), ang(2)]
}

/// Cotangents of the corner angles.
pub fn corner_cotangents(sides: [f64; 3]) -> [f64; 3] {
    let four_area = 4.0 * triangle_area(sides);
    let [a, b, c] = sides;
    let sq = [a * a, b * b, c * c];
    let cot = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        (sq[j] + sq[k] - sq[i]) / four_area
    };
    [cot(0), cot(1), cot(2)]
}

/// Mixed Voronoi area contributions of one triangle to its three corners.
///
/// Circumcentric Voronoi cells for non-obtuse triangles; for obtuse ones the
/// obtuse corner takes half the area and the others a quarter each.
pub fn mixed_areas(sides: [f64; 3]) -> [f64; 3] {
    let area = triangle_area(sides);
    let angles = corner_angles(sides);
    if let Some(obtuse) = angles.iter().position(|&t| t > PI / 2.0) {
        let mut out = [0.25 * area; 3];
        out[obtuse] = 0.5 * area;
        return out;
    }
    let cot = corner_cotangents(sides);
    let sq = sides.map(|s| s * s);
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        // Sides adjacent to corner i are sides[j] (opposite j) and sides[k].
        out[i] = 0.125 * (sq[k] * cot[k] + sq[j] * cot[j]);
    }
    out
}

/// Angle-defect Gauss curvature of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicCurvature {
    pub per_vertex_k: Vec<f64>,
    pub per_vertex_area: Vec<f64>,
    pub angle_defects: Vec<f64>,
}

impl IntrinsicCurvature {
    pub fn total_defect(&self) -> f64 {
        self.angle_defects.iter().sum()
    }

    pub fn sup_k(&self) -> f64 {
        self.per_vertex_k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_k(&self) -> f64 {
        self.per_vertex_k.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        self.per_vertex_area.iter().sum()
    }
}

pub fn angle_defect_curvature(
    mesh: &TriSphere,
    g: &MetricField,
) -> Result<IntrinsicCurvature, MetricError> {
    g.validate(mesh)?;
    let n = mesh.vertex_count();
    let mut angle_sum = vec![0.0; n];
    let mut area = vec![0.0; n];
    for (f, face) in mesh.faces().iter().enumerate() {
        let sides = g.face_lengths(mesh, f);
        let ang = corner_angles(sides);
        let mixed = mixed_areas(sides);
        for c in 0..3 {
            angle_sum[face[c]] += ang[c];
            area[face[c]] += mixed[c];
        }
    }
    let angle_defects: Vec<f64> = angle_sum.iter().map(|s| 2.0 * PI - s).collect();
    let per_vertex_k = angle_defects.iter().zip(&area).map(|(d, a)| d / a).collect();
    Ok(IntrinsicCurvature { per_vertex_k, per_vertex_area: area, angle_defects })
}

/// Intrinsic cotangent Laplacian.
///
/// `stiffness` is the positive semidefinite `L` with `(L u)_i = Σ_j w_ij (u_i − u_j)`,
/// `w_ij = (cot α_ij + cot β_ij)/2`. The Laplace–Beltrami operator is
/// `Δ = −M⁻¹ L` with `M` the mixed Voronoi areas.
#[derive(Debug, Clone)]
pub struct CotanLaplacian {
    /// Per-vertex `(neighbour, weight)` pairs, sorted by neighbour.
    rows: Vec<Vec<(usize, f64)>>,
    edge_weights: Vec<f64>,
    mass: Vec<f64>,
}

impl CotanLaplacian {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// `y = L x`.
    pub fn apply_stiffness(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x[i];
            y[i] = row.iter().map(|&(j, w)| w * (xi - x[j])).sum();
        }
    }

    /// `Δu = −M⁻¹ L u`.
    pub fn laplace_beltrami(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.apply_stiffness(u, &mut y);
        y.iter().zip(&self.mass).map(|(v, m)| -v / m).collect()
    }

    /// Entry `L_ij` of the stiffness matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.rows[i].iter().map(|&(_, w)| w).sum();
        }
        match self.rows[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(p) => -self.rows[i][p].1,
            Err(_) => 0.0,
        }
    }

    /// Inverse of the stiffness diagonal, for Jacobi preconditioning.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        (0..self.size())
            .map(|i| {
                let d = self.entry(i, i);
                if d > 0.0 { 1.0 / d } else { 1.0 }
            })
            .collect()
    }

    /// Solves `L x = b` in the mean-zero gauge. `b` is projected onto the range first.
    pub fn solve(&self, b: &[f64], rel_tol: f64) -> (Vec<f64>, CgOutcome) {
        let mut x = vec![0.0; b.len()];
        let out = linalg::conjugate_gradient(
            |v, y| self.apply_stiffness(v, y),
            b,
            &mut x,
            &self.inverse_diagonal(),
            rel_tol,
            20 * b.len().max(50),
            true,
        );
        (x, out)
    }
}

pub fn cotan_laplacian(mesh: &TriSphere, g: &MetricField) -> Result<CotanLaplacian, MetricError> {
    g.validate(mesh)?;
    let mut edge_weights = vec![0.0; mesh.edge_count()];
    let mut mass = vec![0.0; mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let sides = g.face_lengths(mesh, f);
        if triangle_area(sides) <= 0.0 {
            return Err(MetricError::TriangleInequality { face: f });
        }
        let cot = corner_cotangents(sides);
        let mixed = mixed_areas(sides);
        for c in 0..3 {
            edge_weights[mesh.face_edges()[f][c]] += 0.5 * cot[c];
            mass[face[c]] += mixed[c];
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.vertex_count()];
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        rows[a].push((b, edge_weights[e]));
        rows[b].push((a, edge_weights[e]));
    }
    for r in &mut rows {
        r.sort_by_key(|&(j, _)| j);
    }
    Ok(CotanLaplacian { rows, edge_weights, mass })
}

/// `ℓ_ij ← e^{(u_i+u_j)/2} ℓ_ij`, i.e. the metric `e^{2u} g` sampled at edge midpoints.
pub fn conformal_scale(mesh: &TriSphere, g: &MetricField, u: &[f64]) -> MetricField {
    let edge_lengths = mesh
        .edges()
        .iter()
        .zip(&g.edge_lengths)
        .map(|(&[a, b], l)| (0.5 * (u[a] + u[b])).exp() * l)
        .collect();
    MetricField { topology_ref: g.topology_ref.clone(), edge_lengths }
}

/// Ambient space the surface is immersed in. Only Euclidean space is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AmbientSpec {
    Euclidean,
}

impl AmbientSpec {
    /// Upper bound on ambient sectional curvature.
    pub fn k0(&self) -> f64 {
        match self {
            AmbientSpec::Euclidean => 0.0,
        }
    }

    /// Sectional curvature of the ambient tangent plane at a surface point.
    pub fn tangent_plane_curvature(&self) -> f64 {
        match self {
            AmbientSpec::Euclidean => 0.0,
        }
    }
}

/// Default width of the degenerate band: 5% of `sup(K − K0)`.
pub const DEFAULT_TAU_FRACTION: f64 = 0.05;
/// How many times the source amplitude may be doubled before giving up.
pub const MAX_AMPLITUDE_DOUBLINGS: u32 = 8;
const POISSON_TOL: f64 = 1e-10;

/// The conformal potential λ solving `−Δ_g λ = ρ` for the smoothed degenerate-set
/// indicator ρ. Computed once per metric and reused for every ε.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalPotential {
    pub k0: f64,
    pub tau_deg: f64,
    /// Mean-centred source (area-weighted mean zero).
    pub source: Vec<f64>,
    /// Mean-zero solution of `−Δλ = source`.
    pub lambda: Vec<f64>,
    pub intrinsic: IntrinsicCurvature,
    pub solver: CgOutcome,
}

/// Indicator of `{K − K0 < τ}` with a linear taper to zero at `K − K0 = 2τ`.
pub fn degenerate_indicator(excess: f64, tau: f64) -> f64 {
    if excess < tau {
        1.0
    } else if excess < 2.0 * tau {
        (2.0 * tau - excess) / tau
    } else {
        0.0
    }
}

pub fn conformal_potential(
    mesh: &TriSphere,
    g: &MetricField,
    k0: f64,
    tau_deg: Option<f64>,
) -> Result<ConformalPotential, MetricError> {
    let intrinsic = angle_defect_curvature(mesh, g)?;
    let excess: Vec<f64> = intrinsic.per_vertex_k.iter().map(|k| k - k0).collect();
    let sup = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(sup > 0.0) {
        return Err(MetricError::NoExcessCurvature(k0));
    }
    let tol = 1e-6 * sup;
    if let Some((vertex, &e)) = excess.iter().enumerate().find(|(_, &e)| e < -tol) {
        return Err(MetricError::BelowBound { vertex, curvature: e + k0, bound: k0 });
    }
    let tau = tau_deg.unwrap_or(DEFAULT_TAU_FRACTION * sup);

    let mut source: Vec<f64> = excess.iter().map(|&e| degenerate_indicator(e, tau)).collect();
    let lap = cotan_laplacian(mesh, g)?;
    let mass = lap.mass();
    let weighted_mean =
        source.iter().zip(mass).map(|(r, m)| r * m).sum::<f64>() / mass.iter().sum::<f64>();
    if source.iter().all(|&r| r == 0.0) {
        let n = mesh.vertex_count();
        let solver = CgOutcome { iterations: 0, relative_residual: 0.0, converged: true };
        return Ok(ConformalPotential {
            k0,
            tau_deg: tau,
            source,
            lambda: vec![0.0; n],
            intrinsic,
            solver,
        });
    }
    source.iter_mut().for_each(|r| *r -= weighted_mean);

    // −Δλ = ρ  ⇔  L λ = M ρ
    let rhs: Vec<f64> = source.iter().zip(mass).map(|(r, m)| r * m).collect();
    let (lambda, solver) = lap.solve(&rhs, POISSON_TOL);
    if !solver.converged {
        return Err(MetricError::SolverFailed(solver.relative_residual));
    }
    Ok(ConformalPotential { k0, tau_deg: tau, source, lambda, intrinsic, solver })
}

/// Outcome of lifting a metric to `g^ε = e^{2ελ} g`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationStep {
    pub epsilon: f64,
    /// Potential actually applied (base potential times `amplitude`).
    pub lambda: Vec<f64>,
    pub amplitude: f64,
    pub tau_deg: f64,
    pub regularized_metric: MetricField,
    /// Minimum angle-defect curvature of the regularized metric.
    pub min_regularized_k: f64,
    /// RMS of `−εΔλ + K̃ − K̃_ε e^{2ελ}` with `K̃_ε = (K̃ − εΔλ) e^{−2ελ}`.
    pub conformal_residual_rms: f64,
    /// RMS gap between that predicted `K̃_ε` and the angle-defect curvature of `g^ε`.
    pub discrete_curvature_gap: f64,
}

/// Applies a precomputed potential at a given ε, doubling the amplitude until the
/// regularized curvature clears `k0`.
pub fn apply_potential(
    mesh: &TriSphere,
    g: &MetricField,
    potential: &ConformalPotential,
    epsilon: f64,
) -> Result<RegularizationStep, MetricError> {
    if !(epsilon > 0.0) {
        return Err(MetricError::NonPositiveEpsilon(epsilon));
    }
    let lap = cotan_laplacian(mesh, g)?;
    let base_k = &potential.intrinsic.per_vertex_k;
    let mut amplitude = 1.0;
    let mut last_min = f64::NEG_INFINITY;
    for _ in 0..=MAX_AMPLITUDE_DOUBLINGS {
        let lambda: Vec<f64> = potential.lambda.iter().map(|l| amplitude * l).collect();
        let u: Vec<f64> = lambda.iter().map(|l| epsilon * l).collect();
        let regularized_metric = conformal_scale(mesh, g, &u);
        let lifted = angle_defect_curvature(mesh, &regularized_metric)?;
        let min_k = lifted.min_k();

        let delta = lap.laplace_beltrami(&lambda);
        let mut res2 = 0.0;
        let mut gap2 = 0.0;
        for i in 0..lambda.len() {
            let conformal = (2.0 * u[i]).exp();
            let predicted = (base_k[i] - epsilon * delta[i]) / conformal;
            let r = -epsilon * delta[i] + base_k[i] - predicted * conformal;
            res2 += r * r;
            let d = predicted - lifted.per_vertex_k[i];
            gap2 += d * d;
        }
        let n = lambda.len() as f64;
        if min_k > potential.k0 {
            return Ok(RegularizationStep {
                epsilon,
                lambda,
                amplitude,
                tau_deg: potential.tau_deg,
                regularized_metric,
                min_regularized_k: min_k,
                conformal_residual_rms: (res2 / n).sqrt(),
                discrete_curvature_gap: (gap2 / n).sqrt(),
            });
        }
        last_min = min_k;
        amplitude *= 2.0;
    }
    Err(MetricError::NotLifted { min_k: last_min, bound: potential.k0 })
}

/// Conformal lift `g^ε = e^{2ελ} g` with `−Δ_g λ = ρ` concentrated on the
/// near-degenerate set `{K − K0 < τ}`.
pub fn regularize(
    mesh: &TriSphere,
    g: &MetricField,
    epsilon: f64,
    k0: f64,
    tau_deg: Option<f64>,
) -> Result<RegularizationStep, MetricError> {
    if !(epsilon > 0.0) {
        return Err(MetricError::NonPositiveEpsilon(epsilon));
    }
    let potential = conformal_potential(mesh, g, k0, tau_deg)?;
    apply_potential(mesh, g, &potential, epsilon)
}
