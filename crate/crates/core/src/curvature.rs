//! Extrinsic curvature of an embedded mesh by local quadric fitting.
//!
//! At each vertex the ring neighbourhood is expressed in the frame of the
//! area-weighted vertex normal and fitted by least squares with
//! `w = d·u + e·v + ½(a u² + 2b uv + c v²)`, `w` measured toward the inside.
//! Principal curvatures are the eigenvalues of the graph's shape operator at
//! the origin, so convex surfaces get `κ > 0`.

use nalgebra::{Matrix2, SMatrix, SVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingState;
use crate::mesh::TriSphere;
use crate::metric::{AmbientSpec, IntrinsicCurvature};

#[derive(Debug, Error, PartialEq)]
pub enum CurvatureError {
    #[error("fit ring must be 1 or 2, got {0}")]
    BadRing(usize),
    #[error("rank-deficient quadric fit at vertex {0}")]
    RankDeficient(usize),
    #[error("vertex {0} has a zero-area star")]
    DegenerateStar(usize),
    #[error("embedding has {found} vertices, mesh has {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

/// Minimum stencil size (neighbours, excluding the centre).
const MIN_STENCIL: usize = 6;

/// Principal curvatures per vertex, `kappa1 ≤ kappa2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFit {
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
    pub ring: usize,
}

/// Area-weighted (unnormalized face normal sum) unit normal at `v`.
pub fn vertex_normal(mesh: &TriSphere, x: &[Vector3<f64>], v: usize) -> Option<Vector3<f64>> {
    let n = mesh.vertex_faces(v).iter().fold(Vector3::zeros(), |acc, &f| {
        let [a, b, c] = mesh.faces()[f];
        acc + (x[b] - x[a]).cross(&(x[c] - x[a]))
    });
    let len = n.norm();
    (len > 0.0).then(|| n / len)
}

fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&axis).normalize();
    (t1, n.cross(&t1))
}

fn fit_vertex(mesh: &TriSphere, x: &[Vector3<f64>], v: usize, ring: usize) -> Result<(f64, f64, Vector3<f64>), CurvatureError> {
    let n = vertex_normal(mesh, x, v).ok_or(CurvatureError::DegenerateStar(v))?;
    let (t1, t2) = tangent_frame(&n);
    let mut hops = ring;
    let mut stencil = mesh.ring(v, hops);
    while stencil.len() - 1 < MIN_STENCIL && hops < 4 {
        hops += 1;
        stencil = mesh.ring(v, hops);
    }
    let scale = stencil[1..].iter().map(|&q| (x[q] - x[v]).norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(CurvatureError::DegenerateStar(v));
    }

    // Normal equations in scaled coordinates, accumulated in stencil order.
    let mut ata = SMatrix::<f64, 5, 5>::zeros();
    let mut atb = SVector::<f64, 5>::zeros();
    for &q in &stencil[1..] {
        let d = (x[q] - x[v]) / scale;
        let (u, w, h) = (d.dot(&t1), d.dot(&t2), -d.dot(&n));
        let row = SVector::<f64, 5>::new(u, w, 0.5 * u * u, u * w, 0.5 * w * w);
        ata += row * row.transpose();
        atb += row * h;
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-12 * smax) {
        return Err(CurvatureError::RankDeficient(v));
    }
    let coef = svd.solve(&atb, 0.0).map_err(|_| CurvatureError::RankDeficient(v))?;

    // Undo the coordinate scaling: gradients are scale-free, second derivatives scale by 1/s.
    let grad = nalgebra::Vector2::new(coef[0], coef[1]);
    let hess = Matrix2::new(coef[2], coef[3], coef[3], coef[4]) / scale;
    let (k1, k2) = graph_principal_curvatures(&grad, &hess);
    Ok((k1, k2, n))
}

/// Principal curvatures of the graph `w = f(u, v)` at a point with gradient `grad`
/// and Hessian `hess`: eigenvalues of `I⁻¹ II` with `I = Id + ∇f∇fᵀ` and
/// `II = Hess / √(1 + |∇f|²)`.
pub fn graph_principal_curvatures(grad: &nalgebra::Vector2<f64>, hess: &Matrix2<f64>) -> (f64, f64) {
    let first = Matrix2::identity() + grad * grad.transpose();
    let second = hess / (1.0 + grad.norm_squared()).sqrt();
    let chol = first.cholesky().expect("first fundamental form is positive definite");
    let l_inv = chol.l().try_inverse().expect("triangular factor is invertible");
    let sym = l_inv * second * l_inv.transpose();
    let sym = 0.5 * (sym + sym.transpose());
    let (a, b, c) = (sym[(0, 0)], sym[(0, 1)], sym[(1, 1)]);
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - disc, mean + disc)
}

pub fn shape_operator_fit(
    emb: &EmbeddingState,
    mesh: &TriSphere,
    ring: usize,
) -> Result<ShapeFit, CurvatureError> {
    fit_positions(&emb.positions, mesh, ring)
}

pub fn fit_positions(x: &[Vector3<f64>], mesh: &TriSphere, ring: usize) -> Result<ShapeFit, CurvatureError> {
    if !(1..=2).contains(&ring) {
        return Err(CurvatureError::BadRing(ring));
    }
    if x.len() != mesh.vertex_count() {
        return Err(CurvatureError::SizeMismatch { expected: mesh.vertex_count(), found: x.len() });
    }
    let per_vertex: Vec<_> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| fit_vertex(mesh, x, v, ring))
        .collect::<Result<_, _>>()?;
    let mut fit = ShapeFit {
        kappa1: Vec::with_capacity(x.len()),
        kappa2: Vec::with_capacity(x.len()),
        normals: Vec::with_capacity(x.len()),
        ring,
    };
    for (k1, k2, n) in per_vertex {
        fit.kappa1.push(k1);
        fit.kappa2.push(k2);
        fit.normals.push(n);
    }
    Ok(fit)
}

/// Per-vertex intrinsic and extrinsic curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub epsilon: f64,
    pub fit_ring: usize,
    pub mean_edge: f64,
    pub k_intr: Vec<f64>,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    pub h: Vec<f64>,
    pub k_sq: Vec<f64>,
    /// `1/H`, or `None` where `H ≤ 1e-12 / mean_edge`.
    pub w: Vec<Option<f64>>,
    pub gauss_residual: Vec<f64>,
    pub area_weight: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl CurvatureReport {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn k(&self, v: usize) -> f64 {
        self.k_sq[v].max(0.0).sqrt()
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median_gauss_residual(&self) -> f64 {
        median(&self.gauss_residual)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative curvature `k² = K_intr − K̄(tangent plane)` and the Gauss-equation
/// consistency measure `|κ₁κ₂ − K_intr| / max(|K_intr|, floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeCurvature {
    pub k_sq: Vec<f64>,
    pub gauss_residual: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl RelativeCurvature {
    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

pub fn relative_curvature(fit: &ShapeFit, intr: &IntrinsicCurvature, ambient: AmbientSpec) -> RelativeCurvature {
    let sup_abs = intr.per_vertex_k.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let floor = (1e-6 * sup_abs).max(f64::MIN_POSITIVE);
    let n = intr.per_vertex_k.len();
    let mut out = RelativeCurvature {
        k_sq: Vec::with_capacity(n),
        gauss_residual: Vec::with_capacity(n),
        clamped: Vec::with_capacity(n),
    };
    for v in 0..n {
        let k_intr = intr.per_vertex_k[v];
        let raw = k_intr - ambient.tangent_plane_curvature();
        out.clamped.push(raw < 0.0);
        out.k_sq.push(raw.max(0.0));
        let extrinsic = fit.kappa1[v] * fit.kappa2[v];
        out.gauss_residual.push((extrinsic - k_intr).abs() / k_intr.abs().max(floor));
    }
    out
}

/// Full per-vertex analysis of one embedding.
pub fn analyze(
    mesh: &TriSphere,
    intr: &IntrinsicCurvature,
    emb: &EmbeddingState,
    mean_edge: f64,
    epsilon: f64,
    ring: usize,
    ambient: AmbientSpec,
) -> Result<CurvatureReport, CurvatureError> {
    let fit = shape_operator_fit(emb, mesh, ring)?;
    Ok(assemble_report(&fit, intr, mean_edge, epsilon, ambient))
}

pub fn assemble_report(
    fit: &ShapeFit,
    intr: &IntrinsicCurvature,
    mean_edge: f64,
    epsilon: f64,
    ambient: AmbientSpec,
) -> CurvatureReport {
    let rel = relative_curvature(fit, intr, ambient);
    let h: Vec<f64> = fit.kappa1.iter().zip(&fit.kappa2).map(|(a, b)| 0.5 * (a + b)).collect();
    let h_floor = 1e-12 / mean_edge;
    let w = h.iter().map(|&hv| (hv > h_floor).then(|| 1.0 / hv)).collect();
    CurvatureReport {
        epsilon,
        fit_ring: fit.ring,
        mean_edge,
        k_intr: intr.per_vertex_k.clone(),
        kappa1: fit.kappa1.clone(),
        kappa2: fit.kappa2.clone(),
        h,
        k_sq: rel.k_sq,
        w,
        gauss_residual: rel.gauss_residual,
        area_weight: intr.per_vertex_area.clone(),
        clamped: rel.clamped,
    }
}

/// `∫ H dA ≈ Σ_v H(v) · area_weight(v)`.
pub fn total_mean_curvature(report: &CurvatureReport) -> f64 {
    report.h.iter().zip(&report.area_weight).map(|(h, a)| h * a).sum()
}

/// Vertices violating `H ≥ k − 0.02 (k + 1/mean_edge)`.
pub fn am_gm_violations(report: &CurvatureReport) -> Vec<usize> {
    let slack = 1.0 / report.mean_edge;
    (0..report.len())
        .filter(|&v| {
            let k = report.k(v);
            report.h[v] < k - 0.02 * (k + slack)
        })
        .collect()
}
