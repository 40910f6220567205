//! Ground-truth surfaces: round spheres, spheroids, and convex surfaces of
//! revolution whose Gauss curvature vanishes at a pole or along a circle.
//!
//! Every generator returns the icosphere topology, the exact embedding, and
//! its induced metric, so the embedder always has a known global optimum.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingState;
use crate::mesh::{icosphere_with_points, MeshError, TriSphere};
use crate::metric::{angle_defect_curvature, IntrinsicCurvature, MetricError, MetricField};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Where the generated surface has vanishing Gauss curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatnessSpec {
    None,
    /// North cap `z ≈ 1 − r^{2m}/2`; K = 0 at the pole for `order ≥ 2`.
    FlatPole { order: u32 },
    /// Meridian curvature vanishes to second order on one latitude circle,
    /// placed at the given area-latitude (polar angle on the reference sphere).
    FlatCircle { polar_angle: f64 },
}

/// One half of a star-shaped meridian curve: `r^{2p} + |z/h|^{2q} = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HalfCurve {
    p: i32,
    q: i32,
    h: f64,
}

impl HalfCurve {
    fn level(&self, r: f64, z: f64) -> f64 {
        r.powi(2 * self.p) + (z / self.h).abs().powi(2 * self.q)
    }
}

/// Meridian of a convex surface of revolution about the z-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevolutionProfile {
    upper: HalfCurve,
    lower: HalfCurve,
    pub flatness: FlatnessSpec,
}

const TABLE_SIZE: usize = 20_000;

impl RevolutionProfile {
    pub fn new(flatness: FlatnessSpec) -> Result<Self, CorpusError> {
        let sphere = HalfCurve { p: 1, q: 1, h: 1.0 };
        let (upper, lower) = match flatness {
            FlatnessSpec::None => (sphere, sphere),
            FlatnessSpec::FlatPole { order } => {
                if !(1..=6).contains(&order) {
                    return Err(CorpusError::InvalidParameter(format!(
                        "flat pole order {order} outside 1..=6"
                    )));
                }
                // The lower ellipse matches the upper curve's meridian curvature 1/m
                // at the equator, so the profile is C³ there.
                let m = order as i32;
                (
                    HalfCurve { p: m, q: 1, h: 1.0 },
                    HalfCurve { p: 1, q: 1, h: (order as f64).sqrt() },
                )
            }
            FlatnessSpec::FlatCircle { polar_angle } => {
                if !(polar_angle > 0.2 && polar_angle < PI - 0.2) {
                    return Err(CorpusError::InvalidParameter(format!(
                        "flat circle polar angle {polar_angle} too close to a pole"
                    )));
                }
                let upper = HalfCurve { p: 1, q: 2, h: 1.0 };
                let target = 0.5 * (1.0 - polar_angle.cos());
                let lower_h = solve_lower_height(upper, target);
                (upper, HalfCurve { p: 1, q: 2, h: lower_h })
            }
        };
        Ok(RevolutionProfile { upper, lower, flatness })
    }

    /// Distance from the origin to the meridian along polar angle `theta`.
    pub fn radius_at(&self, theta: f64) -> f64 {
        let (s, c) = (theta.sin().abs(), theta.cos());
        let half = if c >= 0.0 { self.upper } else { self.lower };
        let mut hi = f64::INFINITY;
        if s > 0.0 {
            hi = hi.min(1.0 / s);
        }
        if c != 0.0 {
            hi = hi.min(half.h / c.abs());
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if half.level(mid * s, mid * c) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(r, z)` on the meridian at polar angle `theta ∈ [0, π]`.
    pub fn meridian_point(&self, theta: f64) -> (f64, f64) {
        let rho = self.radius_at(theta);
        (rho * theta.sin(), rho * theta.cos())
    }

    /// Cumulative surface-area fraction from the north pole, sampled uniformly in θ.
    fn area_table(&self) -> Vec<f64> {
        cumulative_area(|t| self.meridian_point(t))
    }
}

fn cumulative_area(point: impl Fn(f64) -> (f64, f64)) -> Vec<f64> {
    let mut cum = vec![0.0; TABLE_SIZE + 1];
    let mut prev = point(0.0);
    for k in 1..=TABLE_SIZE {
        let cur = point(PI * k as f64 / TABLE_SIZE as f64);
        let chord = ((cur.0 - prev.0).powi(2) + (cur.1 - prev.1).powi(2)).sqrt();
        cum[k] = cum[k - 1] + PI * (cur.0 + prev.0) * chord;
        prev = cur;
    }
    let total = cum[TABLE_SIZE];
    cum.iter_mut().for_each(|a| *a /= total);
    cum
}

fn solve_lower_height(upper: HalfCurve, target_fraction: f64) -> f64 {
    let fraction_above_equator = |h: f64| {
        let prof = RevolutionProfile {
            upper,
            lower: HalfCurve { p: 1, q: 2, h },
            flatness: FlatnessSpec::None,
        };
        prof.area_table()[TABLE_SIZE / 2]
    };
    // Fraction above the equator decreases as the lower half grows.
    let (mut lo, mut hi) = (0.05_f64, 20.0_f64);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if fraction_above_equator(mid) > target_fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

fn invert_table(table: &[f64], fraction: f64) -> f64 {
    if fraction <= 0.0 {
        return 0.0;
    }
    if fraction >= 1.0 {
        return PI;
    }
    let k = table.partition_point(|&a| a <= fraction).clamp(1, TABLE_SIZE);
    let (a0, a1) = (table[k - 1], table[k]);
    let t = if a1 > a0 { (fraction - a0) / (a1 - a0) } else { 0.0 };
    PI * ((k - 1) as f64 + t) / TABLE_SIZE as f64
}

/// A generated surface: topology, exact embedding, and induced metric.
#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub mesh: TriSphere,
    pub metric: MetricField,
    pub embedding: EmbeddingState,
    pub intrinsic: IntrinsicCurvature,
    /// Vertices with `K ≤ 1e-3 · sup K`.
    pub zero_set: Vec<usize>,
    /// `min K ≥ −1e-8 · sup K`. Fails on the flat circle, where the icosphere
    /// triangulation of the developable band has small negative angle defects.
    pub certified: bool,
}

impl CorpusSample {
    fn from_positions(mesh: TriSphere, positions: Vec<Vector3<f64>>) -> Result<Self, CorpusError> {
        let metric = MetricField::from_positions(&mesh, &positions)?;
        let intrinsic = angle_defect_curvature(&mesh, &metric)?;
        let sup_k = intrinsic.sup_k();
        let min_k = intrinsic.min_k();
        let certified = min_k >= -1e-8 * sup_k;
        if !certified {
            log::warn!("generated metric has min K {min_k:e} (sup K {sup_k}); not certified convex");
        }
        let zero_set = intrinsic
            .per_vertex_k
            .iter()
            .enumerate()
            .filter(|(_, &k)| k <= 1e-3 * sup_k)
            .map(|(v, _)| v)
            .collect();
        let embedding = EmbeddingState::exact(&mesh, &metric, positions);
        Ok(CorpusSample { mesh, metric, embedding, intrinsic, zero_set, certified })
    }
}

pub fn gen_round(level: u32, radius: f64) -> Result<CorpusSample, CorpusError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("radius {radius}")));
    }
    let (mesh, pts) = icosphere_with_points(level)?;
    CorpusSample::from_positions(mesh, pts.into_iter().map(|p| p * radius).collect())
}

/// Spheroid with semi-axes `(a, a, c)`, via the linear map of the unit icosphere.
pub fn gen_spheroid(level: u32, a: f64, c: f64) -> Result<CorpusSample, CorpusError> {
    if !(a > 0.0 && c > 0.0 && a.is_finite() && c.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("semi-axes a={a}, c={c}")));
    }
    let (mesh, pts) = icosphere_with_points(level)?;
    let pts = pts.into_iter().map(|p| Vector3::new(a * p.x, a * p.y, c * p.z)).collect();
    CorpusSample::from_positions(mesh, pts)
}

/// Convex surface of revolution with prescribed curvature degeneracy, sampled on
/// the icosphere by an area-equalizing latitude map, scaled by `scale`.
pub fn gen_flat_spot(
    level: u32,
    flatness: FlatnessSpec,
    scale: f64,
) -> Result<CorpusSample, CorpusError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CorpusError::InvalidParameter(format!("scale {scale}")));
    }
    let profile = RevolutionProfile::new(flatness)?;
    let table = profile.area_table();
    let (mesh, pts) = icosphere_with_points(level)?;
    let positions = pts
        .iter()
        .map(|p| {
            let theta = invert_table(&table, 0.5 * (1.0 - p.z));
            let phi = p.y.atan2(p.x);
            let (r, z) = profile.meridian_point(theta);
            Vector3::new(r * phi.cos(), r * phi.sin(), z) * scale
        })
        .collect();
    CorpusSample::from_positions(mesh, positions)
}

/// Generator selection used by the CLI and sweep configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Round { radius: f64 },
    Spheroid { a: f64, c: f64 },
    Flatspot { flatness: FlatnessSpec, scale: f64 },
}

pub fn generate(family: &Family, level: u32) -> Result<CorpusSample, CorpusError> {
    match *family {
        Family::Round { radius } => gen_round(level, radius),
        Family::Spheroid { a, c } => gen_spheroid(level, a, c),
        Family::Flatspot { flatness, scale } => gen_flat_spot(level, flatness, scale),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_defect_ok(s: &CorpusSample) {
        assert!((s.intrinsic.total_defect() - 4.0 * PI).abs() <= 1e-9 * 4.0 * PI);
    }

    #[test]
    fn round_curvature() {
        let s = gen_round(4, 1.0).unwrap();
        assert!(s.intrinsic.per_vertex_k.iter().all(|k| (0.97..=1.03).contains(k)));
        assert_eq!(s.embedding.residual, 0.0);
        total_defect_ok(&s);
        let s2 = gen_round(4, 2.0).unwrap();
        assert!(s2.intrinsic.per_vertex_k.iter().all(|k| (k - 0.25).abs() < 0.03 * 0.25));
    }

    #[test]
    fn spheroid_pole_and_equator() {
        let s = gen_spheroid(4, 1.0, 2.0).unwrap();
        total_defect_ok(&s);
        let k = &s.intrinsic.per_vertex_k;
        assert!((k[0] - 4.0).abs() < 0.03 * 4.0, "pole K {}", k[0]);
        let pts = &s.embedding.positions;
        let eq: Vec<f64> = (0..pts.len()).filter(|&v| pts[v].z.abs() < 1e-12).map(|v| k[v]).collect();
        assert!(!eq.is_empty());
        for kv in eq {
            assert!((kv - 0.25).abs() < 0.03 * 0.25, "equator K {kv}");
        }
    }

    #[test]
    fn spheroid_reduces_to_round() {
        let a = gen_spheroid(3, 1.0, 1.0).unwrap();
        let b = gen_round(3, 1.0).unwrap();
        assert_eq!(a.embedding.positions, b.embedding.positions);
    }

    #[test]
    fn flat_pole_curvature_vanishes_at_pole() {
        let s = gen_flat_spot(4, FlatnessSpec::FlatPole { order: 2 }, 1.0).unwrap();
        total_defect_ok(&s);
        let sup = s.intrinsic.sup_k();
        let k = &s.intrinsic.per_vertex_k;
        assert!(k[0] < 1e-3 * sup, "pole K {} sup {sup}", k[0]);
        assert!(s.zero_set.contains(&0));
        let pts = &s.embedding.positions;
        let top = pts[0].z;
        // Outside the flat cap every vertex is strictly curved.
        for v in 0..pts.len() {
            if pts[v].z < top - 0.25 {
                assert!(k[v] > 0.0);
            }
        }
        assert!(s.intrinsic.min_k() >= -1e-8 * sup);
        assert!(s.certified);
    }

    #[test]
    fn flat_circle_on_equator() {
        let s = gen_flat_spot(4, FlatnessSpec::FlatCircle { polar_angle: PI / 2.0 }, 1.0).unwrap();
        total_defect_ok(&s);
        let sup = s.intrinsic.sup_k();
        let k = &s.intrinsic.per_vertex_k;
        let pts = &s.embedding.positions;
        for v in 0..pts.len() {
            if pts[v].z.abs() < 1e-12 {
                assert!(k[v].abs() < 2e-2 * sup, "equator K {} sup {sup}", k[v]);
            } else {
                assert!(k[v] > 0.0);
            }
        }
        // The ring itself carries small negative defects on this triangulation.
        assert!(!s.certified);
    }

    #[test]
    fn no_flatness_is_strictly_elliptic_and_matches_spheroid() {
        let s = gen_flat_spot(3, FlatnessSpec::None, 1.0).unwrap();
        assert!(s.intrinsic.min_k() > 0.0);
        let r = gen_spheroid(3, 1.0, 1.0).unwrap();
        for (p, q) in s.embedding.positions.iter().zip(&r.embedding.positions) {
            assert!((p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn points_lie_on_profile() {
        let prof = RevolutionProfile::new(FlatnessSpec::FlatPole { order: 3 }).unwrap();
        for k in 0..=50 {
            let t = PI * k as f64 / 50.0;
            let (r, z) = prof.meridian_point(t);
            let half = if t.cos() >= 0.0 { prof.upper } else { prof.lower };
            assert!((half.level(r, z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_circle_off_equator_area_fraction() {
        let t0 = 1.2;
        let prof = RevolutionProfile::new(FlatnessSpec::FlatCircle { polar_angle: t0 }).unwrap();
        let frac = prof.area_table()[TABLE_SIZE / 2];
        assert!((frac - 0.5 * (1.0 - t0.cos())).abs() < 1e-6);
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_round(2, -1.0).is_err());
        assert!(gen_spheroid(2, 0.0, 1.0).is_err());
        assert!(gen_flat_spot(2, FlatnessSpec::FlatPole { order: 0 }, 1.0).is_err());
        assert!(gen_flat_spot(2, FlatnessSpec::FlatCircle { polar_angle: 0.01 }, 1.0).is_err());
    }
}
