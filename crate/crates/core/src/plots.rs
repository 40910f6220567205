//! Plot data and SVG charts for a verified sweep.
//!
//! SVG is written by hand with a fixed viewport and element order, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::io::{self, IoError, LoadedSweep, MANIFEST_FILE, PLOTS_DIR, VERDICT_FILE};
use crate::verify::Verdict;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log => v.log10(),
        }
    }

    fn admits(self, v: f64) -> bool {
        v.is_finite() && (self == Scale::Linear || v > 0.0)
    }
}

struct Series {
    points: Vec<(f64, f64)>,
    line: bool,
    color: &'static str,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_scale: Scale,
    y_scale: Scale,
    series: Vec<Series>,
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo > 1e-12 * hi.abs().max(1.0) {
        let pad = 0.05 * (hi - lo);
        Some((lo - pad, hi + pad))
    } else {
        let pad = 0.5 * lo.abs().max(1e-3);
        Some((lo - pad, hi + pad))
    }
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Log => format!("{:.3e}", 10f64.powf(v)),
        Scale::Linear => format!("{v:.4}"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn render(&self) -> String {
        let visible: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| self.x_scale.admits(*x) && self.y_scale.admits(*y))
                    .map(|&(x, y)| (self.x_scale.map(x), self.y_scale.map(y)))
                    .collect()
            })
            .collect();
        let xr = range(visible.iter().flatten().map(|p| p.0)).unwrap_or((0.0, 1.0));
        let yr = range(visible.iter().flatten().map(|p| p.1)).unwrap_or((0.0, 1.0));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - xr.0) / (xr.1 - xr.0) * plot_w;
        let py = |y: f64| MARGIN_TOP + plot_h - (y - yr.0) / (yr.1 - yr.0) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = xr.0 + t * (xr.1 - xr.0);
            let yv = yr.0 + t * (yr.1 - yr.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(xv),
                HEIGHT - MARGIN_BOTTOM + 16.0,
                tick_label(xv, self.x_scale)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                py(yv) + 4.0,
                tick_label(yv, self.y_scale)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (s, pts) in self.series.iter().zip(&visible) {
            if s.line && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                    s.color,
                    path.join(" ")
                );
            }
            if !s.line || pts.len() == 1 {
                for &(x, y) in pts {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, px(x), py(y), s.color);
                }
            } else {
                for &(x, y) in pts {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, px(x), py(y), s.color);
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

fn xy_rows(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points.iter().map(|&(x, y)| vec![x, y]).collect()
}

struct Emitter<'a> {
    dir: &'a Path,
    written: Vec<(String, String)>,
}

impl Emitter<'_> {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let hash = io::write_atomic(&self.dir.join(name), bytes)?;
        self.written.push((name.to_string(), hash));
        Ok(())
    }

    fn epsilon_series(&mut self, stem: &str, y_name: &str, title: &str, points: Vec<(f64, f64)>) -> Result<(), IoError> {
        if points.is_empty() {
            log::warn!("series {stem} has no points; skipped");
            return Ok(());
        }
        self.put(&format!("{stem}.csv"), &csv_bytes(&["epsilon", y_name], &xy_rows(&points)))?;
        let chart = Chart {
            title: title.to_string(),
            x_label: "epsilon".to_string(),
            y_label: y_name.to_string(),
            x_scale: Scale::Log,
            y_scale: Scale::Linear,
            series: vec![Series { points, line: true, color: "#1f5fa8" }],
        };
        self.put(&format!("{stem}.svg"), chart.render().as_bytes())
    }
}

/// Number of samples on the reference curve.
const CURVE_SAMPLES: usize = 64;

/// Writes every series into `plots_dir`. Returns `(file name, sha256)` pairs in
/// write order.
pub fn emit_plots_for(sweep: &LoadedSweep, verdict: &Verdict, plots_dir: &Path) -> Result<Vec<(String, String)>, IoError> {
    let mut em = Emitter { dir: plots_dir, written: Vec::new() };
    let eps_points = |f: &dyn Fn(usize) -> Option<f64>| -> Vec<(f64, f64)> {
        verdict.epsilons.iter().enumerate().filter_map(|(i, &e)| f(i).map(|y| (e, y))).collect()
    };
    em.epsilon_series("max_h", "max_H", "max H over vertices", eps_points(&|i| Some(verdict.dichotomy[i].max_h)))?;
    em.epsilon_series(
        "max_hk",
        "max_Hk",
        "max H k over vertices",
        eps_points(&|i| Some(verdict.dichotomy[i].all_vertices.max_hk)),
    )?;
    em.epsilon_series("harnack", "inf_ratio", "inf patch ratio min W / max W on D0", eps_points(&|i| verdict.harnack[i].inf_ratio))?;
    em.epsilon_series(
        "total_mean_curvature",
        "total_H",
        "total mean curvature",
        verdict.total_curvature.trace.clone(),
    )?;

    // (κ₁, κ₂) at the smallest ε with the rate reference curve.
    let last = sweep
        .members
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.epsilon.total_cmp(&b.1.epsilon))
        .map(|(i, m)| (i, m));
    let c0 = verdict.rate.last().map(|r| r.c0_bound);
    match (last, c0) {
        (Some((_, m)), Some(c0)) => {
            let r = &m.report;
            let rows: Vec<Vec<f64>> =
                (0..r.len()).map(|v| vec![m.epsilon, v as f64, r.kappa1[v], r.kappa2[v]]).collect();
            em.put("kappa_scatter.csv", &csv_bytes(&["epsilon", "vertex_id", "kappa1", "kappa2"], &rows))?;
            let points: Vec<(f64, f64)> = (0..r.len()).map(|v| (r.kappa1[v], r.kappa2[v])).collect();
            let positive: Vec<f64> = r.kappa1.iter().copied().filter(|&k| k > 0.0).collect();
            let mut curve = Vec::new();
            if let (Some(lo), Some(hi)) = (
                positive.iter().copied().reduce(f64::min),
                positive.iter().copied().reduce(f64::max),
            ) {
                let (a, b) = (lo.log10(), hi.log10());
                for i in 0..CURVE_SAMPLES {
                    let k1 = 10f64.powf(a + (b - a) * i as f64 / (CURVE_SAMPLES - 1) as f64);
                    curve.push((k1, c0 / k1.cbrt()));
                }
            }
            em.put("rate_reference.csv", &csv_bytes(&["kappa1", "kappa2_bound"], &xy_rows(&curve)))?;
            let chart = Chart {
                title: format!("principal curvatures at epsilon {:e}, C0 = {c0:.6}", m.epsilon),
                x_label: "kappa1".to_string(),
                y_label: "kappa2".to_string(),
                x_scale: Scale::Log,
                y_scale: Scale::Log,
                series: vec![
                    Series { points, line: false, color: "#1f5fa8" },
                    Series { points: curve, line: true, color: "#b03030" },
                ],
            };
            em.put("kappa_scatter.svg", chart.render().as_bytes())?;
        }
        _ => log::warn!("no sweep members; kappa scatter skipped"),
    }
    Ok(em.written)
}

/// Emits plots for a sweep directory. A directory without a manifest or
/// verdict yields a warning and no files.
pub fn emit_plots(sweep_dir: &Path) -> Result<Vec<(String, String)>, IoError> {
    if !sweep_dir.join(MANIFEST_FILE).exists() {
        log::warn!("{}: no sweep manifest; nothing to plot", sweep_dir.display());
        return Ok(Vec::new());
    }
    let verdict_path = sweep_dir.join(VERDICT_FILE);
    if !verdict_path.exists() {
        log::warn!("{}: no verdict; run verify first", sweep_dir.display());
        return Ok(Vec::new());
    }
    let sweep = io::load_sweep(sweep_dir)?;
    let verdict: Verdict = io::read_json(&verdict_path)?;
    emit_plots_for(&sweep, &verdict, &sweep_dir.join(PLOTS_DIR))
}
