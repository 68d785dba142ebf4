//! CSV and SVG emission for reports and decompositions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::harness::{ConvergenceReport, ExperimentKind, LevelResult};

pub const REPORT_HEADER: [&str; 9] = [
    "level",
    "N",
    "M",
    "h",
    "rel_err_full",
    "rel_err_div",
    "rel_err_curl",
    "residual",
    "seconds",
];

pub const PARTS_HEADER: [&str; 8] = [
    "level",
    "N",
    "M",
    "h",
    "rel_err_normal",
    "rel_err_leray",
    "rel_err_harmonic",
    "sum_residual",
];

pub const DECOMPOSITION_HEADER: [&str; 10] = ["x", "y", "sx", "sy", "divx", "divy", "curlx", "curly", "psi", "q"];

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `level,N,M,h,rel_err_full,rel_err_div,rel_err_curl,residual,seconds`.
pub fn write_report_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<()> {
    let rows = report.levels.iter().map(|l| {
        vec![
            l.level.to_string(),
            l.n.to_string(),
            l.m.to_string(),
            num(l.h),
            num(l.rel_err_full),
            num(l.rel_err_div),
            num(l.rel_err_curl),
            num(l.residual),
            num(if report.timing { l.seconds } else { 0.0 }),
        ]
    });
    write_rows(path.as_ref(), &REPORT_HEADER, rows)
}

/// Reads a report CSV back into level results (part-specific columns unset).
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<LevelResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |col: usize| Error::Parse {
            path: path.display().to_string(),
            line: k + 2,
            msg: format!("invalid value in column {}", REPORT_HEADER[col]),
        };
        let f = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let u = |col: usize| rec[col].parse::<usize>().map_err(|_| bad(col));
        out.push(LevelResult {
            level: u(0)?,
            n: u(1)?,
            m: u(2)?,
            h: f(3)?,
            rel_err_full: f(4)?,
            rel_err_div: f(5)?,
            rel_err_curl: f(6)?,
            rel_err_harmonic: None,
            residual: f(7)?,
            sum_residual: None,
            seconds: f(8)?,
        });
    }
    Ok(out)
}

/// Per-part errors of the two-step study.
pub fn write_parts_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> Result<()> {
    let rows = report.levels.iter().map(|l| {
        vec![
            l.level.to_string(),
            l.n.to_string(),
            l.m.to_string(),
            num(l.h),
            num(l.rel_err_curl),
            num(l.rel_err_div),
            num(l.rel_err_harmonic.unwrap_or(f64::NAN)),
            num(l.sum_residual.unwrap_or(f64::NAN)),
        ]
    });
    write_rows(path.as_ref(), &PARTS_HEADER, rows)
}

/// One evaluated row of the decomposition output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSample {
    pub point: [f64; 2],
    pub full: [f64; 2],
    pub div: [f64; 2],
    pub curl: [f64; 2],
    pub psi: f64,
    pub q: f64,
}

/// Writes `x,y,sx,sy,divx,divy,curlx,curly,psi,q`.
pub fn write_decomposition_csv(samples: &[DecompositionSample], path: impl AsRef<Path>) -> Result<()> {
    let rows = samples.iter().map(|s| {
        [s.point, s.full, s.div, s.curl]
            .iter()
            .flatten()
            .chain([&s.psi, &s.q])
            .map(|v| num(*v))
            .collect()
    });
    write_rows(path.as_ref(), &DECOMPOSITION_HEADER, rows)
}

/// Two-step decomposition samples: parts and their potentials.
pub fn write_hhd_csv(rows: &[([f64; 2], [[f64; 2]; 3], [f64; 3])], path: impl AsRef<Path>) -> Result<()> {
    let header = [
        "x", "y", "normalx", "normaly", "lerayx", "lerayy", "harmonicx", "harmonicy", "q_normal", "psi_leray",
        "q_harmonic",
    ];
    let rows = rows.iter().map(|(p, parts, pots)| {
        p.iter()
            .chain(parts.iter().flatten())
            .chain(pots)
            .map(|v| num(*v))
            .collect()
    });
    write_rows(path.as_ref(), &header, rows)
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log plot of error against `h` with a slope-5.5 reference line.
pub fn loglog_svg(report: &ConvergenceReport) -> String {
    let (w, hgt, pad) = (640.0, 480.0, 60.0);
    let mut out = String::new();
    svg_open(&mut out, w, hgt);
    let mut series: Vec<(&str, &str, Vec<(f64, f64)>)> = vec![
        ("full", "#1f77b4", report.levels.iter().map(|l| (l.h, l.rel_err_full)).collect()),
        ("div", "#d62728", report.levels.iter().map(|l| (l.h, l.rel_err_div)).collect()),
        ("curl", "#2ca02c", report.levels.iter().map(|l| (l.h, l.rel_err_curl)).collect()),
    ];
    if report.kind == ExperimentKind::FullHhd {
        series[1].0 = "leray";
        series[2].0 = "normal";
        series.push((
            "harmonic",
            "#9467bd",
            report
                .levels
                .iter()
                .filter_map(|l| l.rel_err_harmonic.map(|e| (l.h, e)))
                .collect(),
        ));
    }
    for s in &mut series {
        s.2.retain(|(h, e)| *h > 0.0 && *e > 0.0 && e.is_finite());
    }
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.2.iter().copied()).collect();
    let title = format!("{} (eps = {})", report.kind.name(), report.eps);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        hgt - 2.0 * pad
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">h</text>"#,
        w / 2.0,
        hgt - 20.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">relative l2 error</text>"#,
        hgt / 2.0,
        hgt / 2.0
    );
    if !pts.is_empty() {
        let lx = |h: f64| h.log10();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (h, e) in &pts {
            x0 = x0.min(lx(*h));
            x1 = x1.max(lx(*h));
            y0 = y0.min(e.log10());
            y1 = y1.max(e.log10());
        }
        // room for the reference line
        let anchor = series.iter().find(|s| !s.2.is_empty()).map(|s| s.2[0]).unwrap();
        let ref_end = anchor.1 * (10f64.powf(x0) / anchor.0).powf(5.5);
        y0 = y0.min(ref_end.log10());
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |h: f64| pad + (lx(h) - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |e: f64| hgt - pad - (e.log10() - y0) / (y1 - y0) * (hgt - 2.0 * pad);
        for decade in (y0.floor() as i32)..=(y1.ceil() as i32) {
            let e = 10f64.powi(decade);
            if e.log10() < y0 || e.log10() > y1 {
                continue;
            }
            let _ = writeln!(
                out,
                r##"<line x1="{pad}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">1e{decade}</text>"##,
                w - pad,
                pad - 4.0,
                sy(e) + 3.0,
                y = sy(e)
            );
        }
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555555" stroke-dasharray="6,4"/>"##,
            sx(anchor.0),
            sy(anchor.1),
            sx(10f64.powf(x0)),
            sy(ref_end)
        );
        for (k, (name, color, s)) in series.iter().enumerate() {
            let path: Vec<String> = s.iter().map(|(h, e)| format!("{:.2},{:.2}", sx(*h), sy(*e))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (h, e) in s {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(*h), sy(*e));
            }
            let ly = pad + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"#,
                w - pad - 70.0
            );
        }
        let ly = pad + 16.0 + 16.0 * series.len() as f64;
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="#555555">slope 5.5</text>"##,
            w - pad - 70.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Arrow plot of a 2D field over `domain` with contours of a scalar
/// potential, sampled on a `grid × grid` lattice of the bounding box.
pub fn quiver_contour_svg(
    domain: &DomainSpec,
    title: &str,
    grid: usize,
    eval: impl Fn(&[f64]) -> ([f64; 2], f64),
) -> String {
    let grid = grid.max(4);
    let size = 600.0;
    let extent = domain.bounding_radius() * 1.05;
    let step = 2.0 * extent / grid as f64;
    let to_px = |x: f64, y: f64| ((x + extent) / (2.0 * extent) * size, (extent - y) / (2.0 * extent) * size);
    let mut values = vec![None; (grid + 1) * (grid + 1)];
    let mut vmax = 0.0f64;
    let (mut qmin, mut qmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..=grid {
        for i in 0..=grid {
            let p = [-extent + i as f64 * step, -extent + j as f64 * step];
            if domain.contains(&p) {
                let (v, q) = eval(&p);
                vmax = vmax.max(v[0].hypot(v[1]));
                qmin = qmin.min(q);
                qmax = qmax.max(q);
                values[j * (grid + 1) + i] = Some((v, q));
            }
        }
    }
    let mut out = String::new();
    svg_open(&mut out, size, size + 30.0);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        size / 2.0,
        size + 20.0,
        escape(title)
    );
    for s in [0.0, 1.0] {
        let n = 256;
        let pts: Vec<String> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let r = if s == 0.0 { domain.inner_radius } else { domain.outer_radius_at(t) };
                let (px, py) = to_px(r * t.cos(), r * t.sin());
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="none" stroke="black"/>"#, pts.join(" "));
    }

    // marching squares on cells whose four corners lie in the domain
    if qmax > qmin {
        let levels = 14;
        for l in 1..levels {
            let level = qmin + (qmax - qmin) * l as f64 / levels as f64;
            let mut segs = String::new();
            for j in 0..grid {
                for i in 0..grid {
                    let idx = |a: usize, b: usize| values[b * (grid + 1) + a];
                    let corners = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
                    if corners.iter().any(Option::is_none) {
                        continue;
                    }
                    let q: Vec<f64> = corners.iter().map(|c| c.unwrap().1).collect();
                    let xy = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                    let mut crossings = Vec::with_capacity(4);
                    for e in 0..4 {
                        let (a, b) = (e, (e + 1) % 4);
                        if (q[a] < level) != (q[b] < level) {
                            let t = (level - q[a]) / (q[b] - q[a]);
                            let xa = -extent + xy[a].0 as f64 * step;
                            let ya = -extent + xy[a].1 as f64 * step;
                            let xb = -extent + xy[b].0 as f64 * step;
                            let yb = -extent + xy[b].1 as f64 * step;
                            crossings.push(to_px(xa + t * (xb - xa), ya + t * (yb - ya)));
                        }
                    }
                    for pair in crossings.chunks_exact(2) {
                        let _ = write!(
                            segs,
                            "M{:.2} {:.2}L{:.2} {:.2}",
                            pair[0].0, pair[0].1, pair[1].0, pair[1].1
                        );
                    }
                }
            }
            if !segs.is_empty() {
                let _ = writeln!(out, r##"<path d="{segs}" fill="none" stroke="#7f7fbf" stroke-width="0.8"/>"##);
            }
        }
    }

    if vmax > 0.0 {
        let stride = (grid / 30).max(1);
        let scale = 0.9 * step * stride as f64 / vmax;
        let mut arrows = String::new();
        for j in (0..=grid).step_by(stride) {
            for i in (0..=grid).step_by(stride) {
                if let Some((v, _)) = values[j * (grid + 1) + i] {
                    let (x, y) = (-extent + i as f64 * step, -extent + j as f64 * step);
                    let (x0, y0) = to_px(x, y);
                    let (x1, y1) = to_px(x + scale * v[0], y + scale * v[1]);
                    let (dx, dy) = (x1 - x0, y1 - y0);
                    let len = dx.hypot(dy);
                    let _ = write!(arrows, "M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}");
                    if len > 1.0 {
                        let (ux, uy) = (dx / len, dy / len);
                        let head = 0.3 * len;
                        let _ = write!(
                            arrows,
                            "M{:.2} {:.2}L{x1:.2} {y1:.2}L{:.2} {:.2}",
                            x1 - head * (ux - 0.5 * uy),
                            y1 - head * (uy + 0.5 * ux),
                            x1 - head * (ux + 0.5 * uy),
                            y1 - head * (uy - 0.5 * ux)
                        );
                    }
                }
            }
        }
        let _ = writeln!(out, r#"<path d="{arrows}" fill="none" stroke="black" stroke-width="1"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv` and `convergence.svg` (plus `parts.csv` for the
/// two-step study) into `dir`, returning the paths written.
pub fn emit_outputs(report: &ConvergenceReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv_path = dir.join("report.csv");
    write_report_csv(report, &csv_path)?;
    written.push(csv_path);
    if report.kind == ExperimentKind::FullHhd {
        let parts = dir.join("parts.csv");
        write_parts_csv(report, &parts)?;
        written.push(parts);
    }
    let svg = dir.join("convergence.svg");
    write_text(&svg, &loglog_svg(report))?;
    written.push(svg);
    Ok(written)
}
