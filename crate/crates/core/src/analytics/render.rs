//! CSV tables and SVG figures.

use std::fmt::Write as _;

use super::{lattice_points, simplex_position, AccuracyMatrix, ShiftSet, SummaryRow, TernaryGrid};
use crate::analytics::Region;

/// `original,target,correct,total,accuracy`, one line per off-diagonal cell.
pub fn accuracy_matrix_csv(matrix: &AccuracyMatrix) -> String {
    let mut out = String::from("original,target,correct,total,accuracy\n");
    for ((l, t), cell) in matrix.cells() {
        let acc = cell.accuracy().map(|a| format!("{a:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{l},{t},{},{},{acc}", cell.correct, cell.total);
    }
    out
}

/// Square layout as printed in papers: rows `l`, columns `l′`, `-` on the
/// diagonal.
pub fn accuracy_matrix_grid_csv(matrix: &AccuracyMatrix) -> String {
    let labels = matrix.task.labels();
    let mut out = String::from("l\\l'");
    for t in labels {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for &l in labels {
        out.push_str(l.as_str());
        for &t in labels {
            let v = match matrix.cell(l, t).and_then(|c| c.accuracy()) {
                Some(a) => format!("{a:.2}"),
                None => "-".into(),
            };
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("model_id,view,correct,total,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.4}", r.model_id, r.view, r.correct, r.total, r.accuracy);
    }
    out
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

fn color(t: f64) -> String {
    // Light-to-dark blue ramp.
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Scatter plot with the diagonal and the 0.5 quadrant lines.
pub fn shift_scatter_svg(set: &ShiftSet, title: &str) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let px = |v: f64| MARGIN + v * SIZE;
    let py = |v: f64| MARGIN + (1.0 - v) * SIZE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ccc"/><line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ccc"/>"##,
        px(0.5),
        py(0.0),
        px(0.5),
        py(1.0),
        px(0.0),
        py(0.5),
        px(1.0),
        py(0.5)
    );
    for p in &set.points {
        let fill = match p.region {
            Region::AboveDiagonal => "#2b8cbe",
            Region::BelowDiagonal => "#e34a33",
            Region::OnDiagonal => "#636363",
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}" fill-opacity="0.6"/>"#,
            px(p.x),
            py(p.y)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, full / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
        full / 2.0,
        full - 10.0,
        escape(&set.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" text-anchor="middle" font-size="11" transform="rotate(-90 12 {})">{}</text>"#,
        full / 2.0,
        full / 2.0,
        escape(&set.y_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Heatmap over the simplex triangle; each lattice cell is drawn as a
/// hexagon shaded by its smoothed mass.
pub fn ternary_svg(grid: &TernaryGrid, title: &str) -> String {
    let full_w = SIZE + 2.0 * MARGIN;
    let full_h = SIZE * 0.866_025_403_784_438_6 + 2.0 * MARGIN;
    let map = |x: f64, y: f64| (MARGIN + x * SIZE, full_h - MARGIN - y * SIZE);
    let r = grid.resolution as f64;
    let peak = grid.mass.iter().copied().fold(0.0, f64::max);
    let radius = SIZE / r / 3f64.sqrt();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full_w}" height="{full_h:.2}" viewBox="0 0 {full_w} {full_h:.2}">"#
    );
    for (bin, &m) in lattice_points(grid.resolution).iter().zip(&grid.mass) {
        let (x, y) = simplex_position(bin.map(|v| v as f64 / r));
        let (cx, cy) = map(x, y);
        let pts: Vec<String> = (0..6)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_3 * k as f64 + std::f64::consts::FRAC_PI_6;
                format!("{:.2},{:.2}", cx + radius * a.cos(), cy + radius * a.sin())
            })
            .collect();
        let t = if peak > 0.0 { m / peak } else { 0.0 };
        let _ = writeln!(s, r#"<polygon points="{}" fill="{}"/>"#, pts.join(" "), color(t));
    }
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.5, 0.866_025_403_784_438_6)];
    let outline: Vec<String> = corners
        .iter()
        .map(|&(x, y)| {
            let (a, b) = map(x, y);
            format!("{a:.2},{b:.2}")
        })
        .collect();
    let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="black"/>"#, outline.join(" "));
    for (&(x, y), label) in corners.iter().zip(&grid.labels) {
        let (a, b) = map(x, y);
        let dy = if y > 0.0 { -8.0 } else { 16.0 };
        let _ = writeln!(
            s,
            r#"<text x="{a:.2}" y="{:.2}" text-anchor="middle" font-size="12">{label}</text>"#,
            b + dy
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle" font-size="14">{}</text>"#, full_w / 2.0, escape(title));
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
