//! Minimal SVG line charts and heatmaps. Output depends only on the inputs,
//! so identical data renders to identical bytes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

/// Padded `(lo, hi)` covering `values`; a single value gets a unit span.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#444"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick(xv));
        let _ = writeln!(out, r##"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="#444"/>"##, LEFT - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().filter(|p| p.1.is_finite()).map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        }
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted as x,y");
            let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 18.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// `values[row][col]`; `None` cells are drawn grey.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, cols: &[String], rows: &[String], values: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let (cw, rh) = (pw / cols.len().max(1) as f64, ph / rows.len().max(1) as f64);
    let (lo, hi) = range(values.iter().flatten().flatten().copied());
    let (lo, hi) = if values.iter().flatten().flatten().count() > 1 { (lo, hi) } else { (lo.min(0.0), hi.max(1.0)) };
    let color = |v: f64| {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let r = (247.0 - t * (247.0 - 8.0)) as u8;
        let g = (251.0 - t * (251.0 - 69.0)) as u8;
        let b = (255.0 - t * (255.0 - 148.0)) as u8;
        format!("#{r:02x}{g:02x}{b:02x}")
    };
    for (i, row) in values.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let (x, y) = (LEFT + j as f64 * cw, TOP + i as f64 * rh);
            let fill = cell.map_or("#cccccc".to_string(), color);
            let _ = writeln!(out, r##"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{rh:.1}" fill="{fill}" stroke="#fff"/>"##);
            if let Some(v) = cell {
                let ink = if (v - lo) / (hi - lo) > 0.6 { "white" } else { "black" };
                let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{v:.3}</text>"#, x + cw / 2.0, y + rh / 2.0 + 4.0);
            }
        }
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + (j as f64 + 0.5) * cw, TOP + ph + 18.0, escape(c));
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 8.0, TOP + (i as f64 + 0.5) * rh + 4.0, escape(r));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    let lx = W - RIGHT + 20.0;
    for k in 0..=4 {
        let v = lo + (hi - lo) * (4 - k) as f64 / 4.0;
        let y = TOP + k as f64 * 24.0;
        let _ = writeln!(out, r##"<rect x="{lx:.1}" y="{y:.1}" width="16" height="16" fill="{}" stroke="#888"/>"##, color(v));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 22.0, y + 12.0, tick(v));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_chart_renders() {
        let s = line_chart("t", "x", "y", &[Series { name: "a".into(), points: vec![(1.0, 0.5)] }]);
        assert!(s.contains("<circle") && !s.contains("NaN") && s.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_chart_renders() {
        let s = line_chart("t", "x", "y", &[]);
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }

    #[test]
    fn heatmap_marks_missing_cells() {
        let s = heatmap("t", "x", "y", &["a".into(), "b".into()], &["r".into()], &[vec![Some(0.3), None]]);
        assert!(s.contains("#cccccc") && s.contains("0.300"));
    }

    #[test]
    fn labels_are_escaped() {
        let s = line_chart("a<b", "x&y", "y", &[]);
        assert!(s.contains("a&lt;b") && s.contains("x&amp;y"));
    }
}
