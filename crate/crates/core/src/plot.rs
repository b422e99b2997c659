//! Static SVG line charts for learning-rate traces and metric curves.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

/// One chart, x = index (epoch), shared y axis. Non-finite points are
/// skipped; `log_y` plots log10 of positive values.
pub fn line_chart(title: &str, y_label: &str, series: &[Series<'_>], log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.log10() } else { v };
    let pts: Vec<Vec<(usize, f64)>> = series
        .iter()
        .map(|s| {
            s.values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite() && (!log_y || **v > 0.0))
                .map(|(i, &v)| (i, tf(v)))
                .collect()
        })
        .collect();
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let all = pts.iter().flatten().map(|p| p.1);
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1) as f64;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let ylab = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(&ylab)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, W / 2.0, H - 12.0);
    for (v, y) in [(lo, H - PAD), (hi, PAD)] {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.3e}</text>"#, PAD - 4.0, y + 4.0, v);
    }
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let coords: Vec<String> = p.iter().map(|&(i, v)| format!("{:.1},{:.1}", sx(i), sy(v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{colour}" text-anchor="end">{}</text>"#,
            W - PAD,
            PAD + 14.0 * (k as f64 + 1.0),
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
