//! Small hand-rolled SVG writers for heatmaps and box plots.

use std::fmt::Write;

use super::stats::BoxStats;

const LOW: [f64; 3] = [68.0, 1.0, 84.0];
const MID: [f64; 3] = [33.0, 145.0, 140.0];
const HIGH: [f64; 3] = [253.0, 231.0, 37.0];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (a, b, s) = if t < 0.5 { (LOW, MID, t * 2.0) } else { (MID, HIGH, t * 2.0 - 1.0) };
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * s).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Row-major `rows × cols` matrix as a heatmap on a linear colour scale.
/// The value range is recorded in the `<desc>` element.
pub fn heatmap(title: &str, data: &[f64], rows: usize, cols: usize) -> String {
    let cell = (480 / rows.max(cols)).max(2);
    let (w, h) = (cols * cell, rows * cell);
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w + 20,
        h + 40,
        w + 20,
        h + 40
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<desc>min={min:e} max={max:e} scale=linear</desc>");
    let _ = writeln!(s, r#"<text x="10" y="16" font-family="monospace" font-size="12">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<g transform="translate(10,28)" shape-rendering="crispEdges">"#);
    for i in 0..rows {
        for j in 0..cols {
            let v = data[i * cols + j];
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                j * cell,
                i * cell,
                color(if max > min { (v - min) / span } else { 0.5 })
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Box plots on a log10 axis, one per labelled series.
pub fn box_plot(title: &str, series: &[(String, BoxStats)]) -> String {
    let floor = 1e-16;
    let logs = |v: f64| v.max(floor).log10();
    let lo = series.iter().map(|(_, b)| logs(b.min)).fold(f64::INFINITY, f64::min).floor();
    let hi = series.iter().map(|(_, b)| logs(b.max)).fold(f64::NEG_INFINITY, f64::max).ceil();
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let (plot_h, slot) = (300.0, 60.0);
    let width = 70.0 + slot * series.len() as f64;
    let y = |v: f64| 30.0 + plot_h * (hi - logs(v)) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {width} {}">"#,
        plot_h + 70.0,
        plot_h + 70.0
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<text x="10" y="18" font-family="monospace" font-size="12">{}</text>"#, escape(title));
    let mut e = lo as i64;
    while e <= hi as i64 {
        let yy = y(10f64.powi(e as i32));
        let _ = writeln!(
            s,
            r##"<line x1="50" x2="{width}" y1="{yy:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="4" y="{:.2}" font-family="monospace" font-size="10">1e{e}</text>"##,
            yy + 3.0
        );
        e += 1;
    }
    for (k, (label, b)) in series.iter().enumerate() {
        let cx = 60.0 + slot * (k as f64 + 0.5);
        let (x0, x1) = (cx - 15.0, cx + 15.0);
        let _ = writeln!(
            s,
            r#"<line x1="{cx}" x2="{cx}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.max),
            y(b.min)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{x0}" y="{:.2}" width="30" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" x2="{x1}" y1="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            y(b.median),
            y(b.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" font-family="monospace" font-size="11">{}</text>"#,
            cx - 12.0,
            plot_h + 50.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
