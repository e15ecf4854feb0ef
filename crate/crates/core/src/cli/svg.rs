//! Minimal self-contained SVG line plot of sparsity curves.

use std::fmt::Write as _;

use crate::pruning::SparsityCurve;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn x_of(f: f64) -> f64 {
    LEFT + f * (W - LEFT - RIGHT)
}

fn y_of(a: f64) -> f64 {
    H - BOTTOM - a * (H - TOP - BOTTOM)
}

/// Accuracy (0..1) against removed fraction (0..1), one polyline per curve.
pub fn curves_svg(title: &str, curves: &[SparsityCurve]) -> String {
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    )
    .unwrap();
    let (x0, x1, y0, y1) = (x_of(0.0), x_of(1.0), y_of(0.0), y_of(1.0));
    writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#).unwrap();
    s.push_str(r#"<g font-family="sans-serif" font-size="11">"#);
    s.push('\n');
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let (x, y) = (x_of(t), y_of(t));
        writeln!(s, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{t:.1}</text>"#, y0 + 4.0, y0 + 16.0).unwrap();
        writeln!(s, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{t:.1}</text>"#, x0 - 4.0, x0 - 6.0, y + 4.0).unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">fraction of weights removed</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">test accuracy</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();
    s.push_str("</g>\n");
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(f, a)| format!("{:.2},{:.2}", x_of(f), y_of(a)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{} ({})</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&c.method),
            escape(&c.order)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_curve_and_escaped_labels() {
        let curve = |method: &str| SparsityCurve {
            method: method.into(),
            order: "a<b".into(),
            model_hash: String::new(),
            points: vec![(0.0, 0.9), (0.5, 0.4), (1.0, 0.1)],
        };
        let s = curves_svg("x & y", &[curve("m1"), curve("m2")]);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("x &amp; y") && s.contains("a&lt;b"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<g").count(), s.matches("</g>").count());
    }
}
