//! Self-contained SVG line chart of equity curves.

use std::fmt::Write as _;

use crate::metrics::EquityCurve;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlay of `curves` against their row index, labelled with dates. All
/// curves are assumed to share the same dates; the x axis follows the
/// longest one.
pub fn svg_chart(title: &str, curves: &[(&str, &EquityCurve)], log_scale: bool) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let tf = |v: f64| if log_scale { v.ln() } else { v };
    let values = curves.iter().flat_map(|(_, c)| c.values.iter().copied()).filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1.0, 2.0) };
    let (ylo, yhi) = if tf(hi) > tf(lo) { (tf(lo), tf(hi)) } else { (tf(lo) - 1.0, tf(lo) + 1.0) };
    let longest = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let xs = |i: usize| LEFT + plot_w * i as f64 / (longest.max(2) - 1) as f64;
    let ys = |v: f64| TOP + plot_h * (1.0 - (tf(v) - ylo) / (yhi - ylo));

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );

    // five horizontal grid lines with value labels
    for k in 0..=4 {
        let y_t = ylo + (yhi - ylo) * k as f64 / 4.0;
        let v = if log_scale { y_t.exp() } else { y_t };
        let y = TOP + plot_h * (1.0 - k as f64 / 4.0);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3e}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    if let Some((_, c)) = curves.iter().find(|(_, c)| c.len() == longest) {
        for k in 0..=4 {
            let i = (longest.saturating_sub(1)) * k / 4;
            if let Some(d) = c.dates.get(i) {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{d}</text>"#,
                    xs(i),
                    TOP + plot_h + 18.0
                );
            }
        }
    }
    let axis = if log_scale { "value (log scale)" } else { "value" };
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">{axis}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (n, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in curve.values.iter().enumerate() {
            if v.is_finite() && v > 0.0 {
                let _ = write!(points, "{:.2},{:.2} ", xs(i), ys(v));
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        );
        let ly = TOP + 14.0 + 18.0 * n as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn chart_has_one_polyline_per_curve() {
        let d = |n| NaiveDate::from_ymd_opt(2020, 1, n).unwrap();
        let a = EquityCurve::new(vec![d(1), d(2), d(3)], vec![1.0, 2.0, 4.0]).unwrap();
        let b = EquityCurve::new(vec![d(1), d(2), d(3)], vec![1.0, 1.0, 1.0]).unwrap();
        let svg = svg_chart("A & B", &[("A", &a), ("B<1>", &b)], true);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("A &amp; B") && svg.contains("B&lt;1&gt;"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg, svg_chart("A & B", &[("A", &a), ("B<1>", &b)], true));
    }
}
