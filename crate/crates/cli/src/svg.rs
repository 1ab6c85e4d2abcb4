//! Minimal self-contained SVG charts. Output is byte-deterministic for a
//! given input: numbers are printed with fixed precision and no external
//! resources are referenced.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Data-to-pixel mapping for the plot area.
struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn fit(points: impl Iterator<Item = (f64, f64)>, y_floor: Option<(f64, f64)>) -> Self {
        let (mut x_min, mut x_max, mut y_min, mut y_max) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (x, y) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if let Some((lo, hi)) = y_floor {
            y_min = y_min.min(lo);
            y_max = y_max.max(hi);
        }
        if !x_min.is_finite() {
            (x_min, x_max) = (0.0, 1.0);
        }
        if !y_min.is_finite() {
            (y_min, y_max) = (0.0, 1.0);
        }
        if x_max == x_min {
            x_max = x_min + 1.0;
        }
        if y_max == y_min {
            y_max = y_min + 1.0;
        }
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn frame(out: &mut String, axes: &Axes, x_label: &str, y_label: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{x1:.1} {y0:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = f64::from(i) / 4.0;
        let xv = axes.x_min + t * (axes.x_max - axes.x_min);
        let yv = axes.y_min + t * (axes.y_max - axes.y_min);
        let (px, py) = (axes.px(xv), axes.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn legend(out: &mut String, index: usize, label: &str, color: &str) {
    let y = TOP + 16.0 * index as f64;
    let x = WIDTH - RIGHT + 12.0;
    let _ = writeln!(
        out,
        r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
        y - 9.0,
        x + 14.0,
        y,
        escape(label)
    );
}

/// One labelled polyline per series; y axis always includes `[0, 1]`.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let axes = Axes::fit(
        series.iter().flat_map(|(_, pts)| pts.iter().copied()),
        Some((0.0, 1.0)),
    );
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, &axes, x_label, y_label);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                axes.px(x),
                axes.py(y)
            );
        }
        legend(&mut out, i, label, color);
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of labelled operating points with the frontier drawn as a step line.
pub fn pareto_chart(title: &str, points: &[(String, f64, f64)], frontier: &[(f64, f64)]) -> String {
    let axes = Axes::fit(points.iter().map(|p| (p.1, p.2)), Some((0.0, 1.0)));
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, &axes, "p50 latency (ms)", "QoS_sys");
    if !frontier.is_empty() {
        let path: Vec<String> = frontier
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
            path.join(" ")
        );
    }
    let mut labels: Vec<&str> = Vec::new();
    for (label, x, y) in points {
        let idx = labels.iter().position(|l| l == label).unwrap_or_else(|| {
            labels.push(label);
            labels.len() - 1
        });
        let color = PALETTE[idx % PALETTE.len()];
        let on_front = frontier.iter().any(|&(fx, fy)| fx == *x && fy == *y);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{}" fill="{color}" stroke="black" stroke-width="{}"/>"#,
            axes.px(*x),
            axes.py(*y),
            if on_front { 5 } else { 3 },
            if on_front { 1 } else { 0 }
        );
    }
    for (i, label) in labels.iter().enumerate() {
        legend(&mut out, i, label, PALETTE[i % PALETTE.len()]);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn deterministic_and_labelled() {
        let s = vec![
            ("oracle".to_string(), vec![(0.01, 0.5), (0.02, 1.0)]),
            ("base<line>".to_string(), vec![(0.01, 0.1), (0.02, 0.2)]),
        ];
        let a = line_chart("Recall", "ratio", "recall", &s);
        assert_eq!(a, line_chart("Recall", "ratio", "recall", &s));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains(">oracle<") && a.contains("base&lt;line&gt;"));
        assert!(!a.contains("href"));
    }
}
