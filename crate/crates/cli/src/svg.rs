//! Minimal static SVG charts: scatter layers, polylines, axes and a legend.

use std::fmt::Write;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Padded range covering `values`; a fixed span around a single value.
pub fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        0.5f64.max(lo.abs() * 0.1)
    };
    (lo - pad, hi + pad)
}

/// About five round-numbered ticks inside `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, &'static str, bool)>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            y,
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let u = LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT);
        let v = H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM);
        (u, v)
    }

    /// Filled dots, or rings when `hollow`.
    pub fn points(&mut self, pts: &[(f64, f64)], color: &'static str, hollow: bool, label: Option<String>) {
        let style = if hollow {
            format!(r#"fill="none" stroke="{color}" stroke-width="0.8""#)
        } else {
            format!(r#"fill="{color}" fill-opacity="0.6""#)
        };
        let _ = write!(self.body, "<g {style}>");
        for &(x, y) in pts {
            let (u, v) = self.px(x, y);
            let _ = write!(self.body, r#"<circle cx="{u:.2}" cy="{v:.2}" r="2"/>"#);
        }
        self.body.push_str("</g>\n");
        if let Some(l) = label {
            self.legend.push((l, color, hollow));
        }
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &'static str, label: Option<String>) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (u, v) = self.px(x, y);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        self.points(pts, color, false, None);
        if let Some(l) = label {
            self.legend.push((l, color, false));
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let (x0, y0) = (LEFT, H - BOTTOM);
        let (x1, y1) = (W - RIGHT, TOP);
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in ticks(self.x.0, self.x.1) {
            let (u, _) = self.px(t, self.y.0);
            let _ = writeln!(
                s,
                r#"<line x1="{u:.2}" y1="{y0}" x2="{u:.2}" y2="{}" stroke="black"/><text x="{u:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 16.0,
                tick_label(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let (_, v) = self.px(self.x.0, t);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{v:.2}" x2="{x0}" y2="{v:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                v + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            s,
            r#"<clipPath id="plot"><rect x="{x0}" y="{y1}" width="{}" height="{}"/></clipPath>"#,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        s.push_str(&self.body);
        s.push_str("</g>\n");
        for (i, (label, color, hollow)) in self.legend.iter().enumerate() {
            let y = TOP + 8.0 + 16.0 * i as f64;
            let x = W - RIGHT + 14.0;
            let fill = if *hollow { "none" } else { color };
            let _ = writeln!(
                s,
                r#"<circle cx="{x}" cy="{y}" r="4" fill="{fill}" stroke="{color}"/><text x="{}" y="{}">{}</text>"#,
                x + 10.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
