//! Minimal hand-written SVG charts: stacked line-plot panels and a
//! Poincaré-disk view of surface snapshots.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// One set of axes. With `log_y`, nonpositive values are dropped and the
/// axis is labelled in decades.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_y: false, series: Vec::new() }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn transformed(&self) -> Vec<Vec<(f64, f64)>> {
        self.series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
                    .collect()
            })
            .collect()
    }

    fn render(&self, out: &mut String, top: f64) {
        let data = self.transformed();
        let all = data.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 1e-12 * y1.abs().max(1.0) {
            // flat data (e.g. conserved quantities): open a small band around it
            let pad = 1e-6 * y0.abs().max(1.0);
            y0 -= pad;
            y1 += pad;
        } else {
            let pad = 0.05 * (y1 - y0);
            y0 -= pad;
            y1 += pad;
        }
        let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#,
            PANEL_W / 2.0,
            top + 22.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_L:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#333"/>"##,
            top + MARGIN_T
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let (px, py) = (sx(fx), sy(fy));
            let _ = writeln!(
                out,
                r#"<text x="{px:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                top + PANEL_H - MARGIN_B + 16.0,
                tick(fx)
            );
            let label = if self.log_y { format!("1e{fy:.1}") } else { tick(fy) };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{label}</text>"#,
                MARGIN_L - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            top + PANEL_H - 8.0,
            escape(&self.x_label)
        );
        let (lx, ly) = (16.0, top + MARGIN_T + ph / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
            escape(&self.y_label)
        );
        for (k, (s, pts)) in self.series.iter().zip(&data).enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if pts.len() >= 2 {
                let mut d = String::new();
                for (j, &(x, y)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
                }
                let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
                let _ = writeln!(
                    out,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    d.trim_end()
                );
            }
            let ly = top + MARGIN_T + 16.0 + 16.0 * k as f64;
            let lx = PANEL_W - MARGIN_R - 200.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}" font-size="11">{}</text>"#,
                ly - 4.0,
                lx + 18.0,
                ly - 4.0,
                lx + 24.0,
                escape(&s.label)
            );
        }
    }
}

/// Panels stacked vertically into one document.
pub fn figure(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W:.0}" height="{height:.0}" viewBox="0 0 {PANEL_W:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        p.render(&mut out, k as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    out
}

/// Closed curves in the unit disk, labelled by time; the boundary circle is
/// the ideal boundary.
pub fn disk_figure(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let size = 520.0;
    let (c, r) = (size / 2.0, size / 2.0 - 40.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{:.0}" viewBox="0 0 {size:.0} {:.0}" font-family="sans-serif">"#,
        size + 20.0 * curves.len() as f64,
        size + 20.0 * curves.len() as f64
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{c:.1}" y="22" font-size="15" text-anchor="middle">{}</text>"#, escape(title));
    let _ = writeln!(out, r##"<circle cx="{c:.1}" cy="{c:.1}" r="{r:.1}" fill="none" stroke="#999"/>"##);
    for (k, (label, pts)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, c + r * x, c - r * y);
        }
        let _ = writeln!(out, r#"<path d="{}Z" fill="none" stroke="{color}" stroke-width="1.2"/>"#, d);
        let ly = size + 14.0 + 20.0 * k as f64 - 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="20" y1="{:.1}" x2="40" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="46" y="{ly:.1}" font-size="11">{}</text>"#,
            ly - 4.0,
            ly - 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e4 || x.abs() < 1e-2 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_is_well_formed_and_deterministic() {
        let p = Panel::new("decay", "t", "y")
            .log_y()
            .with(Series::new("a<b", vec![(0.0, 1.0), (1.0, 0.1), (2.0, 0.0)]))
            .with(Series::new("fit", vec![(0.0, 1.0), (2.0, 0.01)]).dashed());
        let flat = Panel::new("flat", "t", "A").with(Series::new("A", vec![(0.0, 2.0), (1.0, 2.0)]));
        let svg = figure(&[p.clone(), flat.clone()]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b") && svg.contains("stroke-dasharray"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert_eq!(svg, figure(&[p, flat]));
    }

    #[test]
    fn disk_figure_closes_paths() {
        let circle: Vec<(f64, f64)> = (0..8).map(|k| (0.5 * (k as f64).cos(), 0.5 * (k as f64).sin())).collect();
        let svg = disk_figure("profiles", &[("t = 0".into(), circle)]);
        assert_eq!(svg.matches("Z\"").count(), 1);
    }
}
