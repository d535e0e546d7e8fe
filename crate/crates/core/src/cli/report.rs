use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::evaluate::Evaluation;
use crate::posesolve::FusionStrategy;

/// Noise knob used as the x axis of plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseAxis {
    PixelSigma,
    ObjectSigma,
    OutlierFraction,
    DisparitySigma,
}

impl NoiseAxis {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "pixel-sigma" => Ok(Self::PixelSigma),
            "object-sigma" => Ok(Self::ObjectSigma),
            "outlier-fraction" => Ok(Self::OutlierFraction),
            "disparity-sigma" => Ok(Self::DisparitySigma),
            _ => Err(format!(
                "unknown axis '{s}' (pixel-sigma | object-sigma | outlier-fraction | disparity-sigma)"
            )),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::PixelSigma => "pixel noise sigma [px]",
            Self::ObjectSigma => "object coordinate noise sigma [mm]",
            Self::OutlierFraction => "outlier fraction",
            Self::DisparitySigma => "disparity noise sigma [px]",
        }
    }

    fn value(self, e: &Evaluation) -> f64 {
        match self {
            Self::PixelSigma => e.noise.pixel_sigma,
            Self::ObjectSigma => e.noise.object_sigma_mm,
            Self::OutlierFraction => e.noise.outlier_fraction,
            Self::DisparitySigma => e.noise.disparity_sigma,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.3}"))
}

/// One row per (run, strategy).
pub fn runs_csv(runs: &[Evaluation]) -> String {
    let mut out = String::from(
        "pixel_sigma,object_sigma_mm,outlier_fraction,disparity_sigma,strategy,overall_recall,mean_error_mm,median_abs_dz_mm,failures\n",
    );
    for e in runs {
        for (s, sum) in &e.strategies {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.2},{},{},{}",
                e.noise.pixel_sigma,
                e.noise.object_sigma_mm,
                e.noise.outlier_fraction,
                e.noise.disparity_sigma,
                s,
                sum.report.overall,
                opt(sum.mean_error_mm),
                opt(sum.median_abs_dz_mm),
                sum.failures
            );
        }
    }
    out
}

/// Series per strategy: (x, y) sorted by x.
pub fn series(runs: &[Evaluation], axis: NoiseAxis, y: impl Fn(&super::evaluate::StrategySummary) -> Option<f64>) -> BTreeMap<FusionStrategy, Vec<(f64, f64)>> {
    let mut out: BTreeMap<FusionStrategy, Vec<(f64, f64)>> = BTreeMap::new();
    for e in runs {
        for (s, sum) in &e.strategies {
            if let Some(v) = y(sum) {
                out.entry(*s).or_default().push((axis.value(e), v));
            }
        }
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

const COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

/// Minimal SVG line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, data: &BTreeMap<FusionStrategy, Vec<(f64, f64)>>) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 230.0, 40.0, 60.0);
    let pts = data.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + ph, left + pw, top + ph);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 18.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, tick(fy));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/>"##, sy(fy), left + pw);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 18.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (strategy, pts)) in data.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, strategy);
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
