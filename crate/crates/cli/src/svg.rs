//! Hand-written SVG: a step path for the shape, a bar strip for bin
//! counts, and optional audit overlays. Numbers are printed with fixed
//! precision so the same model always renders the same bytes.

use std::fmt::Write;

use missinglens::gam::{BinInterval, ShapeFunction, ValueBins};

const WIDTH: f64 = 640.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const PLOT_H: f64 = 220.0;
const STRIP_TOP: f64 = 270.0;
const STRIP_H: f64 = 60.0;
const HEIGHT: f64 = 360.0;
/// Share of the plot width given to the missing bin, when there is one.
const MISSING_SLOT: f64 = 0.08;

/// Extra marks for an audited shape.
#[derive(Default)]
pub struct Overlay {
    /// Value bins to shade.
    pub flagged: Vec<usize>,
    /// Vertical rule, e.g. at the column mean.
    pub rule: Option<f64>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        TOP + (self.y_hi - v) / (self.y_hi - self.y_lo) * PLOT_H
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders one shape function. Continuous shapes are drawn over bin edges;
/// categorical ones as equal-width slots; a missing bin gets its own slot at
/// the left, drawn dashed.
pub fn render_shape(shape: &ShapeFunction, title: &str, overlay: &Overlay) -> String {
    let n_value = shape.layout.n_value_bins();
    let missing = shape.layout.missing_index();
    let (mut lo, mut hi) = shape
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (0.0, 0.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let plot_w = WIDTH - LEFT - RIGHT;
    let slot = if missing.is_some() { MISSING_SLOT * plot_w } else { 0.0 };
    let frame = Frame {
        x0: LEFT + slot + if missing.is_some() { 10.0 } else { 0.0 },
        x1: WIDTH - RIGHT,
        y_lo: lo - pad,
        y_hi: hi + pad,
    };

    // horizontal extent of every value bin, in pixels
    let spans: Vec<(f64, f64)> = match &shape.layout.values {
        ValueBins::Continuous { edges } => {
            let (a, b) = (edges[0], edges[edges.len() - 1]);
            let scale = |v: f64| {
                if b > a {
                    frame.x0 + (v - a) / (b - a) * (frame.x1 - frame.x0)
                } else {
                    0.5 * (frame.x0 + frame.x1)
                }
            };
            edges.windows(2).map(|w| (scale(w[0]), scale(w[1]))).collect()
        }
        ValueBins::Categorical { .. } => {
            let w = (frame.x1 - frame.x0) / n_value.max(1) as f64;
            (0..n_value).map(|k| (frame.x0 + k as f64 * w, frame.x0 + (k + 1) as f64 * w)).collect()
        }
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{LEFT}" y="18" font-size="13">{}</text>"#, escape(title));

    for &k in &overlay.flagged {
        if let Some(&(a, b)) = spans.get(k) {
            let _ = writeln!(
                out,
                r##"<rect class="flagged" x="{:.2}" y="{TOP}" width="{:.2}" height="{PLOT_H}" fill="#e34a33" fill-opacity="0.25"/>"##,
                a,
                (b - a).max(1.0)
            );
        }
    }

    // axes and zero line
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        TOP,
        TOP + PLOT_H
    );
    for v in [frame.y_lo + pad, 0.0, frame.y_hi - pad] {
        if v >= frame.y_lo && v <= frame.y_hi {
            let y = frame.y(v);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
                LEFT - 4.0,
                y + 4.0
            );
        }
    }
    if frame.y_lo < 0.0 && frame.y_hi > 0.0 {
        let y = frame.y(0.0);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999" stroke-dasharray="2,3"/>"##,
            WIDTH - RIGHT
        );
    }

    // the step path over value bins
    let mut path = String::new();
    for (k, &(a, b)) in spans.iter().enumerate() {
        let y = frame.y(shape.scores[k]);
        let cmd = if k == 0 { 'M' } else { 'L' };
        let _ = write!(path, "{cmd}{a:.2},{y:.2} L{b:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        r##"<path class="shape" d="{}" fill="none" stroke="#2b8cbe" stroke-width="2"/>"##,
        path.trim_end()
    );

    if let Some(m) = missing {
        let a = LEFT + 4.0;
        let b = LEFT + slot;
        let y = frame.y(shape.scores[m]);
        let _ = writeln!(
            out,
            r##"<line class="missing" x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="#d95f0e" stroke-width="2" stroke-dasharray="4,2"/>"##
        );
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="#d95f0e"/>"##,
            0.5 * (a + b)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">missing</text>"#,
            0.5 * (a + b),
            STRIP_TOP + STRIP_H + 14.0
        );
    }

    if let (Some(x), ValueBins::Continuous { edges }) = (overlay.rule, &shape.layout.values) {
        let (a, b) = (edges[0], edges[edges.len() - 1]);
        if b > a {
            let px = frame.x0 + ((x - a) / (b - a)).clamp(0.0, 1.0) * (frame.x1 - frame.x0);
            let _ = writeln!(
                out,
                r#"<line class="rule" x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{}" stroke="red" stroke-width="1.5"/>"#,
                STRIP_TOP + STRIP_H
            );
        }
    }

    // density strip
    let max_count = shape.layout.counts.iter().cloned().fold(0.0, f64::max);
    let bar = |a: f64, b: f64, c: f64, out: &mut String| {
        let h = if max_count > 0.0 { c / max_count * STRIP_H } else { 0.0 };
        let _ = writeln!(
            out,
            r##"<rect class="density" x="{a:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#7f7f7f"/>"##,
            STRIP_TOP + STRIP_H - h,
            (b - a).max(0.5)
        );
    };
    for (k, &(a, b)) in spans.iter().enumerate() {
        bar(a, b, shape.layout.counts[k], &mut out);
    }
    if let Some(m) = missing {
        bar(LEFT + 4.0, LEFT + slot, shape.layout.counts[m], &mut out);
    }

    // x labels: first and last edge, or category names
    match &shape.layout.values {
        ValueBins::Continuous { edges } => {
            let y = STRIP_TOP + STRIP_H + 14.0;
            let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{:.4}</text>"#, frame.x0, edges[0]);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{:.4}</text>"#,
                frame.x1,
                edges[edges.len() - 1]
            );
        }
        ValueBins::Categorical { .. } => {
            for (k, &(a, b)) in spans.iter().enumerate() {
                if let BinInterval::Category { name, .. } = shape.layout.interval(k) {
                    let _ = writeln!(
                        out,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        0.5 * (a + b),
                        STRIP_TOP + STRIP_H + 14.0,
                        escape(&name)
                    );
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use missinglens::gam::{BinLayout, MissingBin};

    fn shape() -> ShapeFunction {
        ShapeFunction {
            feature: "x".into(),
            layout: BinLayout {
                values: ValueBins::Continuous {
                    edges: vec![0.0, 1.0, 2.0, 4.0],
                },
                missing: Some(MissingBin { code: None }),
                counts: vec![3.0, 4.0, 2.0, 1.0],
            },
            scores: vec![-0.5, 0.2, 0.4, 1.0],
            edit_cuts: vec![],
        }
    }

    #[test]
    fn marks_every_part() {
        let svg = render_shape(
            &shape(),
            "x <shape>",
            &Overlay {
                flagged: vec![1],
                rule: Some(1.5),
            },
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("x &lt;shape&gt;"));
        assert_eq!(svg.matches(r#"class="density""#).count(), 4);
        assert_eq!(svg.matches(r#"class="flagged""#).count(), 1);
        assert_eq!(svg.matches(r#"class="missing""#).count(), 1);
        assert_eq!(svg.matches(r#"class="rule""#).count(), 1);
    }

    #[test]
    fn flat_shape_renders() {
        let mut s = shape();
        s.scores = vec![0.0; 4];
        let svg = render_shape(&s, "flat", &Overlay::default());
        assert!(!svg.contains("NaN"));
    }
}
