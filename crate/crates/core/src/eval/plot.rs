//! Minimal SVG line charts.

use std::fmt::Write;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 42.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    /// Shaded interval `(low, high)` per point.
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Tick labels replacing the numeric x ticks, placed at x = 1, 2, ...
    pub x_names: Option<Vec<String>>,
    pub series: Vec<Series>,
}

/// Round tick spacing for a span.
fn tick_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5 * lo.abs().max(1e-3), hi + 0.5 * hi.abs().max(1e-3))
    } else {
        (lo, hi)
    }
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = range(p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)));
    let ys = p.series.iter().flat_map(|s| {
        s.points.iter().map(|q| q.1).chain(s.band.iter().flatten().flat_map(|b| [b.0, b.1]))
    });
    let (ylo, yhi) = range(ys);
    let step = tick_step(yhi - ylo, 5);
    let (y0, y1) = ((ylo / step).floor() * step, (yhi / step).ceil() * step);
    let (xpad, w, h) = (0.04 * (x1 - x0), PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let sx = |x: f64| ox + MARGIN_L + (x - x0 + xpad) / (x1 - x0 + 2.0 * xpad) * w;
    let sy = |y: f64| oy + MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * h;

    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##,
        ox + MARGIN_L,
        oy + MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13" font-weight="bold">{}</text>"#,
        ox + MARGIN_L + w / 2.0,
        oy + 18.0,
        escape(&p.title)
    );
    let mut y = y0;
    while y <= y1 + step * 1e-6 {
        let py = sy(y);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
            ox + MARGIN_L,
            ox + MARGIN_L + w,
            ox + MARGIN_L - 4.0,
            py + 3.5,
            fmt_tick(y, step)
        );
        y += step;
    }
    let xticks: Vec<(f64, String)> = match &p.x_names {
        Some(names) => names.iter().enumerate().map(|(i, n)| ((i + 1) as f64, n.clone())).collect(),
        None => {
            let xs = tick_step(x1 - x0, 5).max(1.0);
            let mut v = Vec::new();
            let mut x = (x0 / xs).ceil() * xs;
            while x <= x1 + 1e-9 {
                v.push((x, fmt_tick(x, xs)));
                x += xs;
            }
            v
        }
    };
    for (x, label) in xticks {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            sx(x),
            oy + MARGIN_T + h + 14.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
        ox + MARGIN_L + w / 2.0,
        oy + PANEL_H - 8.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate({:.1},{:.1}) rotate(-90)" text-anchor="middle" font-size="11">{}</text>"#,
        ox + 14.0,
        oy + MARGIN_T + h / 2.0,
        escape(&p.y_label)
    );

    for s in &p.series {
        if let Some(band) = &s.band {
            let upper = s.points.iter().zip(band).map(|(q, b)| format!("{:.1},{:.1}", sx(q.0), sy(b.1)));
            let lower = s.points.iter().zip(band).rev().map(|(q, b)| format!("{:.1},{:.1}", sx(q.0), sy(b.0)));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(out, r#"<polygon points="{}" fill="{}" fill-opacity="0.18" stroke="none"/>"#, pts.join(" "), s.color);
        }
        let pts: Vec<String> = s.points.iter().map(|q| format!("{:.1},{:.1}", sx(q.0), sy(q.1))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), s.color);
        for q in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#, sx(q.0), sy(q.1), s.color);
        }
    }
    for (k, s) in p.series.iter().enumerate() {
        let ly = oy + MARGIN_T + 12.0 + 14.0 * k as f64;
        let lx = ox + MARGIN_L + w - 110.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}" font-size="10">{}</text>"#,
            ly - 3.5,
            lx + 16.0,
            ly - 3.5,
            s.color,
            lx + 20.0,
            escape(&s.name)
        );
    }
}

/// Lays panels out in a grid of `cols` columns.
pub fn render(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let (width, height) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * (i % cols) as f64, PANEL_H * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12 * b;
        assert!(close(tick_step(1.0, 5), 0.2));
        assert!(close(tick_step(20.0, 5), 5.0));
        assert!(close(tick_step(37.0, 5), 10.0));
        assert!(close(tick_step(0.013, 5), 0.002));
    }

    #[test]
    fn renders_every_series() {
        let s = |name: &str| Series {
            name: name.into(),
            color: PALETTE[0].into(),
            points: vec![(1.0, 3.0), (2.0, 2.0), (3.0, 1.5)],
            band: Some(vec![(2.5, 3.5), (1.8, 2.2), (1.4, 1.6)]),
        };
        let p = Panel {
            title: "V & <m³>".into(),
            x_label: "J".into(),
            y_label: "MAE".into(),
            x_names: None,
            series: vec![s("a"), s("b")],
        };
        let svg = render(&[p.clone(), p], 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<polygon").count(), 4);
        assert!(svg.contains("V &amp; &lt;m³&gt;"));
        assert!(!svg.contains("NaN"));
    }
}
