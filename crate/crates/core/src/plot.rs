//! Quick-look SVG charts. Static, no dependencies, deterministic output.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub ys: &'a [f64],
}

fn frame(title: &str, x_label: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, WIDTH / 2.0).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    s
}

fn axis_labels(s: &mut String, x0: f64, x1: f64, y0: f64, y1: f64) {
    let bottom = HEIGHT - MARGIN;
    writeln!(s, r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{x0:.3}</text>"#, bottom + 16.0).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x1:.3}</text>"#,
        WIDTH - MARGIN,
        bottom + 16.0
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.3}</text>"#, MARGIN - 4.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{MARGIN}" text-anchor="end">{y1:.3}</text>"#, MARGIN - 4.0).unwrap();
}

fn map(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        0.5 * (out_lo + out_hi)
    }
}

/// Line chart of several series sharing one x axis, y range [0, max].
pub fn line_chart(title: &str, x_label: &str, xs: &[f64], series: &[Series<'_>]) -> String {
    let mut s = frame(title, x_label);
    let (x0, x1) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let y1 = series
        .iter()
        .flat_map(|se| se.ys.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    axis_labels(&mut s, x0, x1, 0.0, y1);
    // thin long series so files stay small
    let stride = (xs.len() / 2000).max(1);
    for (k, se) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let mut path = String::new();
        for (i, (&x, &y)) in xs.iter().zip(se.ys).enumerate().step_by(stride) {
            let px = map(x, x0, x1, MARGIN, WIDTH - MARGIN);
            let py = map(y, 0.0, y1, HEIGHT - MARGIN, MARGIN);
            write!(path, "{}{px:.2},{py:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, path.trim_end()).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 * (k + 1) as f64,
            se.label
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Bar chart of (bin_start, bin_end, count).
pub fn histogram_chart(title: &str, x_label: &str, bins: &[(f64, f64, usize)]) -> String {
    let mut s = frame(title, x_label);
    let (x0, x1) = match (bins.first(), bins.last()) {
        (Some(a), Some(b)) => (a.0, b.1),
        _ => (0.0, 1.0),
    };
    let max = bins.iter().map(|b| b.2).max().unwrap_or(0).max(1) as f64;
    axis_labels(&mut s, x0, x1, 0.0, max);
    for &(lo, hi, c) in bins.iter().filter(|b| b.2 > 0) {
        let left = map(lo, x0, x1, MARGIN, WIDTH - MARGIN);
        let right = map(hi, x0, x1, MARGIN, WIDTH - MARGIN);
        let top = map(c as f64, 0.0, max, HEIGHT - MARGIN, MARGIN);
        writeln!(
            s,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            (right - left).max(0.5),
            HEIGHT - MARGIN - top,
            COLOURS[0]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
