//! Learning-curve plots as standalone SVG: median across seeds with an
//! interquartile band.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::MetricsRow;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Linear-interpolation quantile of an already sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(step, q25, median, q75)` over the steps every seed recorded.
pub fn band(runs: &[Vec<MetricsRow>], column: &str) -> Result<Vec<(u64, f64, f64, f64)>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Usage("a plotted series needs at least one run".into()))?;
    let mut out = Vec::new();
    for row in first {
        let mut vals = Vec::with_capacity(runs.len());
        for run in runs {
            let v = run
                .iter()
                .find(|r| r.step == row.step)
                .and_then(|r| r.column(column));
            match v {
                Some(v) => vals.push(v),
                None => break,
            }
        }
        if vals.len() == runs.len() {
            vals.sort_by(f64::total_cmp);
            out.push((row.step, quantile(&vals, 0.25), quantile(&vals, 0.5), quantile(&vals, 0.75)));
        }
    }
    Ok(out)
}

pub fn render_svg(series: &[(String, Vec<Vec<MetricsRow>>)], column: &str) -> Result<String> {
    let bands = series
        .iter()
        .map(|(label, runs)| Ok((label.as_str(), band(runs, column)?)))
        .collect::<Result<Vec<_>>>()?;
    let pts = bands.iter().flat_map(|(_, b)| b.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(s, lo, _, hi) in pts {
        x0 = x0.min(s as f64);
        x1 = x1.max(s as f64);
        y0 = y0.min(lo);
        y1 = y1.max(hi);
    }
    if x0 > x1 {
        return Err(Error::Usage(format!("no rows carry a value for {column}")));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(svg, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{column}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    for (v, anchor, x, y) in [
        (x0, "start", sx(x0), HEIGHT - MARGIN + 16.0),
        (x1, "end", sx(x1), HEIGHT - MARGIN + 16.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v}</text>"#);
    }
    for v in [y0, y1] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, MARGIN - 4.0, sy(v) + 4.0, v);
    }
    for (i, (label, b)) in bands.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        if b.is_empty() {
            continue;
        }
        let mut area = String::new();
        for (k, &(s, _, _, hi)) in b.iter().enumerate() {
            let _ = write!(area, "{}{:.2} {:.2} ", if k == 0 { "M" } else { "L" }, sx(s as f64), sy(hi));
        }
        for &(s, lo, _, _) in b.iter().rev() {
            let _ = write!(area, "L{:.2} {:.2} ", sx(s as f64), sy(lo));
        }
        let _ = writeln!(svg, r#"<path d="{area}Z" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#);
        let line: Vec<String> = b
            .iter()
            .map(|&(s, _, m, _)| format!("{:.2},{:.2}", sx(s as f64), sy(m)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, line.join(" "));
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{colour}">{label}</text>"#, WIDTH - MARGIN - 120.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(path: &Path, series: &[(String, Vec<Vec<MetricsRow>>)], column: &str) -> Result<()> {
    let svg = render_svg(series, column)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
