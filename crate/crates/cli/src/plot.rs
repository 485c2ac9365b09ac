//! SVG scatter plots of 2-D embeddings.

use std::collections::BTreeSet;
use std::fmt::Write;

use wishart_dr::Embedding;

pub const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;
const RADIUS: f64 = 3.0;
const UNLABELLED: &str = "#1f77b4";
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// One `<circle>` per point, coloured by label, with a legend of `<rect>`
/// swatches when labels are present. Both axes share one scale.
pub fn scatter_svg(emb: &Embedding, labels: Option<&[i64]>) -> String {
    let x = emb.coords();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..emb.n()).map(|i| (x[(i, 0)], x[(i, 1)])).unzip();
    let bounds = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 { (SIZE - 2.0 * MARGIN) / span } else { 1.0 };
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);

    let classes: Vec<i64> = labels.map(|l| l.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()).unwrap_or_default();
    let colour = |label: i64| {
        let idx = classes.binary_search(&label).unwrap_or(0);
        PALETTE[idx % PALETTE.len()]
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    for i in 0..emb.n() {
        let px = SIZE / 2.0 + (xs[i] - cx) * scale;
        // SVG y grows downwards
        let py = SIZE / 2.0 - (ys[i] - cy) * scale;
        let fill = labels.map_or(UNLABELLED, |l| colour(l[i]));
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{RADIUS}" fill="{fill}" fill-opacity="0.8"/>"#);
    }
    if labels.is_some() {
        for (row, &label) in classes.iter().enumerate() {
            let top = 12.0 + 18.0 * row as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.0}" y="{top:.0}" width="12" height="12" fill="{}"/>"#,
                SIZE - 90.0,
                colour(label)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="12">{label}</text>"#,
                SIZE - 72.0,
                top + 10.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
