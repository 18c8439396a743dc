//! The report's charts, each rendered from plain data into an SVG document.

use std::collections::BTreeMap;

use natrob_core::metrics::CorrelationMatrix;

use crate::svg::{axes, color, diverging, legend, num, padded_range, Scale, Svg};

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_TOP: f64 = 30.0;

/// `(x, y)` points of one named line.
pub type Line = Vec<(f64, f64)>;

fn draw_lines(svg: &mut Svg, x: &Scale, y: &Scale, lines: &BTreeMap<String, Line>) {
    for (i, (name, pts)) in lines.iter().enumerate() {
        let col = color(i);
        svg.open_series(name);
        let mapped: Vec<(f64, f64)> = pts.iter().map(|&(a, b)| (x.map(a), y.map(b))).collect();
        svg.polyline(&mapped, &format!("stroke=\"{col}\" stroke-width=\"1.5\""));
        for (&(a, b), &(px, py)) in pts.iter().zip(&mapped) {
            svg.circle(px, py, 2.5, &format!("fill=\"{col}\""), Some(&format!("{name}: {a:.1} ms, r = {b:.4}")));
        }
        svg.close_group();
    }
}

/// Robustness against signed offset (left) and pooled `|Δt|` (right), one line per model.
pub fn offset_curves(signed: &BTreeMap<String, Line>, pooled: &BTreeMap<String, Line>) -> String {
    let (pw, ph) = (360.0, 260.0);
    let width = 2.0 * (MARGIN_LEFT + pw) + 160.0;
    let mut svg = Svg::new(width, ph + MARGIN_TOP + 60.0);
    let yr = padded_range(signed.values().chain(pooled.values()).flatten().map(|p| p.1));
    let yr = (yr.0, yr.1.max(1.0));
    let panels = [(signed, "signed offset (ms)", (-360.0, 360.0)), (pooled, "|offset| (ms)", (0.0, 360.0))];
    for (k, (lines, label, xr)) in panels.into_iter().enumerate() {
        let x0 = MARGIN_LEFT + k as f64 * (MARGIN_LEFT + pw);
        let x = Scale::new(xr, (x0, x0 + pw));
        let y = Scale::new(yr, (MARGIN_TOP + ph, MARGIN_TOP));
        svg.open_group(&[("class", "panel"), ("data-panel", if k == 0 { "signed" } else { "pooled" })]);
        axes(&mut svg, &x, &y, label, "natural robustness", 6);
        draw_lines(&mut svg, &x, &y, lines);
        svg.close_group();
    }
    let entries: Vec<(String, &str)> = signed.keys().enumerate().map(|(i, m)| (m.clone(), color(i))).collect();
    legend(&mut svg, width - 150.0, MARGIN_TOP + 10.0, &entries);
    svg.finish()
}

/// One small-multiple panel of the accuracy-vs-robustness scatter.
#[derive(Debug, Clone)]
pub struct ScatterPanel {
    pub transform: String,
    pub r_squared: Option<f64>,
    /// `(model_id, clean_accuracy, robustness)`.
    pub points: Vec<(String, f64, f64)>,
}

/// Panels in the given order (callers sort by R²), four per row.
pub fn accuracy_vs_robustness(panels: &[ScatterPanel]) -> String {
    const COLS: usize = 4;
    let (pw, ph) = (180.0, 150.0);
    let (cw, chh) = (pw + MARGIN_LEFT + 10.0, ph + 70.0);
    let rows = panels.len().div_ceil(COLS).max(1);
    let mut svg = Svg::new(COLS as f64 * cw + 10.0, rows as f64 * chh + 10.0);
    let xr = padded_range(panels.iter().flat_map(|p| p.points.iter().map(|q| q.1)));
    for (i, p) in panels.iter().enumerate() {
        let (col, row) = ((i % COLS) as f64, (i / COLS) as f64);
        let x0 = MARGIN_LEFT + col * cw;
        let y0 = MARGIN_TOP + row * chh;
        let x = Scale::new(xr, (x0, x0 + pw));
        let y = Scale::new(padded_range(p.points.iter().map(|q| q.2)), (y0 + ph, y0));
        let r2 = p.r_squared.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        svg.open_group(&[("class", "panel"), ("data-panel", &p.transform)]);
        svg.text(x0 + pw / 2.0, y0 - 8.0, &format!("{} (R² = {r2})", p.transform), "text-anchor=\"middle\"");
        axes(&mut svg, &x, &y, "clean accuracy", "robustness", 3);
        svg.open_series(&p.transform);
        for (model, a, r) in &p.points {
            let title = format!("{model}: accuracy {a:.4}, robustness {r:.4}");
            svg.circle(x.map(*a), y.map(*r), 3.0, "fill=\"#1f77b4\"", Some(&title));
        }
        svg.close_group();
        svg.close_group();
    }
    svg.finish()
}

/// Pearson correlation between robustness types; undefined cells are grey and labelled `n/a`.
pub fn correlation_heatmap(matrix: &CorrelationMatrix) -> String {
    let n = matrix.transforms.len();
    let cell = 46.0;
    let left = 130.0;
    let top = 40.0;
    let mut svg = Svg::new(left + cell * n as f64 + 20.0, top + cell * n as f64 + 120.0);
    svg.open_group(&[("class", "labels")]);
    for (i, t) in matrix.transforms.iter().enumerate() {
        let c = left + cell * (i as f64 + 0.5);
        svg.text(left - 6.0, top + cell * (i as f64 + 0.5) + 4.0, t, "text-anchor=\"end\"");
        let ly = top + cell * n as f64 + 8.0;
        svg.text(c, ly, t, &format!("text-anchor=\"start\" transform=\"rotate(60 {} {})\"", num(c), num(ly)));
    }
    svg.close_group();
    for (i, a) in matrix.transforms.iter().enumerate() {
        svg.open_series(a);
        for (j, b) in matrix.transforms.iter().enumerate() {
            let c = &matrix.cells[i * n + j];
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let (fill, label) = match c.pearson_r {
                Some(r) => (diverging(r), format!("{r:.2}")),
                None => ("#bbbbbb".to_string(), "n/a".to_string()),
            };
            let title = format!("{a} vs {b}: {label} (n = {})", c.n_models);
            svg.rect(x, y, cell, cell, &format!("fill=\"{fill}\" stroke=\"white\""), Some(&title));
            svg.text(x + cell / 2.0, y + cell / 2.0 + 4.0, &label, "text-anchor=\"middle\" font-size=\"10\"");
        }
        svg.close_group();
    }
    svg.finish()
}

/// Empirical CDF of L∞ distances with a vertical marker at `epsilon`.
pub fn linf_cdf(all: &Line, brittle: Option<&Line>, epsilon: f64) -> String {
    let (pw, ph) = (420.0, 280.0);
    let mut svg = Svg::new(MARGIN_LEFT + pw + 170.0, MARGIN_TOP + ph + 60.0);
    let x = Scale::new((0.0, 255.0), (MARGIN_LEFT, MARGIN_LEFT + pw));
    let y = Scale::new((0.0, 1.0), (MARGIN_TOP + ph, MARGIN_TOP));
    axes(&mut svg, &x, &y, "L∞ distance (8-bit units)", "fraction of pairs", 5);
    let mut lines = BTreeMap::new();
    lines.insert("all".to_string(), all.clone());
    if let Some(b) = brittle {
        lines.insert("brittle".to_string(), b.clone());
    }
    for (i, (name, pts)) in lines.iter().enumerate() {
        svg.open_series(name);
        let mut step = Vec::with_capacity(2 * pts.len());
        for (k, &(t, f)) in pts.iter().enumerate() {
            if k > 0 {
                step.push((x.map(t), y.map(pts[k - 1].1)));
            }
            step.push((x.map(t), y.map(f)));
        }
        svg.polyline(&step, &format!("stroke=\"{}\" stroke-width=\"1.5\"", color(i)));
        svg.close_group();
    }
    svg.open_group(&[("class", "epsilon")]);
    let ex = x.map(epsilon.min(255.0));
    svg.line(ex, y.p0, ex, y.p1, "stroke=\"#000\" stroke-dasharray=\"4 3\"");
    svg.text(ex + 3.0, y.p1 + 10.0, &format!("ε = {epsilon}"), "");
    svg.close_group();
    let entries: Vec<(String, &str)> = lines.keys().enumerate().map(|(i, m)| (m.clone(), color(i))).collect();
    legend(&mut svg, MARGIN_LEFT + pw + 20.0, MARGIN_TOP + 10.0, &entries);
    svg.finish()
}

/// Technique robustness against baseline robustness per transform, with the line of equality.
/// `series` maps technique → `(transform, baseline_r, technique_r)`.
pub fn technique_vs_baseline(series: &BTreeMap<String, Vec<(String, f64, f64)>>) -> String {
    let (pw, ph) = (320.0, 320.0);
    let mut svg = Svg::new(MARGIN_LEFT + pw + 220.0, MARGIN_TOP + ph + 60.0);
    let range = padded_range(series.values().flatten().flat_map(|p| [p.1, p.2]));
    let x = Scale::new(range, (MARGIN_LEFT, MARGIN_LEFT + pw));
    let y = Scale::new(range, (MARGIN_TOP + ph, MARGIN_TOP));
    axes(&mut svg, &x, &y, "baseline robustness", "technique robustness", 5);
    svg.open_group(&[("class", "equality")]);
    svg.line(x.map(range.0), y.map(range.0), x.map(range.1), y.map(range.1), "stroke=\"#555\" stroke-dasharray=\"5 4\"");
    svg.close_group();
    for (i, (technique, pts)) in series.iter().enumerate() {
        svg.open_series(technique);
        for (transform, b, t) in pts {
            let title = format!("{technique} on {transform}: baseline {b:.4}, technique {t:.4}");
            svg.circle(x.map(*b), y.map(*t), 3.5, &format!("fill=\"{}\"", color(i)), Some(&title));
        }
        svg.close_group();
    }
    let entries: Vec<(String, &str)> = series.keys().enumerate().map(|(i, m)| (m.clone(), color(i))).collect();
    legend(&mut svg, MARGIN_LEFT + pw + 20.0, MARGIN_TOP + 10.0, &entries);
    svg.finish()
}
