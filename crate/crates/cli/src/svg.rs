//! Minimal SVG writer.
//!
//! Coordinates are printed with a fixed number of decimals so identical inputs give identical
//! files. Every data series is wrapped in `<g class="series" data-series="...">`.

use std::fmt::Write;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Fixed two-decimal formatting with `-0.00` normalized.
pub fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
    depth: usize,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new(), depth: 0 }
    }

    fn line_out(&mut self, s: &str) {
        for _ in 0..=self.depth {
            self.body.push_str("  ");
        }
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn open_group(&mut self, attrs: &[(&str, &str)]) {
        let mut s = String::from("<g");
        for (k, v) in attrs {
            let _ = write!(s, " {k}=\"{}\"", escape(v));
        }
        s.push('>');
        self.line_out(&s);
        self.depth += 1;
    }

    pub fn open_series(&mut self, name: &str) {
        self.open_group(&[("class", "series"), ("data-series", name)]);
    }

    pub fn close_group(&mut self) {
        self.depth -= 1;
        self.line_out("</g>");
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str, title: Option<&str>) {
        let open = format!("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {style}", num(x), num(y), num(w), num(h));
        self.shape(open, "rect", title);
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, style: &str, title: Option<&str>) {
        let open = format!("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" {style}", num(cx), num(cy), num(r));
        self.shape(open, "circle", title);
    }

    fn shape(&mut self, open: String, tag: &str, title: Option<&str>) {
        match title {
            Some(t) => self.line_out(&format!("{open}><title>{}</title></{tag}>", escape(t))),
            None => self.line_out(&format!("{open}/>")),
        }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        self.line_out(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>",
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], style: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
        self.line_out(&format!("<polyline points=\"{}\" fill=\"none\" {style}/>", pts.join(" ")));
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, style: &str) {
        self.line_out(&format!("<text x=\"{}\" y=\"{}\" {style}>{}</text>", num(x), num(y), escape(s)));
    }

    pub fn finish(self) -> String {
        assert_eq!(self.depth, 0, "unbalanced groups");
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n  <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = num(self.width),
            h = num(self.height),
        )
    }
}

/// Categorical palette cycled by series index.
pub fn color(i: usize) -> &'static str {
    const PALETTE: [&str; 10] =
        ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
    PALETTE[i % PALETTE.len()]
}

/// Blue (−1) through white (0) to red (+1).
pub fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub d0: f64,
    pub d1: f64,
    pub p0: f64,
    pub p1: f64,
}

impl Scale {
    pub fn new(domain: (f64, f64), pixels: (f64, f64)) -> Self {
        let (mut d0, mut d1) = domain;
        if !(d1 > d0) {
            d0 -= 0.5;
            d1 = d0 + 1.0;
        }
        Self { d0, d1, p0: pixels.0, p1: pixels.1 }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    /// `n + 1` evenly spaced tick values.
    pub fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|i| self.d0 + (self.d1 - self.d0) * i as f64 / n as f64).collect()
    }
}

/// Data range padded by 5% on each side, falling back to `[0, 1]` when empty.
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, scale: &Scale) -> String {
    if (scale.d1 - scale.d0).abs() >= 20.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Draws the frame, ticks and labels of a plotting area.
pub fn axes(svg: &mut Svg, x: &Scale, y: &Scale, x_label: &str, y_label: &str, ticks: usize) {
    let axis = "stroke=\"#333\" stroke-width=\"1\"";
    let grid = "stroke=\"#ddd\" stroke-width=\"0.5\"";
    svg.open_group(&[("class", "axes")]);
    for t in y.ticks(ticks) {
        let py = y.map(t);
        svg.line(x.p0, py, x.p1, py, grid);
        svg.text(x.p0 - 4.0, py + 3.5, &tick_label(t, y), "text-anchor=\"end\"");
    }
    for t in x.ticks(ticks) {
        let px = x.map(t);
        svg.line(px, y.p0, px, y.p1, grid);
        svg.text(px, y.p0 + 14.0, &tick_label(t, x), "text-anchor=\"middle\"");
    }
    svg.line(x.p0, y.p0, x.p1, y.p0, axis);
    svg.line(x.p0, y.p0, x.p0, y.p1, axis);
    svg.text((x.p0 + x.p1) / 2.0, y.p0 + 30.0, x_label, "text-anchor=\"middle\"");
    let (lx, ly) = (x.p0 - 40.0, (y.p0 + y.p1) / 2.0);
    svg.text(
        lx,
        ly,
        y_label,
        &format!("text-anchor=\"middle\" transform=\"rotate(-90 {} {})\"", num(lx), num(ly)),
    );
    svg.close_group();
}

/// Legend entries stacked at `(x, y)`.
pub fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(String, &str)]) {
    svg.open_group(&[("class", "legend")]);
    for (i, (label, col)) in entries.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        svg.rect(x, yy - 8.0, 10.0, 10.0, &format!("fill=\"{col}\""), None);
        svg.text(x + 14.0, yy + 1.0, label, "");
    }
    svg.close_group();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn numbers_are_stable() {
        assert_eq!(num(-0.0001), "0.00");
        assert_eq!(num(1.005), format!("{:.2}", 1.005));
    }

    #[test]
    fn scale_maps_endpoints_and_handles_degenerate_domain() {
        let s = Scale::new((0.0, 10.0), (100.0, 0.0));
        assert_eq!(s.map(0.0), 100.0);
        assert_eq!(s.map(10.0), 0.0);
        let d = Scale::new((3.0, 3.0), (0.0, 1.0));
        assert!(d.map(3.0).is_finite());
    }

    #[test]
    fn diverging_endpoints() {
        assert_eq!(diverging(1.0), "#ff0000");
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(-1.0), "#0000ff");
    }
}
