//! Deterministic SVG figures: word clouds, heatmaps, boxplots, sweep
//! charts, PCA scatterplots and dendrograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::analytics::{GenreTopicTable, SectionDistribution};
use crate::cluster::{cut_tree, MergeTree, PcaResult};
use crate::corpus::Genre;
use crate::num::Scalar;
use crate::sweep::{format_interval, SweepResult};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("nothing to draw for {0}")]
    EmptyInput(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    pub fn parse(hex: &str) -> Option<Rgb> {
        let h = hex.strip_prefix('#')?;
        if h.len() != 6 {
            return None;
        }
        let c = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).ok();
        Some(Rgb(c(0)?, c(2)?, c(4)?))
    }

    /// Linear blend, `t = 0` gives `self`.
    pub fn lerp(self, other: Rgb, t: f64) -> Rgb {
        let f = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8;
        Rgb(f(self.0, other.0), f(self.1, other.1), f(self.2, other.2))
    }
}

pub const WHITE: Rgb = Rgb(255, 255, 255);
pub const BLACK: Rgb = Rgb(0, 0, 0);

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub genres: BTreeMap<String, Rgb>,
    pub fallback: Rgb,
    /// Endpoint for the most negative values of the diverging scale.
    pub low: Rgb,
    /// Endpoint for the most positive values.
    pub high: Rgb,
    /// Cycled over clusters and series.
    pub cycle: Vec<Rgb>,
}

impl Default for Palette {
    fn default() -> Self {
        let red = Rgb(0xd6, 0x27, 0x28);
        let blue = Rgb(0x1f, 0x77, 0xb4);
        let green = Rgb(0x2c, 0xa0, 0x2c);
        let genres = [("comedy", red), ("tragedy", blue), ("tragicomedy", green)]
            .into_iter()
            .map(|(g, c)| (g.to_string(), c))
            .collect();
        Palette {
            genres,
            fallback: Rgb(0x7f, 0x7f, 0x7f),
            low: blue,
            high: red,
            cycle: vec![
                Rgb(0x1f, 0x77, 0xb4),
                Rgb(0xff, 0x7f, 0x0e),
                Rgb(0x2c, 0xa0, 0x2c),
                Rgb(0xd6, 0x27, 0x28),
                Rgb(0x94, 0x67, 0xbd),
                Rgb(0x8c, 0x56, 0x4b),
                Rgb(0xe3, 0x77, 0xc2),
                Rgb(0xbc, 0xbd, 0x22),
                Rgb(0x17, 0xbe, 0xcf),
            ],
        }
    }
}

impl Palette {
    pub fn genre(&self, genre: &str) -> Rgb {
        self.genres.get(genre).copied().unwrap_or(self.fallback)
    }

    pub fn cycled(&self, i: usize) -> Rgb {
        self.cycle[i % self.cycle.len()]
    }

    /// White at zero, `high` at `+z_max`, `low` at `-z_max`; clamped.
    pub fn diverging(&self, z: f64, z_max: f64) -> Rgb {
        let t = if z_max > 0.0 { (z / z_max).clamp(-1.0, 1.0) } else { 0.0 };
        if t >= 0.0 {
            WHITE.lerp(self.high, t)
        } else {
            WHITE.lerp(self.low, -t)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Line {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
    },
    Path {
        d: String,
    },
    Text {
        x: f64,
        y: f64,
        size: f64,
        content: String,
        anchor: &'static str,
        rotate: f64,
    },
}

/// A drawing primitive plus its styling and a role tag that identifies
/// which data item it represents (`"word"`, `"cell"`, `"point"`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub shape: Shape,
    pub fill: Option<Rgb>,
    pub stroke: Option<Rgb>,
    pub stroke_width: f64,
    pub role: &'static str,
}

impl Element {
    fn new(shape: Shape, role: &'static str) -> Self {
        Element {
            shape,
            fill: None,
            stroke: None,
            stroke_width: 1.0,
            role,
        }
    }

    fn fill(mut self, c: Rgb) -> Self {
        self.fill = Some(c);
        self
    }

    fn stroke(mut self, c: Rgb, width: f64) -> Self {
        self.stroke = Some(c);
        self.stroke_width = width;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub width: u32,
    pub height: u32,
    pub elements: Vec<Element>,
}

/// Fixed-precision number formatting so output is byte-stable.
fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
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

impl Figure {
    pub fn new(width: u32, height: u32) -> Self {
        Figure {
            width,
            height,
            elements: Vec::new(),
        }
    }

    pub fn count(&self, role: &str) -> usize {
        self.elements.iter().filter(|e| e.role == role).count()
    }

    fn push(&mut self, e: Element) {
        self.elements.push(e);
    }

    fn text(
        &mut self,
        x: f64,
        y: f64,
        size: f64,
        content: impl Into<String>,
        anchor: &'static str,
        role: &'static str,
    ) {
        self.push(
            Element::new(
                Shape::Text {
                    x,
                    y,
                    size,
                    content: content.into(),
                    anchor,
                    rotate: 0.0,
                },
                role,
            )
            .fill(BLACK),
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: Rgb, role: &'static str) {
        self.push(Element::new(Shape::Line { x1, y1, x2, y2 }, role).stroke(color, 1.0));
    }

    /// Whether every coordinate is finite.
    pub fn is_finite(&self) -> bool {
        self.elements.iter().all(|e| match &e.shape {
            Shape::Rect { x, y, w, h } => [x, y, w, h].iter().all(|v| v.is_finite()),
            Shape::Circle { cx, cy, r } => [cx, cy, r].iter().all(|v| v.is_finite()),
            Shape::Line { x1, y1, x2, y2 } => [x1, y1, x2, y2].iter().all(|v| v.is_finite()),
            Shape::Path { d } => !d.contains("NaN") && !d.contains("inf"),
            Shape::Text { x, y, size, .. } => [x, y, size].iter().all(|v| v.is_finite()),
        })
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(
            s,
            r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
            self.width, self.height
        );
        for e in &self.elements {
            let mut style = format!(r#" fill="{}""#, e.fill.map_or("none".to_string(), Rgb::hex));
            if let Some(c) = e.stroke {
                let _ = write!(style, r#" stroke="{}" stroke-width="{}""#, c.hex(), num(e.stroke_width));
            }
            let role = e.role;
            let _ = match &e.shape {
                Shape::Rect { x, y, w, h } => writeln!(
                    s,
                    r#"<rect class="{role}" x="{}" y="{}" width="{}" height="{}"{style}/>"#,
                    num(*x),
                    num(*y),
                    num(*w),
                    num(*h)
                ),
                Shape::Circle { cx, cy, r } => writeln!(
                    s,
                    r#"<circle class="{role}" cx="{}" cy="{}" r="{}"{style}/>"#,
                    num(*cx),
                    num(*cy),
                    num(*r)
                ),
                Shape::Line { x1, y1, x2, y2 } => writeln!(
                    s,
                    r#"<line class="{role}" x1="{}" y1="{}" x2="{}" y2="{}"{style}/>"#,
                    num(*x1),
                    num(*y1),
                    num(*x2),
                    num(*y2)
                ),
                Shape::Path { d } => writeln!(s, r#"<path class="{role}" d="{d}"{style}/>"#),
                Shape::Text {
                    x,
                    y,
                    size,
                    content,
                    anchor,
                    rotate,
                } => {
                    let transform = if *rotate != 0.0 {
                        format!(r#" transform="rotate({} {} {})""#, num(*rotate), num(*x), num(*y))
                    } else {
                        String::new()
                    };
                    writeln!(
                        s,
                        r#"<text class="{role}" x="{}" y="{}" font-size="{}" text-anchor="{anchor}"{transform}{style}>{}</text>"#,
                        num(*x),
                        num(*y),
                        num(*size),
                        escape(content)
                    )
                }
            };
        }
        s.push_str("</svg>\n");
        s
    }
}

pub const MIN_FONT: f64 = 10.0;
pub const MAX_FONT: f64 = 64.0;

/// Font sizes mapped linearly from `[min prob, max prob]` onto
/// `[10, 64]`; equal probabilities all get 64.
pub fn wordcloud_sizes(probs: &[f64]) -> Vec<f64> {
    let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    probs
        .iter()
        .map(|&p| {
            if hi > lo {
                MIN_FONT + (p - lo) / (hi - lo) * (MAX_FONT - MIN_FONT)
            } else {
                MAX_FONT
            }
        })
        .collect()
}

/// Packed rows of words in descending probability, wrapping at the
/// figure width.
pub fn wordcloud(words: &[(String, f64)], n: usize) -> Result<Figure, ReportError> {
    if words.is_empty() || n == 0 {
        return Err(ReportError::EmptyInput("word cloud"));
    }
    if let Some((w, p)) = words.iter().find(|(_, p)| !(*p > 0.0 && p.is_finite())) {
        return Err(ReportError::InvalidInput(format!("word `{w}` has probability {p}")));
    }
    let mut sorted: Vec<&(String, f64)> = words.iter().collect();
    sorted.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    sorted.truncate(n);
    let sizes = wordcloud_sizes(&sorted.iter().map(|w| w.1).collect::<Vec<_>>());
    let width = 800.0;
    let margin = 10.0;
    let mut fig = Figure::new(width as u32, 0);
    let (mut x, mut baseline, mut row_height) = (margin, margin, 0.0f64);
    for ((word, _), size) in sorted.iter().map(|w| (&w.0, w.1)).zip(sizes) {
        let w = 0.6 * size * word.chars().count() as f64;
        if x > margin && x + w > width - margin {
            baseline += row_height * 1.15;
            x = margin;
            row_height = 0.0;
        }
        if row_height == 0.0 {
            row_height = size;
        }
        row_height = row_height.max(size);
        fig.push(
            Element::new(
                Shape::Text {
                    x,
                    y: baseline + size,
                    size,
                    content: word.clone(),
                    anchor: "start",
                    rotate: 0.0,
                },
                "word",
            )
            .fill(Rgb(0x33, 0x33, 0x33)),
        );
        x += w + 0.3 * size;
    }
    // Word baselines sit at `row top + own size`; rows grow downward.
    fig.height = (baseline + row_height * 1.15 + margin).ceil() as u32;
    Ok(fig)
}

/// Rows are the `top_n` most distinctive topics (as given by `ranked`),
/// columns the genres; cells colored by z-score on a symmetric scale.
pub fn heatmap<T: Scalar>(
    table: &GenreTopicTable<T>,
    ranked: &[usize],
    top_n: usize,
    topic_labels: &[String],
    palette: &Palette,
) -> Result<Figure, ReportError> {
    let rows: Vec<usize> = ranked.iter().copied().take(top_n).collect();
    if rows.is_empty() || table.genres.is_empty() {
        return Err(ReportError::EmptyInput("heatmap"));
    }
    if let Some(&t) = rows.iter().find(|&&t| t >= table.num_topics()) {
        return Err(ReportError::InvalidInput(format!("topic {t} out of range")));
    }
    let z_max = rows
        .iter()
        .flat_map(|&t| table.row_normalized.iter().map(move |r| r[t].as_f64().abs()))
        .fold(0.0, f64::max);
    let (cell_w, cell_h, left, top) = (70.0, 18.0, 260.0, 40.0);
    let width = left + cell_w * table.genres.len() as f64 + 20.0;
    let height = top + cell_h * rows.len() as f64 + 20.0;
    let mut fig = Figure::new(width as u32, height as u32);
    for (g, name) in table.genres.iter().enumerate() {
        fig.text(
            left + cell_w * (g as f64 + 0.5),
            top - 8.0,
            12.0,
            name.clone(),
            "middle",
            "column",
        );
    }
    for (i, &t) in rows.iter().enumerate() {
        let y = top + cell_h * i as f64;
        let label = match topic_labels.get(t) {
            Some(l) if !l.is_empty() => format!("{t}: {l}"),
            _ => t.to_string(),
        };
        fig.text(left - 6.0, y + cell_h * 0.7, 11.0, label, "end", "row");
        for (g, z) in table.row_normalized.iter().enumerate() {
            let color = palette.diverging(z[t].as_f64(), z_max);
            fig.push(
                Element::new(
                    Shape::Rect {
                        x: left + cell_w * g as f64,
                        y,
                        w: cell_w,
                        h: cell_h,
                    },
                    "cell",
                )
                .fill(color)
                .stroke(Rgb(0xdd, 0xdd, 0xdd), 0.5),
            );
        }
    }
    Ok(fig)
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Axis { lo, hi, px_lo, px_hi }
    }

    fn at(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// One panel per distribution, five section boxes each.
pub fn boxplots<T: Scalar>(dists: &[SectionDistribution<T>], palette: &Palette) -> Result<Figure, ReportError> {
    let stats: Vec<_> = dists
        .iter()
        .flat_map(|d| d.sections.iter().filter_map(|s| s.stats.as_ref()))
        .collect();
    if stats.is_empty() {
        return Err(ReportError::EmptyInput("boxplots"));
    }
    let lo = stats
        .iter()
        .map(|s| s.min.as_f64())
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let hi = stats.iter().map(|s| s.max.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let (panel_w, panel_h, top) = (260.0, 240.0, 30.0);
    let mut fig = Figure::new(
        (panel_w * dists.len() as f64 + 20.0) as u32,
        (panel_h + top + 40.0) as u32,
    );
    let y = Axis::new(lo, hi, top + panel_h, top);
    for (p, d) in dists.iter().enumerate() {
        let x0 = 20.0 + panel_w * p as f64;
        let color = palette.genre(&d.genre);
        fig.text(
            x0 + panel_w / 2.0,
            top - 10.0,
            12.0,
            format!("topic {}, {}", d.topic, d.genre),
            "middle",
            "title",
        );
        fig.line(x0, top + panel_h, x0 + panel_w - 20.0, top + panel_h, BLACK, "axis");
        for s in &d.sections {
            let cx = x0 + 20.0 + 44.0 * f64::from(s.section - 1) + 12.0;
            fig.text(cx, top + panel_h + 16.0, 10.0, s.section.to_string(), "middle", "tick");
            let Some(b) = &s.stats else { continue };
            let (q1, q3, med) = (y.at(b.q1.as_f64()), y.at(b.q3.as_f64()), y.at(b.median.as_f64()));
            fig.push(
                Element::new(
                    Shape::Rect {
                        x: cx - 12.0,
                        y: q3,
                        w: 24.0,
                        h: q1 - q3,
                    },
                    "box",
                )
                .fill(WHITE.lerp(color, 0.35))
                .stroke(color, 1.0),
            );
            fig.line(cx - 12.0, med, cx + 12.0, med, BLACK, "median");
            if b.whisker_low < b.q1 {
                fig.line(cx, q1, cx, y.at(b.whisker_low.as_f64()), color, "whisker");
            }
            if b.whisker_high > b.q3 {
                fig.line(cx, q3, cx, y.at(b.whisker_high.as_f64()), color, "whisker");
            }
            for &o in &b.outliers {
                fig.push(
                    Element::new(
                        Shape::Circle {
                            cx,
                            cy: y.at(o.as_f64()),
                            r: 2.0,
                        },
                        "outlier",
                    )
                    .stroke(color, 0.8),
                );
            }
        }
    }
    Ok(fig)
}

/// Mean accuracy per classifier across grid cells (K-major order), one
/// line per classifier.
pub fn sweep_chart(result: &SweepResult, palette: &Palette) -> Result<Figure, ReportError> {
    let cells: Vec<_> = result.cells.iter().filter(|c| !c.failed()).collect();
    if cells.is_empty() {
        return Err(ReportError::EmptyInput("sweep chart"));
    }
    let mut kinds: Vec<_> = cells
        .iter()
        .flat_map(|c| c.scores.iter().map(|s| s.spec.kind()))
        .collect();
    kinds.sort();
    kinds.dedup();
    let (left, top, plot_w, plot_h) = (60.0, 30.0, (cells.len() as f64 * 40.0).max(300.0), 300.0);
    let mut fig = Figure::new((left + plot_w + 160.0) as u32, (top + plot_h + 90.0) as u32);
    let x = Axis::new(0.0, (cells.len().max(2) - 1) as f64, left + 10.0, left + plot_w - 10.0);
    let y = Axis::new(0.0, 1.0, top + plot_h, top);
    fig.line(left, top + plot_h, left + plot_w, top + plot_h, BLACK, "axis");
    fig.line(left, top, left, top + plot_h, BLACK, "axis");
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        fig.text(left - 6.0, y.at(v) + 4.0, 10.0, format!("{v:.1}"), "end", "tick");
    }
    for (i, c) in cells.iter().enumerate() {
        let label = format!("{}/{}", c.num_topics, format_interval(c.optimize_interval));
        let mut e = Element::new(
            Shape::Text {
                x: x.at(i as f64),
                y: top + plot_h + 14.0,
                size: 9.0,
                content: label,
                anchor: "end",
                rotate: -45.0,
            },
            "tick",
        );
        e.fill = Some(BLACK);
        fig.push(e);
    }
    fig.text(
        left + plot_w / 2.0,
        top + plot_h + 80.0,
        12.0,
        "topics / optimize interval",
        "middle",
        "axis-label",
    );
    fig.text(left - 40.0, top - 10.0, 12.0, "mean accuracy", "start", "axis-label");
    for (ki, kind) in kinds.iter().enumerate() {
        let color = palette.cycled(ki);
        let points: Vec<(f64, f64)> = cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                c.scores
                    .iter()
                    .find(|s| s.spec.kind() == *kind)
                    .map(|s| (x.at(i as f64), y.at(s.mean_accuracy)))
            })
            .collect();
        let mut d = String::new();
        for (j, (px, py)) in points.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if j == 0 { "M" } else { " L" }, num(*px), num(*py));
        }
        fig.push(Element::new(Shape::Path { d }, "series").stroke(color, 1.5));
        for (px, py) in points {
            fig.push(Element::new(Shape::Circle { cx: px, cy: py, r: 3.0 }, "point").fill(color));
        }
        let ly = top + 16.0 * ki as f64;
        fig.line(left + plot_w + 20.0, ly, left + plot_w + 40.0, ly, color, "legend");
        fig.text(left + plot_w + 46.0, ly + 4.0, 11.0, kind.as_str(), "start", "legend");
    }
    Ok(fig)
}

pub fn component_label(component: usize, ratio: f64) -> String {
    format!("PC{} ({}%)", component + 1, (ratio * 100.0).round())
}

/// PC1 x PC2, one dot per play colored by genre.
pub fn scatter<T: Scalar>(pca: &PcaResult<T>, genres: &[String], palette: &Palette) -> Result<Figure, ReportError> {
    if pca.scores.is_empty() {
        return Err(ReportError::EmptyInput("scatter"));
    }
    if pca.component_loadings.len() < 2 {
        return Err(ReportError::InvalidInput("scatter needs two components".into()));
    }
    if genres.len() != pca.scores.len() {
        return Err(ReportError::InvalidInput(format!(
            "{} genres for {} plays",
            genres.len(),
            pca.scores.len()
        )));
    }
    let xs: Vec<f64> = pca.scores.iter().map(|s| s[0].as_f64()).collect();
    let ys: Vec<f64> = pca.scores.iter().map(|s| s[1].as_f64()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-9);
        (lo - pad, hi + pad)
    };
    let (left, top, size) = (60.0, 20.0, 480.0);
    let mut fig = Figure::new((left + size + 150.0) as u32, (top + size + 60.0) as u32);
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let x = Axis::new(x0, x1, left, left + size);
    let y = Axis::new(y0, y1, top + size, top);
    fig.line(left, top + size, left + size, top + size, BLACK, "axis");
    fig.line(left, top, left, top + size, BLACK, "axis");
    let r = &pca.explained_variance_ratio;
    fig.text(
        left + size / 2.0,
        top + size + 40.0,
        12.0,
        component_label(0, r[0].as_f64()),
        "middle",
        "axis-label",
    );
    let mut e = Element::new(
        Shape::Text {
            x: left - 40.0,
            y: top + size / 2.0,
            size: 12.0,
            content: component_label(1, r[1].as_f64()),
            anchor: "middle",
            rotate: -90.0,
        },
        "axis-label",
    );
    e.fill = Some(BLACK);
    fig.push(e);
    for ((&px, &py), g) in xs.iter().zip(&ys).zip(genres) {
        fig.push(
            Element::new(
                Shape::Circle {
                    cx: x.at(px),
                    cy: y.at(py),
                    r: 3.5,
                },
                "point",
            )
            .fill(palette.genre(g)),
        );
    }
    let mut seen: Vec<&String> = genres.iter().collect();
    seen.sort();
    seen.dedup();
    for (i, g) in seen.into_iter().enumerate() {
        let ly = top + 10.0 + 18.0 * i as f64;
        fig.push(
            Element::new(
                Shape::Circle {
                    cx: left + size + 20.0,
                    cy: ly,
                    r: 4.0,
                },
                "legend",
            )
            .fill(palette.genre(g)),
        );
        fig.text(left + size + 30.0, ly + 4.0, 11.0, g.clone(), "start", "legend");
    }
    Ok(fig)
}

/// `play_id-CODE` with the two-letter genre code.
pub fn leaf_label(play_id: &str, genre: &str) -> String {
    format!("{play_id}-{}", Genre::from_canonical(genre).code())
}

/// Merge tree drawn top-down. Merges at or above `threshold` are black;
/// each subtree below it takes the cycled color of its flat cluster.
pub fn dendrogram<T: Scalar>(
    tree: &MergeTree<T>,
    threshold: f64,
    labels: &[String],
    palette: &Palette,
) -> Result<Figure, ReportError> {
    if tree.merges.is_empty() {
        return Err(ReportError::EmptyInput("dendrogram"));
    }
    if labels.len() != tree.n_leaves {
        return Err(ReportError::InvalidInput(format!(
            "{} labels for {} leaves",
            labels.len(),
            tree.n_leaves
        )));
    }
    let n = tree.n_leaves;
    let order = tree.leaf_order();
    let clusters = cut_tree(tree, T::lit(threshold));
    let (left, top, spacing, plot_h) = (40.0, 20.0, 14.0, 360.0);
    let width = left * 2.0 + spacing * n as f64;
    let mut fig = Figure::new(width as u32, (top + plot_h + 140.0) as u32);
    let y = Axis::new(0.0, tree.root_height().as_f64(), top + plot_h, top);
    let mut pos = vec![0.0; n + tree.merges.len()];
    let mut height = vec![0.0; n + tree.merges.len()];
    let mut first_leaf = vec![0usize; n + tree.merges.len()];
    for (slot, &leaf) in order.iter().enumerate() {
        pos[leaf] = left + spacing * (slot as f64 + 0.5);
        first_leaf[leaf] = leaf;
    }
    for (i, m) in tree.merges.iter().enumerate() {
        let id = n + i;
        pos[id] = (pos[m.a] + pos[m.b]) / 2.0;
        height[id] = m.height.as_f64();
        first_leaf[id] = first_leaf[m.a];
        let color = if m.height.as_f64() < threshold {
            palette.cycled(clusters[first_leaf[m.a]])
        } else {
            BLACK
        };
        let (ya, yb, ym) = (y.at(height[m.a]), y.at(height[m.b]), y.at(height[id]));
        let d = format!(
            "M{} {} V{} H{} V{}",
            num(pos[m.a]),
            num(ya),
            num(ym),
            num(pos[m.b]),
            num(yb)
        );
        fig.push(Element::new(Shape::Path { d }, "branch").stroke(color, 1.2));
    }
    if threshold <= tree.root_height().as_f64() {
        let ty = y.at(threshold);
        fig.push(
            Element::new(
                Shape::Line {
                    x1: left,
                    y1: ty,
                    x2: width - left,
                    y2: ty,
                },
                "threshold",
            )
            .stroke(Rgb(0x99, 0x99, 0x99), 0.8),
        );
    }
    for &leaf in &order {
        let mut e = Element::new(
            Shape::Text {
                x: pos[leaf],
                y: top + plot_h + 8.0,
                size: 9.0,
                content: labels[leaf].clone(),
                anchor: "end",
                rotate: -90.0,
            },
            "leaf",
        );
        e.fill = Some(BLACK);
        fig.push(e);
    }
    Ok(fig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{box_stats, SectionStats};
    use crate::cluster::{pca, ward_linkage};
    use crate::corpus::check_well_formed;

    fn words(list: &[(&str, f64)]) -> Vec<(String, f64)> {
        list.iter().map(|(w, p)| (w.to_string(), *p)).collect()
    }

    fn text_sizes(f: &Figure) -> Vec<f64> {
        f.elements
            .iter()
            .filter_map(|e| match &e.shape {
                Shape::Text { size, .. } if e.role == "word" => Some(*size),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn wordcloud_sizes_and_determinism() {
        let f = wordcloud(&words(&[("amour", 0.3)]), 40).unwrap();
        assert_eq!(text_sizes(&f), vec![64.0]);
        let w = words(&[("mort", 0.1), ("sang", 0.2)]);
        let f = wordcloud(&w, 40).unwrap();
        assert_eq!(text_sizes(&f), vec![64.0, 10.0]);
        assert_eq!(f.to_svg(), wordcloud(&w, 40).unwrap().to_svg());
        assert!(check_well_formed(f.to_svg().as_bytes()).is_ok());
        assert!(wordcloud(&[], 40).is_err());
        assert!(wordcloud(&words(&[("x", 0.0)]), 40).is_err());
    }

    #[test]
    fn wordcloud_wraps_and_keeps_every_word() {
        let many: Vec<(String, f64)> = (0..60).map(|i| (format!("mot{i:02}"), 1.0 / (i + 1) as f64)).collect();
        let f = wordcloud(&many, 40).unwrap();
        assert_eq!(f.count("word"), 40);
        assert!(f.height > 100);
        assert!(f.is_finite());
    }

    #[test]
    fn diverging_scale() {
        let p = Palette::default();
        assert_eq!(p.diverging(0.0, 2.0), WHITE);
        assert_eq!(p.diverging(2.0, 2.0).hex(), "#d62728");
        assert_eq!(p.diverging(-2.0, 2.0).hex(), "#1f77b4");
        assert_eq!(p.diverging(5.0, 2.0), p.diverging(2.0, 2.0));
    }

    #[test]
    fn heatmap_colors_match_hand_interpolation() {
        let table = GenreTopicTable {
            genres: vec!["comedy".into(), "tragedy".into()],
            means: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            stds_across_genres: vec![0.2, 0.1],
            row_normalized: vec![vec![1.0, -0.5], vec![-1.0, 0.5]],
        };
        let f = heatmap(
            &table,
            &[0, 1],
            2,
            &["a b c".into(), "d e f".into()],
            &Palette::default(),
        )
        .unwrap();
        let fills: Vec<Rgb> = f
            .elements
            .iter()
            .filter(|e| e.role == "cell")
            .map(|e| e.fill.unwrap())
            .collect();
        // z_max = 1: topic 0 -> full red / full blue; topic 1 -> half-way.
        let half = |c: (f64, f64, f64)| {
            Rgb(
                (255.0 + (c.0 - 255.0) * 0.5).round() as u8,
                (255.0 + (c.1 - 255.0) * 0.5).round() as u8,
                (255.0 + (c.2 - 255.0) * 0.5).round() as u8,
            )
        };
        let expected = [
            Rgb(214, 39, 40),
            Rgb(31, 119, 180),
            half((31.0, 119.0, 180.0)),
            half((214.0, 39.0, 40.0)),
        ];
        for (got, want) in fills.iter().zip(expected) {
            for (g, w) in [(got.0, want.0), (got.1, want.1), (got.2, want.2)] {
                assert!((i16::from(g) - i16::from(w)).abs() <= 1);
            }
        }
        assert_eq!(f.count("cell"), 4);
        assert_eq!(f.count("row"), 2);
        assert!(check_well_formed(f.to_svg().as_bytes()).is_ok());
    }

    #[test]
    fn constant_boxplot_is_a_line() {
        let b = box_stats(&[0.2; 6]).unwrap();
        let d = SectionDistribution {
            topic: 3,
            genre: "tragedy".into(),
            sections: (1..=5)
                .map(|s| SectionStats {
                    section: s,
                    n: if s == 1 { 6 } else { 0 },
                    stats: if s == 1 { Some(b.clone()) } else { None },
                })
                .collect(),
        };
        let f = boxplots(&[d], &Palette::default()).unwrap();
        assert_eq!(f.count("box"), 1);
        assert_eq!(f.count("whisker"), 0);
        assert_eq!(f.count("outlier"), 0);
        let Some(Shape::Rect { h, .. }) = f.elements.iter().find(|e| e.role == "box").map(|e| &e.shape) else {
            panic!()
        };
        assert_eq!(*h, 0.0);
    }

    #[test]
    fn scatter_axis_labels() {
        assert_eq!(component_label(0, 0.11), "PC1 (11%)");
        let rows = vec![
            vec![0.0, 1.0, 0.5],
            vec![1.0, 0.0, 0.2],
            vec![0.5, 0.5, 0.9],
            vec![0.2, 0.1, 0.3],
        ];
        let p = pca(&rows, 2, false).unwrap();
        let genres: Vec<String> = ["comedy", "tragedy", "tragicomedy", "comedy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let f = scatter(&p, &genres, &Palette::default()).unwrap();
        assert_eq!(f.count("point"), 4);
        let svg = f.to_svg();
        assert!(svg.contains(&component_label(0, p.explained_variance_ratio[0])));
        assert!(svg.contains("#d62728") && svg.contains("#1f77b4") && svg.contains("#2ca02c"));
        assert!(check_well_formed(svg.as_bytes()).is_ok());
    }

    #[test]
    fn dendrogram_coloring() {
        let rows = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let t = ward_linkage(&rows).unwrap();
        let labels: Vec<String> = ["a", "b", "c", "d"]
            .iter()
            .zip(["comedy", "tragedy", "tragicomedy", "other"])
            .map(|(p, g)| leaf_label(p, g))
            .collect();
        assert_eq!(labels, vec!["a-CO", "b-TR", "c-TC", "d-OT"]);
        let f = dendrogram(&t, 1000.0, &labels, &Palette::default()).unwrap();
        let colors: std::collections::HashSet<Rgb> = f
            .elements
            .iter()
            .filter(|e| e.role == "branch")
            .map(|e| e.stroke.unwrap())
            .collect();
        assert_eq!(colors.len(), 1);
        assert_eq!(f.count("branch"), 3);
        assert_eq!(f.count("leaf"), 4);
        let f = dendrogram(&t, 5.0, &labels, &Palette::default()).unwrap();
        let colors: Vec<Rgb> = f
            .elements
            .iter()
            .filter(|e| e.role == "branch")
            .map(|e| e.stroke.unwrap())
            .collect();
        assert_eq!(colors[2], BLACK);
        assert_ne!(colors[0], colors[1]);
        assert!(check_well_formed(f.to_svg().as_bytes()).is_ok());
        assert!(dendrogram(&t, 5.0, &labels[..2], &Palette::default()).is_err());
    }

    #[test]
    fn text_is_escaped() {
        let f = wordcloud(&words(&[("a<b&c", 0.5)]), 5).unwrap();
        let svg = f.to_svg();
        assert!(svg.contains("a&lt;b&amp;c"));
        assert!(check_well_formed(svg.as_bytes()).is_ok());
    }
}
