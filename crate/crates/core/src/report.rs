//! Plots as deterministic SVG plus a CSV sidecar holding every plotted
//! number. Output for `<stem>` goes to `<stem>.csv` and `<stem>.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::PreliminaryResults;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const COLD: [u8; 3] = [0x21, 0x66, 0xac];
const NEUTRAL: [u8; 3] = [0xf7, 0xf7, 0xf7];
const WARM: [u8; 3] = [0xb2, 0x18, 0x2b];
const SERIES_COLORS: [&str; 2] = ["#2166ac", "#b2182b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    LineCompare,
    Heatmap,
    ScatterFit,
    LinePair,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::LineCompare => "line_compare",
            PlotKind::Heatmap => "heatmap",
            PlotKind::ScatterFit => "scatter_fit",
            PlotKind::LinePair => "line_pair",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Matrix {
        rows: Vec<String>,
        cols: Vec<String>,
        values: Vec<Vec<f64>>,
    },
    Points {
        labels: Vec<String>,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Series {
        x_labels: Vec<String>,
        a: (String, Vec<f64>),
        b: (String, Vec<f64>),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotBundle {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares line; `None` when every x is the same.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// Files written for one plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub warnings: Vec<String>,
}

impl PlotBundle {
    pub fn heatmap(rows: Vec<String>, cols: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != rows.len() {
            return Err(Error::LengthMismatch(rows.len(), values.len()));
        }
        for row in &values {
            if row.len() != cols.len() {
                return Err(Error::ShapeMismatch {
                    expected: cols.len(),
                    got: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(Error::InvalidArgument(format!("heatmap value {v} outside [-1, 1]")));
            }
        }
        Ok(PlotBundle {
            kind: PlotKind::Heatmap,
            title: "SHAP-LIME correlation".into(),
            x_label: "feature".into(),
            y_label: "model".into(),
            payload: Payload::Matrix { rows, cols, values },
        })
    }

    pub fn scatter_fit(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || labels.len() != x.len() {
            return Err(Error::LengthMismatch(x.len(), y.len().min(labels.len())));
        }
        if x.len() < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: x.len() });
        }
        Ok(PlotBundle {
            kind: PlotKind::ScatterFit,
            title: "Correlation vs accuracy".into(),
            x_label: "average correlation".into(),
            y_label: "accuracy".into(),
            payload: Payload::Points { labels, x, y },
        })
    }

    pub fn line_pair(x_labels: Vec<String>, a: (String, Vec<f64>), b: (String, Vec<f64>)) -> Result<Self> {
        if a.1.len() != b.1.len() || x_labels.len() != a.1.len() {
            return Err(Error::LengthMismatch(a.1.len(), b.1.len()));
        }
        if a.1.len() < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: a.1.len() });
        }
        Ok(PlotBundle {
            kind: PlotKind::LinePair,
            title: format!("{} and {}", a.0, b.0),
            x_label: "model".into(),
            y_label: "correlation".into(),
            payload: Payload::Series { x_labels, a, b },
        })
    }

    /// A line pair of two explainers' scores for one feature over instances.
    pub fn line_compare(feature: &str, a: (String, Vec<f64>), b: (String, Vec<f64>)) -> Result<Self> {
        let x_labels = (0..a.1.len()).map(|i| i.to_string()).collect();
        let mut bundle = Self::line_pair(x_labels, a, b)?;
        bundle.kind = PlotKind::LineCompare;
        bundle.title = format!("Importance of {feature}");
        bundle.x_label = "instance".into();
        bundle.y_label = "importance score".into();
        Ok(bundle)
    }

    pub fn titled(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }

    pub fn fit(&self) -> Option<LineFit> {
        match &self.payload {
            Payload::Points { x, y, .. } => fit_line(x, y),
            _ => None,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.kind == PlotKind::ScatterFit && self.fit().is_none() {
            vec!["all x values are identical; no fit line drawn".into()]
        } else {
            Vec::new()
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        match &self.payload {
            Payload::Matrix { rows, cols, values } => {
                out.push_str("row,column,value\n");
                for (r, row) in rows.iter().zip(values) {
                    for (c, v) in cols.iter().zip(row) {
                        let _ = writeln!(out, "{},{},{v}", csv_field(r), csv_field(c));
                    }
                }
            }
            Payload::Points { labels, x, y } => {
                out.push_str("label,x,y\n");
                for ((l, a), b) in labels.iter().zip(x).zip(y) {
                    let _ = writeln!(out, "{},{a},{b}", csv_field(l));
                }
                match self.fit() {
                    Some(f) => {
                        let _ = writeln!(out, "# slope={}", f.slope);
                        let _ = writeln!(out, "# intercept={}", f.intercept);
                    }
                    None => out.push_str("# fit=none\n"),
                }
            }
            Payload::Series { x_labels, a, b } => {
                let _ = writeln!(out, "x,{},{}", csv_field(&a.0), csv_field(&b.0));
                for ((l, u), v) in x_labels.iter().zip(&a.1).zip(&b.1) {
                    let _ = writeln!(out, "{},{u},{v}", csv_field(l));
                }
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let mut svg = Svg::new(&self.title);
        match &self.payload {
            Payload::Matrix { rows, cols, values } => draw_heatmap(&mut svg, rows, cols, values),
            Payload::Points { labels, x, y } => draw_scatter(&mut svg, labels, x, y, self.fit()),
            Payload::Series { x_labels, a, b } => draw_lines(&mut svg, x_labels, a, b),
        }
        svg.axis_titles(&self.x_label, &self.y_label);
        svg.finish()
    }

    /// Writes `<stem>.csv` and `<stem>.svg`.
    pub fn emit(&self, stem: &Path) -> Result<Emitted> {
        let csv = stem.with_extension("csv");
        let svg = stem.with_extension("svg");
        if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::write(parent, e))?;
        }
        fs::write(&csv, self.to_csv_string()).map_err(|e| Error::write(&csv, e))?;
        fs::write(&svg, self.to_svg()).map_err(|e| Error::write(&svg, e))?;
        let warnings = self.warnings();
        for w in &warnings {
            log::warn!("{}: {w}", svg.display());
        }
        Ok(Emitted { csv, svg, warnings })
    }
}

pub fn emit_heatmap(rows: &[String], cols: &[String], values: &[Vec<f64>], stem: &Path) -> Result<Emitted> {
    PlotBundle::heatmap(rows.to_vec(), cols.to_vec(), values.to_vec())?.emit(stem)
}

pub fn emit_scatter_fit(labels: &[String], x: &[f64], y: &[f64], stem: &Path) -> Result<Emitted> {
    PlotBundle::scatter_fit(labels.to_vec(), x.to_vec(), y.to_vec())?.emit(stem)
}

pub fn emit_line_pair(
    x_labels: &[String],
    a: (&str, &[f64]),
    b: (&str, &[f64]),
    stem: &Path,
) -> Result<Emitted> {
    PlotBundle::line_pair(x_labels.to_vec(), (a.0.into(), a.1.to_vec()), (b.0.into(), b.1.to_vec()))?.emit(stem)
}

/// Linear blend on the diverging scale: -1 cold, 0 neutral, +1 warm.
pub fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (end, t) = if v < 0.0 { (COLD, -v) } else { (WARM, v) };
    let mix = |i: usize| (NEUTRAL[i] as f64 + (end[i] as f64 - NEUTRAL[i] as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    crate::dissonance::csv_field(s)
}

/// File-name-safe version of a label.
pub fn file_stem_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' })
        .collect()
}

struct Svg {
    body: String,
}

// Plot area inside the 800x600 canvas.
const LEFT: f64 = 130.0;
const RIGHT: f64 = 760.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 470.0;

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12pt">"##
        );
        let _ = writeln!(body, r##"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        let _ = writeln!(
            body,
            r##"<text class="title" x="{:.2}" y="30" text-anchor="middle" font-size="14pt">{}</text>"##,
            WIDTH / 2.0,
            xml_escape(title)
        );
        Svg { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, extra: &str) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#333333" {extra}/>"##
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, class: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r##"<text class="{class}" x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"##,
            xml_escape(s)
        );
    }

    /// Label rotated 45 degrees below the x axis.
    fn slanted(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r##"<text class="tick-label" x="{x:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-45 {x:.2} {y:.2})">{}</text>"##,
            xml_escape(s)
        );
    }

    fn axis_titles(&mut self, x: &str, y: &str) {
        self.text((LEFT + RIGHT) / 2.0, HEIGHT - 12.0, "middle", "axis-label", x);
        let _ = writeln!(
            self.body,
            r##"<text class="axis-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"##,
            (TOP + BOTTOM) / 2.0,
            (TOP + BOTTOM) / 2.0,
            xml_escape(y)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn draw_heatmap(svg: &mut Svg, rows: &[String], cols: &[String], values: &[Vec<f64>]) {
    // Keep the right edge free for the color key.
    let right = RIGHT - 60.0;
    let cw = (right - LEFT) / cols.len().max(1) as f64;
    let ch = (BOTTOM - TOP) / rows.len().max(1) as f64;
    for (r, (name, row)) in rows.iter().zip(values).enumerate() {
        let y = TOP + r as f64 * ch;
        for (c, v) in row.iter().enumerate() {
            let x = LEFT + c as f64 * cw;
            let _ = writeln!(
                svg.body,
                r##"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}" stroke="#ffffff"><title>{}</title></rect>"##,
                diverging_color(*v),
                format_args!("{}, {}: {v:.3}", xml_escape(name), xml_escape(&cols[c])),
            );
            if rows.len() * cols.len() <= 120 {
                let ink = if v.abs() > 0.6 { "#ffffff" } else { "#000000" };
                let _ = writeln!(
                    svg.body,
                    r##"<text class="cell-value" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9pt" fill="{ink}">{v:.2}</text>"##,
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                );
            }
        }
        svg.text(LEFT - 6.0, y + ch / 2.0 + 4.0, "end", "tick-label", name);
    }
    for (c, name) in cols.iter().enumerate() {
        svg.slanted(LEFT + (c as f64 + 0.5) * cw, BOTTOM + 16.0, name);
    }
    // Color key from +1 (top) to -1 (bottom).
    let steps = 20;
    let kx = RIGHT - 30.0;
    let kh = (BOTTOM - TOP) / steps as f64;
    for i in 0..steps {
        let v = 1.0 - 2.0 * (i as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg.body,
            r##"<rect class="key" x="{kx:.2}" y="{:.2}" width="16" height="{kh:.2}" fill="{}"/>"##,
            TOP + i as f64 * kh,
            diverging_color(v)
        );
    }
    svg.text(kx + 8.0, TOP - 6.0, "middle", "key-label", "+1");
    svg.text(kx + 8.0, BOTTOM + 16.0, "middle", "key-label", "-1");
}

struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        Scale { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn min_max(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn draw_axes(svg: &mut Svg, xs: Option<&Scale>, ys: &Scale) {
    svg.line(LEFT, BOTTOM, RIGHT, BOTTOM, "");
    svg.line(LEFT, TOP, LEFT, BOTTOM, "");
    for t in ys.ticks() {
        let y = ys.map(t);
        svg.line(LEFT - 4.0, y, LEFT, y, "");
        svg.text(LEFT - 8.0, y + 4.0, "end", "tick-label", &format!("{t:.3}"));
    }
    if let Some(xs) = xs {
        for t in xs.ticks() {
            let x = xs.map(t);
            svg.line(x, BOTTOM, x, BOTTOM + 4.0, "");
            svg.text(x, BOTTOM + 20.0, "middle", "tick-label", &format!("{t:.3}"));
        }
    }
}

fn draw_scatter(svg: &mut Svg, labels: &[String], x: &[f64], y: &[f64], fit: Option<LineFit>) {
    let (x_lo, x_hi) = min_max(x.iter().copied());
    let (mut y_lo, mut y_hi) = min_max(y.iter().copied());
    if let Some(f) = fit {
        for v in [x_lo, x_hi] {
            let fy = f.intercept + f.slope * v;
            y_lo = y_lo.min(fy);
            y_hi = y_hi.max(fy);
        }
    }
    let xs = Scale::new(x_lo, x_hi, LEFT, RIGHT);
    let ys = Scale::new(y_lo, y_hi, BOTTOM, TOP);
    draw_axes(svg, Some(&xs), &ys);
    if let Some(f) = fit {
        let (a, b) = (xs.map(x_lo), xs.map(x_hi));
        let (ya, yb) = (ys.map(f.intercept + f.slope * x_lo), ys.map(f.intercept + f.slope * x_hi));
        let _ = writeln!(
            svg.body,
            r##"<line class="fit" x1="{a:.2}" y1="{ya:.2}" x2="{b:.2}" y2="{yb:.2}" stroke="#555555" stroke-width="1.5" stroke-dasharray="6 4"/>"##
        );
    }
    for ((l, a), b) in labels.iter().zip(x).zip(y) {
        let (px, py) = (xs.map(*a), ys.map(*b));
        let _ = writeln!(
            svg.body,
            r##"<circle class="point" cx="{px:.2}" cy="{py:.2}" r="5" fill="{}"/>"##,
            SERIES_COLORS[0]
        );
        svg.text(px + 8.0, py - 6.0, "start", "point-label", l);
    }
}

fn draw_lines(svg: &mut Svg, x_labels: &[String], a: &(String, Vec<f64>), b: &(String, Vec<f64>)) {
    let (lo, hi) = min_max(a.1.iter().chain(&b.1).copied());
    let ys = Scale::new(lo, hi, BOTTOM, TOP);
    draw_axes(svg, None, &ys);
    let step = (RIGHT - LEFT) / x_labels.len() as f64;
    let px = |i: usize| LEFT + (i as f64 + 0.5) * step;
    let dense = x_labels.len() > 40;
    for (i, l) in x_labels.iter().enumerate() {
        if !dense || i % (x_labels.len() / 20) == 0 {
            svg.slanted(px(i), BOTTOM + 16.0, l);
        }
    }
    for (k, (name, series)) in [a, b].into_iter().enumerate() {
        let points: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", px(i), ys.map(*v)))
            .collect();
        let _ = writeln!(
            svg.body,
            r##"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="2"/>"##,
            points.join(" "),
            SERIES_COLORS[k]
        );
        let ly = TOP + 4.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg.body,
            r##"<rect class="legend-swatch" x="{:.2}" y="{:.2}" width="14" height="4" fill="{}"/>"##,
            RIGHT - 180.0,
            ly - 6.0,
            SERIES_COLORS[k]
        );
        svg.text(RIGHT - 160.0, ly, "start", "legend", name);
    }
}

/// Every plot for a finished preliminary run, under `dir`: per dataset a
/// heatmap of mean per-feature correlations, a correlation-vs-accuracy
/// scatter and an average-vs-max line pair; per model the SHAP and LIME
/// scores of each feature across the first repeat's instances.
pub fn emit_experiment_plots(prelim: &PreliminaryResults, dir: &Path) -> Result<Vec<Emitted>> {
    let mut out = Vec::new();
    for ds in prelim.datasets() {
        let base = file_stem_part(&ds);
        let summaries: Vec<_> = prelim.summaries_for(&ds).collect();
        let models: Vec<String> = summaries.iter().map(|s| s.model.to_string()).collect();

        let ok_cells = || {
            prelim
                .cells
                .iter()
                .filter(|c| c.dataset == ds)
                .filter_map(|c| c.outcome.as_ref().ok().map(|v| (c, v)))
        };
        let features: Vec<String> = match ok_cells().next() {
            Some((_, v)) => v.shap.feature_names().to_vec(),
            None => continue,
        };
        let values: Vec<Vec<f64>> = summaries
            .iter()
            .map(|s| {
                let reports: Vec<_> = ok_cells().filter(|(c, _)| c.model == s.model).map(|(_, v)| &v.report).collect();
                features
                    .iter()
                    .map(|f| {
                        let sum: f64 = reports
                            .iter()
                            .map(|r| r.per_feature.iter().find(|(n, _)| n == f).map_or(0.0, |(_, c)| c.effective()))
                            .sum();
                        (sum / reports.len() as f64).clamp(-1.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        out.push(
            PlotBundle::heatmap(models.clone(), features, values)?
                .titled(format!("SHAP-LIME correlation per feature, {ds}"))
                .emit(&dir.join(format!("{base}_all_heatmap")))?,
        );

        if summaries.len() >= 2 {
            let x: Vec<f64> = summaries.iter().map(|s| s.avg_correlation).collect();
            let y: Vec<f64> = summaries.iter().map(|s| s.accuracy).collect();
            out.push(
                PlotBundle::scatter_fit(models.clone(), x.clone(), y)?
                    .titled(format!("Average correlation vs accuracy, {ds}"))
                    .emit(&dir.join(format!("{base}_all_scatter_fit")))?,
            );
            let max: Vec<f64> = summaries.iter().map(|s| s.correlation_max).collect();
            out.push(
                PlotBundle::line_pair(models.clone(), ("average correlation".into(), x), ("correlation max".into(), max))?
                    .titled(format!("Average correlation and correlation max, {ds}"))
                    .emit(&dir.join(format!("{base}_all_line_pair")))?,
            );
        }

        for (c, v) in ok_cells().filter(|(c, _)| c.repeat == 0) {
            if v.shap.n_instances() < 2 {
                continue;
            }
            for f in v.shap.feature_names() {
                let bundle = PlotBundle::line_compare(
                    f,
                    ("SHAP".into(), v.shap.feature_scores(f)?),
                    ("LIME".into(), v.lime.feature_scores(f)?),
                )?
                .titled(format!("SHAP and LIME importance of {f}, {ds} / {}", c.model));
                let stem = format!("{base}_{}_{}_line_compare", file_stem_part(c.model.name()), file_stem_part(f));
                out.push(bundle.emit(&dir.join(stem))?);
            }
        }
    }
    Ok(out)
}
