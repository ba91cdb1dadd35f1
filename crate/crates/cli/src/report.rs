//! Static SVG figures drawn from `analysis.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dilemma_core::scenario::MftDimension;

use crate::commands::{Analysis, GroupFit, ANALYSIS};
use crate::manifest::{verify_dir, ManifestBuilder};
use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PALETTE: [&str; 8] = ["#1b6ca8", "#d1495b", "#2e8b57", "#edae49", "#6a4c93", "#00798c", "#8d6a9f", "#444444"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    height: f64,
}

impl Svg {
    fn new(title: &str) -> Self {
        Self::with_height(title, H)
    }

    fn with_height(title: &str, height: f64) -> Self {
        let mut s = Svg { body: String::new(), height };
        s.text(W / 2.0, 22.0, title, "middle", 15.0);
        s
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, class: &str) {
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{}</text>"#,
            esc(s)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#);
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    fn poly(&mut self, pts: &[(f64, f64)], stroke: &str, closed: bool) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let tag = if closed { "polygon" } else { "polyline" };
        let fill = if closed { format!(r#"fill="{stroke}" fill-opacity="0.15""#) } else { r#"fill="none""#.to_string() };
        let _ = writeln!(self.body, r#"<{tag} points="{}" stroke="{stroke}" stroke-width="2" {fill}/>"#, p.join(" "));
    }

    fn legend(&mut self, labels: &[String]) {
        for (i, l) in labels.iter().enumerate() {
            let y = 44.0 + 16.0 * i as f64;
            self.rect(W - 170.0, y - 9.0, 10.0, 10.0, PALETTE[i % PALETTE.len()]);
            self.text(W - 155.0, y, l, "start", 11.0);
        }
    }

    fn empty(&mut self) {
        self.text(W / 2.0, self.height / 2.0, "no data", "middle", 13.0);
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{h}\" viewBox=\"0 0 {W} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            h = self.height
        )
    }
}

/// Plot frame with x in [x0, x1] and y in [y0, y1]; returns the mapper.
fn axes(svg: &mut Svg, x0: f64, x1: f64, y0: f64, y1: f64, xlabel: &str, ylabel: &str) -> impl Fn(f64, f64) -> (f64, f64) {
    let (l, r, t, b) = (60.0, W - 190.0, 40.0, svg.height - 50.0);
    svg.line(l, b, r, b, "#000", "frame");
    svg.line(l, t, l, b, "#000", "frame");
    for k in 0..=4 {
        let fy = k as f64 / 4.0;
        let v = y0 + fy * (y1 - y0);
        let y = b - fy * (b - t);
        svg.line(l - 4.0, y, l, y, "#000", "tick");
        svg.text(l - 6.0, y + 4.0, &format!("{v:.2}"), "end", 10.0);
        let vx = x0 + fy * (x1 - x0);
        let x = l + fy * (r - l);
        svg.line(x, b, x, b + 4.0, "#000", "tick");
        svg.text(x, b + 16.0, &format!("{vx:.1}"), "middle", 10.0);
    }
    svg.text((l + r) / 2.0, b + 34.0, xlabel, "middle", 12.0);
    svg.text(16.0, (t + b) / 2.0, ylabel, "middle", 12.0);
    move |x, y| (l + (x - x0) / (x1 - x0) * (r - l), b - (y - y0) / (y1 - y0) * (b - t))
}

fn curves(a: &Analysis) -> String {
    let mut svg = Svg::new("Action probability by net benefit");
    if a.curves.is_empty() {
        svg.empty();
        return svg.finish();
    }
    let map = axes(&mut svg, -9.0, 9.0, 0.0, 1.0, "standardized net benefit", "P(act)");
    let mut labels = Vec::new();
    for (i, c) in a.curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| map(p.net_benefit as f64, p.p_act)).collect();
        svg.poly(&pts, color, false);
        for &(x, y) in &pts {
            svg.circle(x, y, 3.0, color);
        }
        let slope = a.sensitivity.iter().find(|s| s.model == c.model && s.mode == c.mode).and_then(|s| s.slope);
        labels.push(match slope {
            Some(s) => format!("{} / {} (slope {s:.3})", c.model, c.mode.as_str()),
            None => format!("{} / {}", c.model, c.mode.as_str()),
        });
    }
    svg.legend(&labels);
    svg.finish()
}

fn radar(a: &Analysis) -> String {
    let mut svg = Svg::new("Moral foundation win rates");
    let (cx, cy, rad) = (240.0, 225.0, 150.0);
    let point = |k: usize, v: f64| {
        let ang = -std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 5.0;
        (cx + rad * v * ang.cos(), cy + rad * v * ang.sin())
    };
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<_> = (0..5).map(|k| point(k, ring)).collect();
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(svg.body, r##"<polygon class="ring" points="{}" fill="none" stroke="#ccc"/>"##, p.join(" "));
    }
    for (k, dim) in MftDimension::ALL.iter().enumerate() {
        let (x, y) = point(k, 1.0);
        svg.line(cx, cy, x, y, "#888", "axis");
        let (lx, ly) = point(k, 1.14);
        svg.text(lx, ly + 4.0, dim.as_str(), "middle", 12.0);
    }
    let mut groups: Vec<(String, dilemma_core::eval::EvalMode)> = a.mft.iter().map(|w| (w.model.clone(), w.mode)).collect();
    groups.dedup();
    let mut labels = Vec::new();
    for (i, (model, mode)) in groups.iter().enumerate() {
        let pts: Vec<(f64, f64)> = MftDimension::ALL
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let v = a.mft.iter().find(|w| &w.model == model && w.mode == *mode && w.dimension == *d).map_or(0.0, |w| w.rate);
                point(k, v)
            })
            .collect();
        svg.poly(&pts, PALETTE[i % PALETTE.len()], true);
        labels.push(format!("{model} / {}", mode.as_str()));
    }
    svg.legend(&labels);
    svg.finish()
}

/// Horizontal dot plot with ±1.96·se whiskers.
fn dot_plot(title: &str, rows: &[(String, f64, f64)], xlabel: &str, fixed: Option<(f64, f64)>) -> String {
    let height = (80.0 + 18.0 * rows.len() as f64).max(200.0);
    let mut svg = Svg::with_height(title, height);
    if rows.is_empty() {
        svg.empty();
        return svg.finish();
    }
    let (lo, hi) = fixed.unwrap_or_else(|| {
        let lo = rows.iter().map(|r| r.1 - 1.96 * r.2).fold(0.0, f64::min);
        let hi = rows.iter().map(|r| r.1 + 1.96 * r.2).fold(0.0, f64::max);
        let pad = ((hi - lo) * 0.05).max(0.1);
        (lo - pad, hi + pad)
    });
    let (l, r, t) = (260.0, W - 30.0, 44.0);
    let x = |v: f64| l + (v.clamp(lo, hi) - lo) / (hi - lo) * (r - l);
    let b = t + 18.0 * rows.len() as f64;
    svg.line(x(0.0), t - 6.0, x(0.0), b, "#aaa", "zero");
    svg.line(l, b, r, b, "#000", "frame");
    svg.text(l, b + 14.0, &format!("{lo:.2}"), "middle", 10.0);
    svg.text(r, b + 14.0, &format!("{hi:.2}"), "middle", 10.0);
    svg.text((l + r) / 2.0, b + 30.0, xlabel, "middle", 12.0);
    for (i, (label, v, se)) in rows.iter().enumerate() {
        let y = t + 18.0 * i as f64 + 9.0;
        svg.text(l - 8.0, y + 4.0, label, "end", 10.0);
        svg.line(x(v - 1.96 * se), y, x(v + 1.96 * se), y, PALETTE[0], "whisker");
        svg.circle(x(*v), y, 3.5, PALETTE[1]);
    }
    svg.finish()
}

fn log_odds(a: &Analysis) -> String {
    let mut rows = Vec::new();
    let mut add = |fits: &[GroupFit], scheme: &str| {
        for g in fits {
            for e in &g.fit.effects {
                let mark = if e.significant { "*" } else { "" };
                rows.push((format!("{} {} {scheme} {}{mark}", g.model, g.mode.as_str(), e.term), e.beta, e.se));
            }
        }
    };
    add(&a.conceptual, "conceptual");
    add(&a.character, "character");
    dot_plot("Firth log-odds estimates", &rows, "log-odds (95% Wald interval)", None)
}

fn preferences(a: &Analysis) -> String {
    let rows: Vec<_> = a
        .preferences
        .iter()
        .map(|g| {
            let p = &g.preference;
            (format!("{} {} {} vs {}", g.model, g.mode.as_str(), p.first, p.second), p.value, p.se)
        })
        .collect();
    dot_plot("Preference strength", &rows, "2p - 1", Some((-1.0, 1.0)))
}

fn composition(a: &Analysis) -> String {
    let height = (100.0 + 28.0 * a.attribution.len() as f64).max(200.0);
    let mut svg = Svg::with_height("Effect composition", height);
    if a.attribution.is_empty() {
        svg.empty();
        return svg.finish();
    }
    let (l, r) = (220.0, W - 30.0);
    for (i, s) in a.attribution.iter().enumerate() {
        let y = 48.0 + 28.0 * i as f64;
        svg.text(l - 8.0, y + 14.0, &format!("{} / {}", s.model, s.mode.as_str()), "end", 11.0);
        let mut x = l;
        for (k, v) in [s.composition.quantity, s.composition.character, s.composition.action_bias].into_iter().enumerate() {
            let w = v * (r - l);
            svg.rect(x, y, w, 20.0, PALETTE[k]);
            x += w;
        }
    }
    let y = 60.0 + 28.0 * a.attribution.len() as f64;
    for (k, name) in ["Quantity", "Character", "Action bias"].iter().enumerate() {
        let x = l + 130.0 * k as f64;
        svg.rect(x, y, 10.0, 10.0, PALETTE[k]);
        svg.text(x + 14.0, y + 9.0, name, "start", 11.0);
    }
    svg.finish()
}

fn intensity(a: &Analysis) -> String {
    let mut svg = Svg::new("Interaction intensity");
    if a.attribution.is_empty() {
        svg.empty();
        return svg.finish();
    }
    let vmax = a
        .attribution
        .iter()
        .flat_map(|s| [s.intensity.quant1v1_x_char, s.intensity.intra_char, s.intensity.inter_char])
        .fold(0.0, f64::max)
        .max(1e-6);
    let groups = ["1:1 x character", "intra-character", "inter-character"];
    let map = axes(&mut svg, 0.0, 3.0, 0.0, vmax * 1.1, "effect type", "mean |interaction|");
    let k = a.attribution.len() as f64;
    for (i, s) in a.attribution.iter().enumerate() {
        for (g, v) in [s.intensity.quant1v1_x_char, s.intensity.intra_char, s.intensity.inter_char].into_iter().enumerate() {
            let x0 = g as f64 + 0.15 + 0.7 * i as f64 / k;
            let (px, py) = map(x0, v);
            let (px1, base) = map(x0 + 0.7 / k, 0.0);
            svg.rect(px, py, px1 - px, base - py, PALETTE[i % PALETTE.len()]);
        }
    }
    for (g, name) in groups.iter().enumerate() {
        let (x, y) = map(g as f64 + 0.5, 0.0);
        svg.text(x, y - 4.0, name, "middle", 10.0);
    }
    let labels: Vec<String> = a.attribution.iter().map(|s| format!("{} / {}", s.model, s.mode.as_str())).collect();
    svg.legend(&labels);
    svg.finish()
}

fn index(a: &Analysis) -> String {
    let mut md = String::from("# Analysis report\n\n");
    for (file, title) in [
        ("curves.svg", "Action probability by net benefit"),
        ("radar.svg", "Moral foundation win rates"),
        ("log_odds.svg", "Firth log-odds estimates"),
        ("preferences.svg", "Preference strength"),
        ("composition.svg", "Effect composition"),
        ("intensity.svg", "Interaction intensity"),
    ] {
        let _ = writeln!(md, "## {title}\n\n![{title}]({file})\n");
    }
    if !a.sensitivity.is_empty() {
        md.push_str("## Marginal sensitivity\n\n| model | mode | slope |\n|---|---|---|\n");
        for s in &a.sensitivity {
            let slope = s.slope.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(md, "| {} | {} | {slope} |", s.model, s.mode.as_str());
        }
        md.push('\n');
    }
    if !a.refusals.is_empty() {
        md.push_str("## Refusal rates\n\n| model | subset | mode | rate | n |\n|---|---|---|---|---|\n");
        for r in &a.refusals {
            let _ = writeln!(md, "| {} | {} | {} | {:.4} | {} |", r.model, r.subset.as_str(), r.mode.as_str(), r.rate, r.n);
        }
        md.push('\n');
    }
    if !a.warnings.is_empty() {
        md.push_str("## Warnings\n\n");
        for w in &a.warnings {
            let _ = writeln!(md, "- {w}");
        }
    }
    md
}

pub fn cmd_report(analysis: &Path, out: &Path) -> Result<(), CliError> {
    let path = analysis.join(ANALYSIS);
    if !path.is_file() {
        return Err(CliError::Usage(format!("no {ANALYSIS} in {}", analysis.display())));
    }
    let inputs = verify_dir(analysis, &[ANALYSIS])?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let a: Analysis = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
    let mut m = ManifestBuilder::new("report");
    m.inputs = inputs;
    let figures = [
        ("curves.svg", curves(&a)),
        ("radar.svg", radar(&a)),
        ("log_odds.svg", log_odds(&a)),
        ("preferences.svg", preferences(&a)),
        ("composition.svg", composition(&a)),
        ("intensity.svg", intensity(&a)),
        ("index.md", index(&a)),
    ];
    for (name, body) in figures {
        fs::write(out.join(name), body).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
        m.output(name);
    }
    m.write(out)?;
    Ok(())
}
