// SPDX-License-Identifier: MIT OR Apache-2.0

//! Standalone SVG figures: distance heatmap, layer convergence plot, 2-D
//! scatter and probe-distance plot. Output is plain text and deterministic.

use std::fmt::Write as _;

use super::report::{ComparisonReport, ProbeRow};
use crate::error::{Error, Result};
use crate::projection::Embedding2D;

/// Heatmap ramp endpoints: small distances are white, large ones dark blue.
pub const RAMP_LOW: (u8, u8, u8) = (255, 255, 255);
pub const RAMP_HIGH: (u8, u8, u8) = (8, 48, 107);

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Shorten to at most `max_chars` characters, ending with an ellipsis when cut.
pub fn truncate_label(label: &str, max_chars: usize) -> String {
    let n = label.chars().count();
    if n <= max_chars {
        return label.to_string();
    }
    let keep = max_chars.saturating_sub(1);
    let mut s: String = label.chars().take(keep).collect();
    s.push('…');
    s
}

/// Linear interpolation along the ramp, `t` clamped to [0, 1].
pub fn ramp_color(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    (
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2),
    )
}

pub fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

/// Pairwise distance matrix as colored cells. `groups[i]` is the condition
/// of row/column `i`; a line is drawn wherever the group changes.
pub fn render_heatmap(matrix: &[Vec<f64>], labels: &[String], groups: &[String], title: &str) -> Result<String> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(Error::Validation("heatmap matrix must be square".into()));
    }
    if labels.len() != n || groups.len() != n {
        return Err(Error::Validation(format!(
            "heatmap needs {n} labels and groups, got {} and {}",
            labels.len(),
            groups.len()
        )));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("heatmap values must be finite".into()));
    }
    let vmax = matrix.iter().flatten().copied().fold(0.0f64, f64::max);
    let cell = if n > 0 { (480.0 / n as f64).clamp(8.0, 40.0) } else { 40.0 };
    let margin = 90.0;
    let top = 40.0;
    let side = cell * n as f64;
    let legend_w = 70.0;
    let width = margin + side + legend_w + 20.0;
    let height = top + side + margin;
    let max_chars = ((margin - 10.0) / 6.5).floor() as usize;

    let mut s = String::new();
    header(&mut s, width, height);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-size="13">{}</text>"#, margin, escape(title));
    let _ = writeln!(s, r#"<g id="cells">"#);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = if vmax > 0.0 { v / vmax } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}" data-row="{i}" data-col="{j}" data-value="{v:.6}"/>"#,
                margin + j as f64 * cell,
                top + i as f64 * cell,
                hex(ramp_color(t))
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="boundaries" stroke="black" stroke-width="1.5">"#);
    for k in 1..n {
        if groups[k] != groups[k - 1] {
            let p = k as f64 * cell;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{top:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                margin + p,
                margin + p,
                top + side
            );
            let _ = writeln!(
                s,
                r#"<line x1="{margin:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                top + p,
                margin + side,
                top + p
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="labels">"#);
    for (i, l) in labels.iter().enumerate() {
        let short = escape(&truncate_label(l, max_chars));
        let c = (i as f64 + 0.5) * cell;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle"><title>{}</title>{short}</text>"#,
            margin - 4.0,
            top + c,
            escape(l)
        );
        let (x, y) = (margin + c, top + side + 6.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-90 {x:.2} {y:.2})" dominant-baseline="middle">{short}</text>"#
        );
    }
    let _ = writeln!(s, "</g>");
    // color scale legend
    let lx = margin + side + 20.0;
    let _ = writeln!(s, r#"<g id="legend">"#);
    let _ = writeln!(
        s,
        r#"<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        hex(RAMP_LOW),
        hex(RAMP_HIGH)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{lx:.2}" y="{top:.2}" width="14" height="{side:.2}" fill="url(#ramp)" stroke="#444"/>"##
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{vmax:.4}</text>"#, lx + 18.0, top + 8.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">0</text>"#, lx + 18.0, top + side);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">cosine distance</text>"#, lx - 4.0, top - 6.0);
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            let pad = 0.08 * (hi - lo);
            (lo - pad, hi + pad)
        } else {
            let pad = lo.abs().max(1e-3) * 0.1;
            (lo - pad, hi + pad)
        };
        Self { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// Mean distance per layer for both groups with CI whiskers. Asterisks mark
/// significant layers; a degenerate interval is drawn as a short tick.
pub fn render_convergence(report: &ComparisonReport) -> String {
    let (w, h) = (520.0, 340.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let layers: Vec<usize> = report.layers.iter().map(|l| l.layer).collect();
    let values = report
        .layers
        .iter()
        .flat_map(|l| [l.within.ci.lo, l.within.ci.hi, l.between.ci.lo, l.between.ci.hi, l.within.mean, l.between.mean]);
    let (ymin, ymax) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (ymin, ymax) = if ymin.is_finite() { (ymin, ymax) } else { (0.0, 1.0) };
    let y = Axis::new(ymin, ymax, h - bottom, top + 15.0);
    let n = layers.len().max(1);
    let xpos = |i: usize| left + (i as f64 + 0.5) * (w - left - right) / n as f64;

    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="13">{} ({} vs {}, {})</text>"#,
        escape(&report.name),
        escape(&report.first),
        escape(&report.second),
        escape(&report.pooling)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/><line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="#333"/>"##,
        h - bottom,
        w - right,
        h - bottom,
        h - bottom
    );
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let py = y.map(v);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{py:.2}" text-anchor="end" dominant-baseline="middle">{v:.4}</text>"#, left - 6.0);
    }
    for (i, l) in layers.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer {l}</text>"#, xpos(i), h - bottom + 18.0);
    }
    let series = [("within", PALETTE[0], -6.0), ("between", PALETTE[1], 6.0)];
    for (name, color, dx) in series {
        let _ = writeln!(s, r#"<g class="series" data-series="{name}" stroke="{color}" fill="{color}">"#);
        let pts: Vec<(f64, f64)> = report
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let g = if name == "within" { &l.within } else { &l.between };
                (xpos(i) + dx, y.map(g.mean))
            })
            .collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke-width="1.5"/>"#, path.join(" "));
        }
        for (i, l) in report.layers.iter().enumerate() {
            let g = if name == "within" { &l.within } else { &l.between };
            let x = pts[i].0;
            let (ylo, yhi) = (y.map(g.ci.lo), y.map(g.ci.hi));
            if g.ci.lo == g.ci.hi {
                let _ = writeln!(s, r#"<line class="tick" x1="{:.2}" y1="{ylo:.2}" x2="{:.2}" y2="{ylo:.2}"/>"#, x - 4.0, x + 4.0);
            } else {
                let _ = writeln!(s, r#"<line class="whisker" x1="{x:.2}" y1="{ylo:.2}" x2="{x:.2}" y2="{yhi:.2}"/>"#);
                for yy in [ylo, yhi] {
                    let _ = writeln!(s, r#"<line class="cap" x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}"/>"#, x - 3.0, x + 3.0);
                }
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3.5"/>"#, pts[i].1);
        }
        let _ = writeln!(s, "</g>");
    }
    for (i, l) in report.layers.iter().enumerate() {
        if l.significant {
            let top_ci = l.within.ci.hi.max(l.between.ci.hi);
            let _ = writeln!(
                s,
                r#"<text class="significance" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="16">*</text>"#,
                xpos(i),
                y.map(top_ci) - 8.0
            );
        }
    }
    for (k, (name, color, _)) in series.iter().enumerate() {
        let ly = top + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            w - right - 150.0,
            ly - 9.0,
            w - right - 135.0,
            ly,
            escape(if *name == "within" { &report.first } else { &report.second })
        );
    }
    s.push_str("</svg>\n");
    s
}

/// 2-D embedding, one color per condition label.
pub fn render_scatter(embedding: &Embedding2D, title: &str) -> String {
    let (w, h) = (480.0, 420.0);
    let pad = 40.0;
    let xs = embedding.points.iter().map(|p| p.x);
    let ys = embedding.points.iter().map(|p| p.y);
    let range = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = range(&mut xs.into_iter());
    let (y0, y1) = range(&mut ys.into_iter());
    let xa = Axis::new(x0, x1, pad, w - pad - 110.0);
    let ya = Axis::new(y0, y1, h - pad, pad);
    let mut labels: Vec<&str> = Vec::new();
    for p in &embedding.points {
        if !labels.contains(&p.label.as_str()) {
            labels.push(&p.label);
        }
    }
    let color = |l: &str| PALETTE[labels.iter().position(|x| *x == l).unwrap_or(0) % PALETTE.len()];
    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r#"<text x="{pad}" y="22" font-size="13">{}</text>"#, escape(title));
    for p in &embedding.points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}" stroke="#222" stroke-width="0.5" data-label="{}"><title>{}</title></circle>"##,
            xa.map(p.x),
            ya.map(p.y),
            color(&p.label),
            escape(&p.label),
            escape(&p.doc_id)
        );
    }
    for (k, l) in labels.iter().enumerate() {
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{}"/><text x="{:.2}" y="{:.2}" dominant-baseline="middle">{}</text>"#,
            w - 100.0,
            ly,
            color(l),
            w - 90.0,
            ly,
            escape(&truncate_label(l, 14))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{:.2}" fill="gray">KL {:.4}, perplexity {}</text>"#,
        h - 10.0,
        embedding.final_kl,
        embedding.spec.perplexity
    );
    s.push_str("</svg>\n");
    s
}

/// Probe-to-centroid distance per layer, one line per probe.
pub fn render_probe_plot(rows: &[ProbeRow], title: &str) -> String {
    let (w, h) = (520.0, 340.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let mut names: Vec<&str> = Vec::new();
    let mut layers: Vec<usize> = Vec::new();
    for r in rows {
        if !names.contains(&r.name.as_str()) {
            names.push(&r.name);
        }
        if !layers.contains(&r.layer) {
            layers.push(r.layer);
        }
    }
    layers.sort_unstable();
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.distance), b.max(r.distance)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    let y = Axis::new(lo, hi, h - bottom, top);
    let n = layers.len().max(1);
    let xpos = |l: usize| {
        let i = layers.iter().position(|&x| x == l).unwrap_or(0);
        left + (i as f64 + 0.5) * (w - left - right) / n as f64
    };
    let mut s = String::new();
    header(&mut s, w, h);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(title));
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{v:.3}</text>"#, left - 6.0, y.map(v));
    }
    for &l in &layers {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer {l}</text>"#, xpos(l), h - bottom + 18.0);
    }
    for (k, name) in names.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<(usize, f64)> = rows.iter().filter(|r| r.name == *name).map(|r| (r.layer, r.distance)).collect();
        pts.sort_by_key(|p| p.0);
        let path: Vec<String> = pts.iter().map(|&(l, d)| format!("{:.2},{:.2}", xpos(l), y.map(d))).collect();
        let _ = writeln!(s, r#"<g data-probe="{}" stroke="{c}" fill="{c}">"#, escape(name));
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke-width="1.5"/>"#, path.join(" "));
        for &(l, d) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, xpos(l), y.map(d));
        }
        let _ = writeln!(s, "</g>");
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{c}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            w - right + 15.0,
            ly - 9.0,
            w - right + 30.0,
            ly,
            escape(&truncate_label(name, 20))
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed SVG")
    }

    #[test]
    fn zero_matrix_is_uniform() {
        let svg = render_heatmap(&[vec![0.0, 0.0], vec![0.0, 0.0]], &["a".into(), "b".into()], &["g".into(), "g".into()], "t").unwrap();
        let doc = parse(&svg);
        let fills: Vec<&str> = doc
            .descendants()
            .filter(|n| n.has_attribute("data-value"))
            .map(|n| n.attribute("fill").unwrap())
            .collect();
        assert_eq!(fills.len(), 4);
        assert!(fills.iter().all(|f| *f == "#ffffff"));
    }

    #[test]
    fn long_labels_are_truncated_and_escaped() {
        let long = "a <very> long & \"quoted\" label that cannot fit".to_string();
        let svg = render_heatmap(&[vec![0.0, 0.5], vec![0.5, 0.0]], &[long.clone(), "b".into()], &["x".into(), "y".into()], "<t>").unwrap();
        let doc = parse(&svg);
        assert!(doc.descendants().any(|n| n.text().is_some_and(|t| t.ends_with('…'))));
        assert!(doc.descendants().any(|n| n.text() == Some(long.as_str())));
        assert_eq!(doc.descendants().filter(|n| n.tag_name().name() == "line").count(), 2);
    }

    #[test]
    fn non_square_rejected() {
        assert!(render_heatmap(&[vec![0.0, 1.0]], &["a".into()], &["g".into()], "t").is_err());
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_color(0.0), RAMP_LOW);
        assert_eq!(ramp_color(1.0), RAMP_HIGH);
        assert_eq!(truncate_label("abcdef", 4), "abc…");
        assert_eq!(truncate_label("abc", 4), "abc");
    }

    #[test]
    fn probe_plot_parses() {
        let rows = vec![
            ProbeRow { name: "empty".into(), pooling: "replay".into(), layer: 8, distance: 0.8 },
            ProbeRow { name: "empty".into(), pooling: "replay".into(), layer: 16, distance: 0.7 },
            ProbeRow { name: "core".into(), pooling: "replay".into(), layer: 8, distance: 0.01 },
        ];
        parse(&render_probe_plot(&rows, "probes & <x>"));
    }
}
