//! Minimal hand-written SVG for grids, CLES bars and stability panels.

use std::fmt::Write;

use crate::stats::SignificanceGrid;

use super::commands::{CompareReport, StabilityRow};

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Methods as rows, metrics as columns. A significant cell holds a square whose
/// side grows with the normalized effect; blank cells were not significant,
/// grey cells could not be tested.
pub fn grid_svg(grid: &SignificanceGrid) -> String {
    let cell = 28.0;
    let (left, top) = (130.0, 110.0);
    let methods: Vec<&String> = grid.methods.iter().filter(|m| **m != grid.baseline).collect();
    let width = left + cell * grid.metrics.len() as f64 + 20.0;
    let height = top + cell * methods.len() as f64 + 40.0;
    let mut s = open(width, height);
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"18\" {FONT}>Wilcoxon vs {} (p &lt; 0.01)</text>",
        esc(&grid.baseline)
    );
    for (j, metric) in grid.metrics.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{:.1}\" {FONT} transform=\"rotate(-60 {x:.1} {:.1})\">{}</text>",
            top - 6.0,
            top - 6.0,
            esc(metric)
        );
    }
    for (i, method) in methods.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + cell * 0.65,
            esc(method)
        );
        for (j, metric) in grid.metrics.iter().enumerate() {
            let x = left + cell * j as f64;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"none\" stroke=\"#ddd\"/>"
            );
            match grid.cell(metric, method).and_then(|c| c.outcome.as_ref()) {
                None => {
                    let _ = writeln!(
                        s,
                        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#eee\"/>",
                        x + 1.0,
                        y + 1.0,
                        cell - 2.0,
                        cell - 2.0
                    );
                }
                Some(o) if o.significant => {
                    let e = o.normalized_effect.unwrap_or(1.0).clamp(0.0, 1.0);
                    let side = (cell - 4.0) * (0.25 + 0.75 * e.sqrt());
                    let off = (cell - side) / 2.0;
                    let _ = writeln!(
                        s,
                        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{side:.1}\" height=\"{side:.1}\" fill=\"#1f5fa8\"><title>p={:.3e}</title></rect>",
                        x + off,
                        y + off,
                        o.p_value
                    );
                }
                Some(_) => {}
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One row per metric; bars start at 0.5 and run to the CLES, drawn only when significant.
pub fn cles_svg(report: &CompareReport) -> String {
    let (left, top, span, row) = (130.0, 40.0, 300.0, 22.0);
    let height = top + row * report.rows.len() as f64 + 30.0;
    let mut s = open(left + span + 40.0, height);
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"18\" {FONT}>CLES of {} over {}</text>",
        esc(&report.a),
        esc(&report.b)
    );
    let x_of = |v: f64| left + span * v;
    let bottom = top + row * report.rows.len() as f64;
    for v in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{top:.1}\" x2=\"{:.1}\" y2=\"{bottom:.1}\" stroke=\"{}\"/>",
            x_of(v),
            x_of(v),
            if v == 0.5 { "#333" } else { "#ccc" }
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"middle\">{v}</text>",
            x_of(v),
            bottom + 14.0
        );
    }
    for (i, r) in report.rows.iter().enumerate() {
        let y = top + row * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + row * 0.65,
            esc(&r.metric)
        );
        if r.significant {
            let (a, b) = (x_of(0.5), x_of(r.cles));
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
                a.min(b),
                y + 4.0,
                (a - b).abs(),
                row - 8.0,
                if r.cles >= 0.5 { "#1f5fa8" } else { "#b8432f" }
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Left: per-image SNR on a log axis with the median marked. Right: noise fraction bars.
pub fn stability_svg(rows: &[StabilityRow]) -> String {
    let (left, top, panel_w, panel_h) = (60.0, 40.0, 60.0 * rows.len().max(1) as f64 + 40.0, 240.0);
    let gap = 70.0;
    let width = left + 2.0 * panel_w + gap + 20.0;
    let mut s = open(width, top + panel_h + 70.0);
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" {FONT}>SNR (log10)</text>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"20\" {FONT}>Noise fraction of variance</text>",
        left + panel_w + gap
    );

    let finite: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.snr.iter().copied())
        .filter(|v| v.is_finite() && *v > 0.0)
        .map(f64::log10)
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min).min(0.0).floor();
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1.0).ceil();
    let y_snr = |v: f64| top + panel_h - panel_h * (v - lo) / (hi - lo);
    let y_frac = |v: f64| top + panel_h - panel_h * v.clamp(0.0, 1.0);

    for (x0, label_lo, label_hi) in [(left, lo, hi), (left + panel_w + gap, 0.0, 1.0)] {
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.1}\" y=\"{top:.1}\" width=\"{panel_w:.1}\" height=\"{panel_h:.1}\" fill=\"none\" stroke=\"#333\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{label_hi}</text>",
            x0 - 4.0,
            top + 4.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{label_lo}</text>",
            x0 - 4.0,
            top + panel_h
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let cx = left + 20.0 + 60.0 * i as f64 + 20.0;
        for v in r.snr.iter().filter(|v| v.is_finite() && **v > 0.0) {
            let _ = writeln!(
                s,
                "<circle cx=\"{cx:.1}\" cy=\"{:.1}\" r=\"1.5\" fill=\"#1f5fa8\" fill-opacity=\"0.4\"/>",
                y_snr(v.log10())
            );
        }
        if r.median_snr.is_finite() && r.median_snr > 0.0 {
            let y = y_snr(r.median_snr.log10());
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#b8432f\" stroke-width=\"2\"/>",
                cx - 14.0,
                cx + 14.0
            );
        }
        let label_y = top + panel_h + 14.0;
        let _ = writeln!(
            s,
            "<text x=\"{cx:.1}\" y=\"{label_y:.1}\" {FONT} text-anchor=\"middle\">{}</text>",
            esc(&r.metric)
        );
        let bx = left + panel_w + gap + 20.0 + 60.0 * i as f64;
        let y = y_frac(r.noise_fraction);
        let _ = writeln!(
            s,
            "<rect x=\"{bx:.1}\" y=\"{y:.1}\" width=\"40\" height=\"{:.1}\" fill=\"#1f5fa8\"/>",
            top + panel_h - y
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{label_y:.1}\" {FONT} text-anchor=\"middle\">{}</text>",
            bx + 20.0,
            esc(&r.metric)
        );
    }
    s.push_str("</svg>\n");
    s
}
