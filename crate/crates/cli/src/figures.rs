//! Static SVG figures, 800×600, written without a plotting library.
//!
//! Elements carry `data-*` attributes (panel, study, value) so the output can
//! be inspected by tests and scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dta_influence::data::{observed_proportions, Dataset};
use dta_influence::influence::{AnalysisResult, FlagMethod, InfluenceRecord, SensitivityRefit};
use dta_influence::sroc::{sroc_points, FprRange, SrocLine};

use crate::error::CliError;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

/// Two-sided 10% normal quantile, drawn on the signed residual panels.
const SR_RULE: f64 = 1.645;
const CURVE_POINTS: usize = 200;

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear map from data to pixel coordinates inside a plot box.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    fn border(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
            self.x0, self.y0, self.w, self.h
        );
    }

    fn hrule(&self, v: f64, class: &str, out: &mut String) {
        let _ = writeln!(
            out,
            "<line class=\"{class}\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
            self.x0,
            self.y(v),
            self.x0 + self.w,
            self.y(v)
        );
    }

    fn prob_axes(&self, xlabel: &str, ylabel: &str, out: &mut String) {
        self.border(out);
        for k in 0..=5 {
            let v = k as f64 / 5.0;
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{v:.1}</text>",
                self.x(v),
                self.y0 + self.h + 12.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{v:.1}</text>",
                self.x0 - 3.0,
                self.y(v) + 3.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{xlabel}</text>",
            self.x0 + self.w / 2.0,
            self.y0 + self.h + 26.0
        );
        let _ = writeln!(
            out,
            "<text transform=\"translate({:.2} {:.2}) rotate(-90)\" font-size=\"11\" text-anchor=\"middle\">{ylabel}</text>",
            self.x0 - 28.0,
            self.y0 + self.h / 2.0
        );
    }
}

fn unit_frame(x0: f64, y0: f64, w: f64, h: f64) -> Frame {
    Frame {
        x0,
        y0,
        w,
        h,
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    }
}

fn write_svg(path: &Path, body: &str) -> Result<(), CliError> {
    let mut s = header();
    s.push_str(body);
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| CliError::output(path, e))
}

/// Study points (FPR, sensitivity) with the pooled estimate.
pub fn scatter_svg(d: &Dataset, result: &AnalysisResult) -> String {
    let f = unit_frame(80.0, 50.0, 660.0, 480.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<text x=\"400\" y=\"30\" font-size=\"16\" text-anchor=\"middle\">Sensitivity against false positive rate</text>"
    );
    f.prob_axes("False positive rate", "Sensitivity", &mut out);
    for s in d.studies() {
        let (sens, fpr) = observed_proportions(s);
        let _ = writeln!(
            out,
            "<circle class=\"study\" data-study=\"{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"6\" fill=\"white\" stroke=\"black\"/>",
            s.id,
            f.x(fpr),
            f.y(sens)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"9\">{}</text>",
            f.x(fpr) + 7.0,
            f.y(sens) - 5.0,
            s.id
        );
    }
    let p = &result.full.pooled;
    let _ = writeln!(
        out,
        "<circle class=\"pooled\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"7\" fill=\"black\"/>",
        f.x(p.eta_b.estimate),
        f.y(p.eta_a.estimate)
    );
    out
}

struct BarPanel {
    key: char,
    title: &'static str,
    values: Vec<(u32, Option<f64>)>,
    /// Rule drawn at `+rule`, and at `-rule` when `signed`.
    rule: f64,
    signed: bool,
}

fn bar_panel(panel: &BarPanel, x0: f64, y0: f64, w: f64, h: f64, out: &mut String) {
    let present: Vec<f64> = panel.values.iter().filter_map(|v| v.1).collect();
    let hi = present.iter().copied().fold(panel.rule, f64::max) * 1.1;
    let lo = if panel.signed {
        present.iter().copied().fold(-panel.rule, f64::min) * 1.1
    } else {
        0.0
    };
    let n = panel.values.len().max(1);
    let f = Frame {
        x0,
        y0,
        w,
        h,
        xmin: 0.0,
        xmax: n as f64,
        ymin: lo,
        ymax: hi,
    };
    let _ = writeln!(out, "<g data-panel=\"{}\">", panel.key);
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">({}) {}</text>",
        x0,
        y0 - 6.0,
        panel.key,
        panel.title
    );
    f.border(out);
    f.hrule(panel.rule, "rule", out);
    if panel.signed {
        f.hrule(-panel.rule, "rule", out);
    }
    let bw = w / n as f64 * 0.7;
    for (k, &(id, v)) in panel.values.iter().enumerate() {
        let Some(v) = v else { continue };
        let above = if panel.signed { v.abs() > panel.rule } else { v > panel.rule };
        let (top, bottom) = (f.y(v.max(0.0)), f.y(v.min(0.0)));
        let _ = writeln!(
            out,
            "<rect class=\"bar{}\" data-study=\"{id}\" data-value=\"{v}\" x=\"{:.2}\" y=\"{top:.2}\" width=\"{bw:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            if above { " above" } else { "" },
            f.x(k as f64 + 0.15),
            bottom - top,
            if above { "black" } else { "gray" }
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"7\" text-anchor=\"middle\">{id}</text>",
            f.x(k as f64 + 0.5),
            y0 + h + 9.0
        );
    }
    out.push_str("</g>\n");
}

fn distance_panels(result: &AnalysisResult) -> Vec<BarPanel> {
    let t = &result.metadata.thresholds;
    let col = |f: fn(&InfluenceRecord) -> Option<f64>| -> Vec<(u32, Option<f64>)> {
        result.records.iter().map(|r| (r.id, f(r))).collect()
    };
    let unsigned = |key, title, values, rule| BarPanel {
        key,
        title,
        values,
        rule,
        signed: false,
    };
    let signed = |key, title, values| BarPanel {
        key,
        title,
        values,
        rule: SR_RULE,
        signed: true,
    };
    vec![
        unsigned('a', "RD sensitivity", col(|r| Some(r.rd_a)), t.srd),
        unsigned('b', "RD FPR", col(|r| Some(r.rd_b)), t.srd),
        unsigned('c', "SRD", col(|r| Some(r.srd)), t.srd),
        unsigned('d', "ARD", col(|r| Some(r.ard)), t.srd),
        unsigned('e', "RD DOR", col(|r| Some(r.rd_dor)), t.rd_dor),
        signed('f', "SR sensitivity", col(|r| Some(r.sr_a))),
        signed('g', "SR FPR", col(|r| Some(r.sr_b))),
        unsigned('h', "SSR", col(|r| r.ssr), t.ssr),
        unsigned('i', "ASR", col(|r| Some(r.asr)), SR_RULE),
        signed('j', "SR DOR", col(|r| Some(r.sr_dor))),
    ]
}

/// Ten bar panels of relative distances and residuals by deleted study.
pub fn distances_svg(result: &AnalysisResult) -> String {
    let mut out = String::new();
    let (pw, ph) = (140.0, 220.0);
    for (k, panel) in distance_panels(result).iter().enumerate() {
        let (row, col) = (k / 5, k % 5);
        bar_panel(panel, 30.0 + col as f64 * 155.0, 40.0 + row as f64 * 285.0, pw, ph, &mut out);
    }
    out
}

/// Change in AUC by deleted study.
pub fn dauc_svg(result: &AnalysisResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<text x=\"400\" y=\"30\" font-size=\"16\" text-anchor=\"middle\">Change in AUC after deleting each study</text>"
    );
    let panel = BarPanel {
        key: 'a',
        title: "delta AUC",
        values: result.records.iter().map(|r| (r.id, Some(r.delta_auc))).collect(),
        rule: result.metadata.thresholds.delta_auc,
        signed: true,
    };
    bar_panel(&panel, 80.0, 70.0, 660.0, 470.0, &mut out);
    out
}

fn curve_path(line: &SrocLine, range: FprRange, f: &Frame) -> String {
    let pts = sroc_points(line, CURVE_POINTS, range).unwrap_or_default();
    let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", f.x(p.fpr), f.y(p.sens))).collect();
    coords.join(" ")
}

fn sroc_panel_body(d: &Dataset, flagged: &[u32], refit: Option<&SensitivityRefit>, result: &AnalysisResult, f: &Frame) -> String {
    let mut out = String::new();
    f.prob_axes("FPR", "Sensitivity", &mut out);
    let range = result.full.sroc.range;
    let full_line = result.full.sroc.line;
    match refit {
        Some(r) => {
            let _ = writeln!(
                out,
                "<polyline class=\"curve-full\" points=\"{}\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"5 3\"/>",
                curve_path(&full_line, range, f)
            );
            let _ = writeln!(
                out,
                "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
                curve_path(&r.line, range, f)
            );
        }
        None => {
            let _ = writeln!(
                out,
                "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>",
                curve_path(&full_line, range, f)
            );
        }
    }
    for s in d.studies() {
        let (sens, fpr) = observed_proportions(s);
        let (cx, cy) = (f.x(fpr), f.y(sens));
        if flagged.contains(&s.id) {
            let _ = writeln!(
                out,
                "<rect class=\"study flagged\" data-study=\"{}\" x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"red\" stroke=\"black\"/>",
                s.id,
                cx - 4.0,
                cy - 4.0
            );
        } else {
            let _ = writeln!(
                out,
                "<circle class=\"study\" data-study=\"{}\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"white\" stroke=\"black\"/>",
                s.id
            );
        }
    }
    out
}

/// One SROC panel for all studies plus one per detection method, flagged
/// studies drawn as red squares and the refit curve without them overlaid on
/// the all-studies curve.
pub fn sroc_panels_svg(d: &Dataset, result: &AnalysisResult, refits: &[SensitivityRefit]) -> String {
    let mut panels: Vec<(String, String, Vec<u32>, Option<&SensitivityRefit>)> =
        vec![("all".into(), "All studies".into(), vec![], None)];
    for m in FlagMethod::ALL {
        let flagged = result.flagged(m);
        let refit = refits.iter().find(|r| r.method == Some(m));
        panels.push((m.name().into(), m.description().into(), flagged, refit));
    }
    let mut out = String::new();
    let (pw, ph) = (190.0, 190.0);
    for (k, (key, title, flagged, refit)) in panels.iter().enumerate() {
        let (row, col) = (k / 3, k % 3);
        // Each panel is drawn in local coordinates and translated into place,
        // so identical content yields identical bodies.
        let f = unit_frame(0.0, 0.0, pw, ph);
        let body = sroc_panel_body(d, flagged, refit.filter(|_| !flagged.is_empty()), result, &f);
        let ids = flagged.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(
            out,
            "<g data-panel=\"{key}\" data-flagged=\"{ids}\" transform=\"translate({:.2} {:.2})\">",
            60.0 + col as f64 * 255.0,
            40.0 + row as f64 * 280.0
        );
        let label = if flagged.is_empty() {
            escape(title)
        } else {
            format!("{} (without {})", escape(title), ids.replace(' ', ", "))
        };
        let _ = writeln!(out, "<text x=\"0\" y=\"-8\" font-size=\"11\">{label}</text>");
        let _ = writeln!(out, "<g class=\"body\">\n{body}</g>\n</g>");
    }
    out
}

/// Writes the four figures into `dir` and returns their paths.
pub fn render_figures(
    d: &Dataset,
    result: &AnalysisResult,
    refits: &[SensitivityRefit],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let files = [
        ("fig1_scatter.svg", scatter_svg(d, result)),
        ("fig2_distances.svg", distances_svg(result)),
        ("fig3_dauc.svg", dauc_svg(result)),
        ("fig4_sroc_panels.svg", sroc_panels_svg(d, result, refits)),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write_svg(&path, &body)?;
        paths.push(path);
    }
    Ok(paths)
}
