//! CSV, JSON and SVG renderings of a [`MetricsReport`].

use std::fmt::Write as _;

use super::experiment::MetricsReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(Error::config(format!("unknown report format {s:?}; expected csv, json or svg"))),
        }
    }
}

pub const CSV_HEADER: &str = "detector,root,snr_db,threshold,signal_trials,noise_trials,misses,pmiss,pmiss_lo,pmiss_hi,false_alarms,pfa,pfa_lo,pfa_hi,wrong_shift,detected,ta_abs_le_0,ta_abs_le_1,ta_abs_le_2";

/// One row per (detector, root, SNR). Floats use the shortest round-trip form.
pub fn to_csv(report: &MetricsReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.detector,
            p.root,
            p.snr_db,
            p.threshold,
            p.signal_trials,
            p.noise_trials,
            p.pmiss.successes,
            p.pmiss.rate,
            p.pmiss.lower,
            p.pmiss.upper,
            p.pfa.successes,
            p.pfa.rate,
            p.pfa.lower,
            p.pfa.upper,
            p.wrong_shift,
            p.ta_cdf.total,
            p.ta_cdf.at(0),
            p.ta_cdf.at(1),
            p.ta_cdf.at(2),
        );
    }
    out
}

pub fn to_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<MetricsReport> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("not a metrics report: {e}")))
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Two panels: miss probability against SNR (log scale) and the TA error
/// CDF at the highest SNR. Every plotted point carries `data-*` attributes
/// holding the exact values it was drawn from.
pub fn to_svg(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        W,
        2.0 * H
    );
    let mut series: Vec<(String, usize)> = Vec::new();
    for p in &report.points {
        if !series.iter().any(|(d, r)| *d == p.detector && *r == p.root) {
            series.push((p.detector.clone(), p.root));
        }
    }
    let snrs: Vec<f64> = report.points.iter().map(|p| p.snr_db).collect();
    let (lo, hi) = snrs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let floor = report
        .points
        .iter()
        .filter(|p| p.signal_trials > 0)
        .map(|p| 0.5 / p.signal_trials as f64)
        .fold(1e-4, f64::min);
    let x_of = |s: f64| PAD + (s - lo) / (hi - lo) * (W - 2.0 * PAD);
    let y_of = |p: f64| {
        let l = p.max(floor).log10();
        PAD + (0.0 - l) / (0.0 - floor.log10()) * (H - 2.0 * PAD)
    };

    let _ = writeln!(out, r#"<g id="pmiss">"#);
    let _ = writeln!(out, r#"<text x="{}" y="20">Miss probability vs SNR (dB)</text>"#, PAD);
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (k, (det, root)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<_> = report
            .points
            .iter()
            .filter(|p| p.detector == *det && p.root == *root)
            .collect();
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x_of(p.snr_db), y_of(p.pmiss.rate)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" points="{}" data-detector="{}" data-root="{root}"/>"#,
            path.join(" "),
            escape(det)
        );
        for p in pts {
            let _ = writeln!(
                out,
                r#"<circle class="pmiss" cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-detector="{}" data-root="{}" data-snr="{}" data-pmiss="{}" data-lo="{}" data-hi="{}"/>"#,
                x_of(p.snr_db),
                y_of(p.pmiss.rate),
                escape(det),
                p.root,
                p.snr_db,
                p.pmiss.rate,
                p.pmiss.lower,
                p.pmiss.upper
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{} (u={root})</text>"#,
            W - PAD - 150.0,
            PAD + 14.0 * (k + 1) as f64,
            escape(det)
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="ta_cdf" transform="translate(0,{H})">"#);
    let _ = writeln!(out, r#"<text x="{}" y="20">TA error CDF at {} dB</text>"#, PAD, hi);
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let top: Vec<_> = report.points.iter().filter(|p| p.snr_db == hi).collect();
    let max_err = top
        .iter()
        .filter_map(|p| p.ta_cdf.points.last().map(|c| c.error))
        .max()
        .unwrap_or(0)
        .clamp(4, 64);
    let cx = |e: u64| PAD + e as f64 / max_err as f64 * (W - 2.0 * PAD);
    let cy = |f: f64| H - PAD - f * (H - 2.0 * PAD);
    for (k, p) in top.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = Vec::new();
        for e in 0..=max_err {
            path.push(format!("{:.2},{:.2}", cx(e), cy(p.ta_cdf.at(e))));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" points="{}" data-detector="{}" data-root="{}"/>"#,
            path.join(" "),
            escape(&p.detector),
            p.root
        );
        for c in p.ta_cdf.points.iter().filter(|c| c.error <= max_err) {
            let _ = writeln!(
                out,
                r#"<circle class="cdf" cx="{:.2}" cy="{:.2}" r="2" fill="{color}" data-detector="{}" data-root="{}" data-error="{}" data-cdf="{}"/>"#,
                cx(c.error),
                cy(c.count as f64 / p.ta_cdf.total as f64),
                escape(&p.detector),
                p.root,
                c.error,
                c.count as f64 / p.ta_cdf.total as f64
            );
        }
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

pub fn render(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(to_csv(report)),
        ReportFormat::Json => to_json(report),
        ReportFormat::Svg => Ok(to_svg(report)),
    }
}
