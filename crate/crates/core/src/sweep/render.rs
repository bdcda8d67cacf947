use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{SweepError, SweepKind, SweepReport, SweepRow, MFCC_NAME};

pub const CSV_COLUMNS: [&str; 13] = [
    "dataset",
    "task",
    "model",
    "layer",
    "k",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "is_best",
    "paper_ref_accuracy",
    "seed",
    "config_hash",
];

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 675.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 250.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 80.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// The report as CSV with [`CSV_COLUMNS`]; failed cells leave metric fields empty.
pub fn csv_string(report: &SweepReport) -> Result<String, SweepError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| SweepError::Report(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in &report.rows {
        let m = r.metrics.as_ref();
        w.write_record([
            report.dataset.clone(),
            report.task.to_string(),
            r.model.clone(),
            opt(r.layer),
            opt(r.k),
            fixed(m.map(|m| m.accuracy)),
            fixed(m.map(|m| m.precision)),
            fixed(m.map(|m| m.recall)),
            fixed(m.map(|m| m.f1)),
            r.is_best.to_string(),
            fixed(r.reference_accuracy),
            r.seed.to_string(),
            r.config_hash.clone(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| SweepError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SweepError::Report(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn x_position(kind: SweepKind, r: &SweepRow) -> Option<f64> {
    match kind {
        SweepKind::Layers => r.layer.map(f64::from),
        SweepKind::Pca => r.k.map(|k| k as f64),
    }
}

/// Accuracy (percent) against layer index or PCA width, one polyline per
/// model. Failed cells break the line. The MFCC baseline is a dashed
/// horizontal line; in PCA plots each model's unreduced control is dotted.
pub fn render_svg(report: &SweepReport) -> String {
    let kind = report.kind;
    let models = report.models();
    let xs: Vec<f64> = report.rows.iter().filter(|r| r.model != MFCC_NAME).filter_map(|r| x_position(kind, r)).collect();
    let mut ticks = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    let x_min = if kind == SweepKind::Layers { 0.0 } else { 0.0f64.min(ticks.first().copied().unwrap_or(0.0)) };
    let x_max = ticks.last().copied().unwrap_or(1.0).max(x_min + 1.0);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |acc: f64| TOP + (1.0 - acc) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let what = if kind == SweepKind::Layers { "layer" } else { "PCA dimension" };
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="32" font-size="20" text-anchor="middle">{} {}: accuracy vs {what}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&report.dataset),
        report.task
    );

    // axes and grid
    let _ = writeln!(s, r##"<g id="axes" stroke="#333" stroke-width="1">"##);
    for i in 0..=10 {
        let y = sy(i as f64 / 10.0);
        let _ = writeln!(s, r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + plot_w);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end" stroke="none">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            i * 10
        );
    }
    for &t in &ticks {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}"/>"#, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" font-size="12" text-anchor="middle" stroke="none">{t}</text>"#,
            TOP + plot_h + 20.0
        );
    }
    let _ = writeln!(s, r#"<line x1="{LEFT:.1}" y1="{TOP:.1}" x2="{LEFT:.1}" y2="{:.1}"/>"#, TOP + plot_h);
    let _ = writeln!(s, r#"<line x1="{LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/>"#, TOP + plot_h, LEFT + plot_w, TOP + plot_h);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 25.0,
        if kind == SweepKind::Layers { "Layer" } else { "Reduced feature dimension" }
    );
    let _ = writeln!(
        s,
        r#"<text x="25" y="{:.1}" font-size="14" text-anchor="middle" transform="rotate(-90 25 {:.1})">Accuracy (%)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    if let Some(acc) = report.baseline().and_then(SweepRow::accuracy) {
        let y = sy(acc);
        let _ = writeln!(
            s,
            r##"<line class="baseline" x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#555" stroke-width="2" stroke-dasharray="8 6"/>"##,
            LEFT + plot_w
        );
    }

    for (i, model) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut rows: Vec<&SweepRow> =
            report.rows.iter().filter(|r| r.model == *model && x_position(kind, r).is_some()).collect();
        rows.sort_by(|a, b| x_position(kind, a).unwrap().total_cmp(&x_position(kind, b).unwrap()));
        if kind == SweepKind::Pca {
            if let Some(acc) = report.rows.iter().find(|r| r.model == *model && r.k.is_none()).and_then(SweepRow::accuracy) {
                let y = sy(acc);
                let _ = writeln!(
                    s,
                    r#"<line class="control" x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="1.5" stroke-dasharray="2 4"/>"#,
                    LEFT + plot_w
                );
            }
        }
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for r in &rows {
            match r.accuracy() {
                Some(acc) => segments.last_mut().unwrap().push((sx(x_position(kind, r).unwrap()), sy(acc))),
                None => segments.push(Vec::new()),
            }
        }
        let _ = writeln!(s, r#"<g class="series" data-model="{}">"#, escape(model));
        for seg in segments.iter().filter(|seg| !seg.is_empty()) {
            let points: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        }
        for r in &rows {
            if let Some(acc) = r.accuracy() {
                let radius = if r.is_best { 6.0 } else { 3.5 };
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="{radius}" fill="{color}"/>"#,
                    sx(x_position(kind, r).unwrap()),
                    sy(acc)
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }

    // legend
    let lx = LEFT + plot_w + 25.0;
    let _ = writeln!(s, r#"<g id="legend" font-size="13">"#);
    let mut ly = TOP + 10.0;
    for (i, model) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="18" height="4" fill="{color}"/>"#, ly - 2.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(model));
        ly += 24.0;
    }
    if report.baseline().and_then(SweepRow::accuracy).is_some() {
        let _ = writeln!(
            s,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="#555" stroke-width="2" stroke-dasharray="8 6"/>"##,
            lx + 18.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">MFCC baseline</text>"#, lx + 26.0, ly + 4.0);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

/// Writes `<dataset>_<task>_<kind>.csv` and `.svg` into `out`.
pub fn render_report(report: &SweepReport, out: &Path) -> Result<Vec<PathBuf>, SweepError> {
    if report.rows.is_empty() {
        return Err(SweepError::Report("report has no rows".into()));
    }
    fs::create_dir_all(out).map_err(|source| SweepError::Io { path: out.display().to_string(), source })?;
    let stem = format!("{}_{}_{}", report.dataset, report.task, report.kind.as_str());
    let csv_path = out.join(format!("{stem}.csv"));
    let svg_path = out.join(format!("{stem}.svg"));
    for (path, body) in [(&csv_path, csv_string(report)?), (&svg_path, render_svg(report))] {
        fs::write(path, body).map_err(|source| SweepError::Io { path: path.display().to_string(), source })?;
    }
    Ok(vec![csv_path, svg_path])
}
