//! Delimited-text and SVG renderings of evaluation outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use voxlect_core::metrics::{ConfusionMatrix, EvalReport};
use voxlect_core::train::{Evaluation, PredictionRecord};

use crate::error::{require, Result};
use crate::io::{atomic_write, read_json, read_jsonl, write_json, write_jsonl};

pub const REPORT_FILE: &str = "eval_report.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const CONFUSION_FILE: &str = "confusion.csv";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rows are true classes, columns predicted classes; header row and column
/// carry the class names.
pub fn confusion_csv(cm: &ConfusionMatrix, names: &[String]) -> String {
    let mut out = String::from("true\\predicted");
    for n in names {
        out.push(',');
        out.push_str(&csv_field(n));
    }
    out.push('\n');
    for (name, row) in names.iter().zip(&cm.counts) {
        out.push_str(&csv_field(name));
        for c in row {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Per-class table: name, support, precision, recall, F1.
pub fn per_class_tsv(report: &EvalReport) -> String {
    let mut out = String::from("class\tsupport\tprecision\trecall\tf1\n");
    for c in &report.per_class {
        let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}\t{:.4}", c.name, c.support, c.precision, c.recall, c.f1);
    }
    let _ = writeln!(out, "# accuracy\t{:.4}\n# macro_f1\t{:.4}", report.accuracy, report.macro_f1);
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Row-normalised confusion heatmap.
pub fn confusion_svg(cm: &ConfusionMatrix, names: &[String], title: &str) -> String {
    let k = names.len();
    let cell = 48.0;
    let margin = 140.0;
    let size = margin + cell * k as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, xml_escape(title));
    for (i, name) in names.iter().enumerate() {
        let row = cm.row_total(i);
        for j in 0..k {
            let count = cm.counts[i][j];
            let rate = if row == 0 { 0.0 } else { count as f64 / row as f64 };
            let shade = (255.0 * (1.0 - rate)).round() as u8;
            let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/>"#
            );
            let ink = if rate > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.0}%</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                rate * 100.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 6.0,
            margin + cell * i as f64 + cell / 2.0 + 4.0,
            xml_escape(name)
        );
        let (cx, cy) = (margin + cell * i as f64 + cell / 2.0, margin - 6.0);
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{cy}" transform="rotate(-45 {cx} {cy})">{}</text>"#,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bar chart of `(label, value)` pairs.
pub fn bar_chart_svg(bars: &[(String, f64)], title: &str) -> String {
    let bar_h = 22.0;
    let label_w = 160.0;
    let plot_w = 400.0;
    let height = 40.0 + bar_h * bars.len() as f64 + 10.0;
    let max = bars.iter().map(|b| b.1).fold(0.0_f64, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="11">"#,
        label_w + plot_w + 80.0
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, xml_escape(title));
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = 36.0 + bar_h * i as f64;
        let w = if max > 0.0 { plot_w * v / max } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + bar_h / 2.0 + 4.0,
            xml_escape(label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{label_w}" y="{}" width="{w:.1}" height="{}" fill="#4a78c2"/>"##,
            y + 2.0,
            bar_h - 4.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{v}</text>"#, label_w + w + 4.0, y + bar_h / 2.0 + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `eval_report.json`, `predictions.jsonl` and `confusion.csv`.
pub fn write_eval_outputs(eval: &Evaluation, dir: &Path) -> Result<()> {
    write_json(&dir.join(REPORT_FILE), &eval.report)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &eval.predictions)?;
    atomic_write(
        &dir.join(CONFUSION_FILE),
        confusion_csv(&eval.report.confusion, &eval.report.class_names).as_bytes(),
    )
}

/// Renders tables (and optionally SVG plots) from an evaluation directory
/// into `out_dir`. Returns the files written.
pub fn render_report(eval_dir: &Path, out_dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    require(eval_dir, "evaluation directory")?;
    let report: EvalReport = read_json(&eval_dir.join(REPORT_FILE))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        atomic_write(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    emit(CONFUSION_FILE, confusion_csv(&report.confusion, &report.class_names))?;
    emit("per_class.tsv", per_class_tsv(&report))?;
    let mut pairs = String::from("true\tpredicted\tcount\trow_rate\n");
    for p in &report.top_confusion_pairs {
        let _ = writeln!(pairs, "{}\t{}\t{}\t{:.4}", p.true_class, p.predicted_class, p.count, p.row_rate);
    }
    emit("top_confusions.tsv", pairs)?;
    if plots {
        let title = format!("{} confusion (row-normalised)", report.group);
        emit("confusion.svg", confusion_svg(&report.confusion, &report.class_names, &title))?;
        let bars: Vec<(String, f64)> = report
            .class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), report.confusion.row_total(i) as f64))
            .collect();
        emit("class_distribution.svg", bar_chart_svg(&bars, &format!("{} utterances per class", report.group)))?;
        let preds_path = eval_dir.join(PREDICTIONS_FILE);
        if preds_path.exists() {
            let preds: Vec<PredictionRecord> = read_jsonl(&preds_path)?;
            let mut bins = [0usize; 10];
            for p in &preds {
                bins[((p.max_probability * 10.0) as usize).min(9)] += 1;
            }
            let bars: Vec<(String, f64)> = bins
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("{:.1}-{:.1}", i as f64 / 10.0, (i + 1) as f64 / 10.0), c as f64))
                .collect();
            emit("confidence.svg", bar_chart_svg(&bars, "top-class probability"))?;
        }
    }
    Ok(written)
}
