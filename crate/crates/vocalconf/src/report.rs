//! Cross-validation reports: JSON, per-fold and per-arm CSV, SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vocalconf_core::evaluation::{Arm, CvOutcome, CvSummary};
use vocalconf_core::label::ConfidenceLabel;

use crate::csvio::num;
use crate::error::{Error, Result};
use crate::json;

pub fn per_fold_csv(outcome: &CvOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["fold", "arm", "n_test", "n_pseudo_used", "f1_low", "f1_medium", "f1_high", "macro_f1"].map(String::from).to_vec();
    for t in ConfidenceLabel::ALL {
        for p in ConfidenceLabel::ALL {
            header.push(format!("cm_{t}_{p}"));
        }
    }
    w.write_record(&header).expect("in-memory write");
    for r in &outcome.reports {
        let mut row = vec![r.fold.to_string(), r.arm.to_string(), r.n_test.to_string(), r.n_pseudo_used.to_string()];
        row.extend(r.per_class_f1.iter().copied().map(num));
        row.push(num(r.macro_f1));
        row.extend(r.confusion.iter().flatten().copied().map(num));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn per_arm_csv(summaries: &[CvSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["arm", "folds", "macro_f1_mean", "macro_f1_std"].map(String::from).to_vec();
    for c in ConfidenceLabel::ALL {
        header.push(format!("f1_{c}_mean"));
        header.push(format!("f1_{c}_std"));
    }
    w.write_record(&header).expect("in-memory write");
    for s in summaries {
        let mut row = vec![s.arm.to_string(), s.folds.to_string(), num(s.macro_f1_mean), num(s.macro_f1_std)];
        for c in 0..3 {
            row.push(num(s.per_class_f1_mean[c]));
            row.push(num(s.per_class_f1_std[c]));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Fixed-width table for the terminal.
pub fn summary_table(summaries: &[CvSummary]) -> String {
    let mut s = format!("{:<16} {:>5} {:>15} {:>8} {:>8} {:>8}\n", "arm", "folds", "macro-F1", "low", "medium", "high");
    for x in summaries {
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>7.3} ± {:.3} {:>8.3} {:>8.3} {:>8.3}",
            x.arm.as_str(),
            x.folds,
            x.macro_f1_mean,
            x.macro_f1_std,
            x.per_class_f1_mean[0],
            x.per_class_f1_mean[1],
            x.per_class_f1_mean[2]
        );
    }
    s
}

/// Mean of the per-fold confusion matrices for one arm.
pub fn mean_confusion(outcome: &CvOutcome, arm: Arm) -> [[f64; 3]; 3] {
    let mine: Vec<_> = outcome.reports.iter().filter(|r| r.arm == arm).collect();
    let mut m = [[0.0; 3]; 3];
    for r in &mine {
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m[i][j] += v / mine.len() as f64;
            }
        }
    }
    m
}

/// Bars of mean macro-F1 per arm with ±1 std whiskers.
pub fn macro_f1_svg(summaries: &[CvSummary]) -> String {
    let (w, h, left, bottom, top) = (120 + 110 * summaries.len(), 320, 60.0, 260.0, 30.0);
    let y = |v: f64| bottom - v.clamp(0.0, 1.0) * (bottom - top);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(s, "<text x=\"{left}\" y=\"18\" font-size=\"14\">Macro-F1 by arm (mean ± std over folds)</text>");
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(s, "<line x1=\"{left}\" x2=\"{}\" y1=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>", w - 20, y(v), y(v));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>", left - 6.0, y(v) + 4.0);
    }
    for (i, x) in summaries.iter().enumerate() {
        let cx = left + 30.0 + 110.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{cx:.1}\" y=\"{:.1}\" width=\"70\" height=\"{:.1}\" fill=\"#4c78a8\"/>",
            y(x.macro_f1_mean),
            bottom - y(x.macro_f1_mean)
        );
        let mid = cx + 35.0;
        let (lo, hi) = (y(x.macro_f1_mean - x.macro_f1_std), y(x.macro_f1_mean + x.macro_f1_std));
        let _ = writeln!(s, "<line x1=\"{mid:.1}\" x2=\"{mid:.1}\" y1=\"{lo:.1}\" y2=\"{hi:.1}\" stroke=\"#000\"/>");
        let _ = writeln!(s, "<text x=\"{mid:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>", hi - 6.0, x.macro_f1_mean);
        let _ = writeln!(s, "<text x=\"{mid:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", bottom + 18.0, x.arm.as_str());
    }
    s.push_str("</svg>\n");
    s
}

/// Row-normalized confusion heatmap, true class down, prediction across.
pub fn confusion_svg(title: &str, m: &[[f64; 3]; 3]) -> String {
    let (cell, left, top) = (80.0, 90.0, 60.0);
    let mut s = String::from("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"360\" height=\"340\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" font-size=\"14\">{title}</text>");
    for (i, row) in m.iter().enumerate() {
        let label = ConfidenceLabel::ALL[i].as_str();
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>", left - 8.0, top + cell * (i as f64 + 0.5) + 4.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{label}</text>", left + cell * (i as f64 + 0.5), top - 8.0);
        for (j, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let _ = writeln!(s, "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#fff\"/>");
            let ink = if v > 0.5 { "#fff" } else { "#000" };
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{ink}\">{v:.2}</text>", x + cell / 2.0, y + cell / 2.0 + 4.0);
        }
    }
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">predicted</text>", left + 1.5 * cell, top + 3.0 * cell + 22.0);
    s.push_str("</svg>\n");
    s
}

/// Writes `cv.json`, `per_fold.csv`, `per_arm.csv`, `macro_f1.svg` and one
/// `confusion_<arm>.svg` per arm. Returns the written paths.
pub fn write_reports(dir: impl AsRef<Path>, outcome: &CvOutcome) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        (dir.join("per_fold.csv"), per_fold_csv(outcome)),
        (dir.join("per_arm.csv"), per_arm_csv(&outcome.summaries)),
        (dir.join("macro_f1.svg"), macro_f1_svg(&outcome.summaries)),
    ];
    for s in &outcome.summaries {
        let m = mean_confusion(outcome, s.arm);
        files.push((dir.join(format!("confusion_{}.svg", s.arm)), confusion_svg(&format!("{} (mean over folds)", s.arm), &m)));
    }
    let json_path = dir.join("cv.json");
    json::write(&json_path, outcome)?;
    let mut written = vec![json_path];
    for (path, body) in files {
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
