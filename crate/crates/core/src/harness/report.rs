use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::grid::write_file;
use crate::{Error, Result};

/// Parsed `metrics.csv` of one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    /// Lower-triangular Macro-AUC matrix, one row per checkpoint.
    pub auc: Vec<Vec<f64>>,
    pub overall: Vec<f64>,
    /// Mean forgetting per checkpoint (`None` at the first).
    pub forgetting: Vec<Option<f64>>,
}

fn corrupt(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: format!("{}: {}", path.display(), message.into()),
    }
}

pub fn read_metrics(dir: &Path) -> Result<RunMetrics> {
    let path = dir.join("metrics.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| corrupt(&path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["checkpoint", "task", "macro_auc", "overall", "forgetting_mean"] {
        return Err(corrupt(&path, 1, "unexpected header"));
    }
    let mut m = RunMetrics {
        auc: Vec::new(),
        overall: Vec::new(),
        forgetting: Vec::new(),
    };
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| corrupt(&path, line, format!("bad number {s:?}")))
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| corrupt(&path, line, e.to_string()))?;
        if &rec[0] == "final" {
            continue;
        }
        let l: usize = rec[0].parse().map_err(|_| corrupt(&path, line, "bad checkpoint"))?;
        let j: usize = rec[1].parse().map_err(|_| corrupt(&path, line, "bad task"))?;
        if l == m.auc.len() + 1 {
            m.auc.push(Vec::new());
            m.overall.push(num(&rec[3], line)?);
            m.forgetting.push(if rec[4].is_empty() { None } else { Some(num(&rec[4], line)?) });
        }
        if l != m.auc.len() || j != m.auc[l - 1].len() + 1 || j > l {
            return Err(corrupt(&path, line, format!("row ({l}, {j}) out of order")));
        }
        m.auc[l - 1].push(num(&rec[2], line)?);
    }
    if m.auc.is_empty() || m.auc.last().is_some_and(|r| r.len() != m.auc.len()) {
        return Err(corrupt(&path, 1, "incomplete metrics"));
    }
    Ok(m)
}

/// Text summary of a run directory: the Macro-AUC matrix, overall curve and
/// forgetting (in Macro-AUC points, x100).
pub fn report(dir: &Path) -> Result<String> {
    let m = read_metrics(dir)?;
    let t = m.auc.len();
    let mut out = String::new();
    let _ = writeln!(out, "Macro-AUC after each task (rows) on each task's test split (columns)");
    let _ = write!(out, "{:>10}", "");
    for j in 1..=t {
        let _ = write!(out, "{:>9}", format!("task {j}"));
    }
    out.push('\n');
    for (l, row) in m.auc.iter().enumerate() {
        let _ = write!(out, "{:>10}", format!("after {}", l + 1));
        for a in row {
            let _ = write!(out, "{a:>9.4}");
        }
        out.push('\n');
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>10}{:>10}{:>18}", "checkpoint", "overall", "forgetting x100");
    for l in 0..t {
        let f = m.forgetting[l].map_or("-".to_string(), |f| format!("{:.2}", 100.0 * f));
        let _ = writeln!(out, "{:>10}{:>10.4}{:>18}", l + 1, m.overall[l], f);
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A minimal SVG line chart.
fn line_chart(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y0:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y1:.3}</text>\n",
        w / 2.0,
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        w / 2.0,
        h - 12.0,
        pad - 4.0,
        h - pad,
        pad - 4.0,
        pad + 4.0,
    );
    for (i, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            w - pad + 4.0 - 60.0,
            pad + 14.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Parses `task=.. epoch=.. risk=..` lines of `log.txt` into per-task curves.
fn risk_curves(log: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for line in log.lines() {
        let mut task = None;
        let mut epoch = None;
        let mut risk = None;
        for kv in line.split_whitespace() {
            match kv.split_once('=') {
                Some(("task", v)) => task = Some(v.to_string()),
                Some(("epoch", v)) => epoch = v.parse::<f64>().ok(),
                Some(("risk", v)) => risk = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        if let (Some(t), Some(e), Some(r)) = (task, epoch, risk) {
            let name = format!("task {t}");
            match curves.iter_mut().find(|(n, _)| *n == name) {
                Some((_, p)) => p.push((e, r)),
                None => curves.push((name, vec![(e, r)])),
            }
        }
    }
    curves
}

/// Writes `auc.svg` (per-task and overall Macro-AUC per checkpoint) and, when
/// `log.txt` is present, `risk.svg` (training risk per epoch). Returns the
/// files written.
pub fn write_plots(dir: &Path) -> Result<Vec<String>> {
    let m = read_metrics(dir)?;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = (0..m.auc.len())
        .map(|j| {
            let pts = (j..m.auc.len()).map(|l| ((l + 1) as f64, m.auc[l][j])).collect();
            (format!("task {}", j + 1), pts)
        })
        .collect();
    series.push((
        "overall".into(),
        m.overall.iter().enumerate().map(|(l, &o)| ((l + 1) as f64, o)).collect(),
    ));
    write_file(dir, "auc.svg", &line_chart("Macro-AUC", "checkpoint", &series))?;
    let mut written = vec!["auc.svg".to_string()];
    if let Ok(log) = fs::read_to_string(dir.join("log.txt")) {
        let curves = risk_curves(&log);
        if !curves.is_empty() {
            write_file(dir, "risk.svg", &line_chart("Training risk", "epoch", &curves))?;
            written.push("risk.svg".into());
        }
    }
    Ok(written)
}
