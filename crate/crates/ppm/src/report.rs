//! Evaluation report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ppm_core::whatif::MetricsReport;

/// Per prefix length: (k, mean ms, p95 ms, median ms), nearest-rank
/// percentiles.
pub fn timing_table(report: &MetricsReport) -> Vec<(usize, f64, f64, f64)> {
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(k, ms) in &report.timings {
        by_k.entry(k).or_default().push(ms);
    }
    by_k.into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean, percentile(&v, 95), percentile(&v, 50))
        })
        .collect()
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: usize) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len()).div_ceil(100).max(1);
    sorted[rank.min(sorted.len()) - 1]
}

pub fn metrics_json(report: &MetricsReport) -> Result<String, serde_json::Error> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn summary_text(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "prefixes evaluated: {}", report.n_prefixes);
    let _ = writeln!(s, "average cumulative F-score: {:.2}", 100.0 * report.average_f_score);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>4} {:>6} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
        "k", "TP", "FP", "TN", "FN", "precision", "recall", "F"
    );
    for c in &report.cumulative {
        let m = c.matrix;
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            c.k, m.tp, m.fp, m.tn, m.fn_, c.precision, c.recall, c.f_score
        );
    }
    s
}

/// Writes metrics.json, cumulative_fscore.csv, timings.csv and summary.txt
/// into `dir`, creating it if needed.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.json"), metrics_json(report).map_err(std::io::Error::other)?)?;

    let mut w = csv::Writer::from_path(dir.join("cumulative_fscore.csv"))?;
    w.write_record(["k", "f_score"])?;
    for c in &report.cumulative {
        w.write_record([c.k.to_string(), c.f_score.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["k", "mean_ms", "p95_ms"])?;
    for (k, mean, p95, _) in timing_table(report) {
        w.write_record([k.to_string(), format!("{mean:.6}"), format!("{p95:.6}")])?;
    }
    w.flush()?;

    std::fs::write(dir.join("summary.txt"), summary_text(report))
}
