use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::OutputOptions;
use super::run::{ExperimentOutcome, Row};
use super::ExperimentError;

pub const CSV_HEADER: [&str; 6] = ["axis_value", "rule", "metric_name", "mean", "stderr", "repetitions"];

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

fn to_csv(header: &[String], records: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn render_csv(rows: &[Row]) -> String {
    let header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format_value(r.axis_value),
                r.rule.clone(),
                r.metric.clone(),
                format_value(r.mean),
                format_value(r.stderr),
                r.repetitions.to_string(),
            ]
        })
        .collect();
    to_csv(&header, &records)
}

/// Wide table: one line per axis value, one column per `rule:metric` series
/// holding its mean. Missing cells are left empty.
pub fn render_plot_data(rows: &[Row]) -> String {
    let mut series: Vec<String> = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for r in rows {
        let name = format!("{}:{}", r.rule, r.metric);
        if !series.contains(&name) {
            series.push(name);
        }
        if !xs.contains(&r.axis_value) {
            xs.push(r.axis_value);
        }
    }
    let mut header = vec!["x".to_string()];
    header.extend(series.iter().cloned());
    let records: Vec<Vec<String>> = xs
        .iter()
        .map(|&x| {
            let mut line = vec![format_value(x)];
            line.extend(series.iter().map(|s| {
                rows.iter()
                    .find(|r| r.axis_value == x && format!("{}:{}", r.rule, r.metric) == *s)
                    .map(|r| format_value(r.mean))
                    .unwrap_or_default()
            }));
            line
        })
        .collect();
    to_csv(&header, &records)
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<stem>.csv`, `<stem>.config.toml` and, if requested,
/// `<stem>.plot.csv` into the output directory; returns the paths written.
pub fn write_outputs(outcome: &ExperimentOutcome, opts: &OutputOptions) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(&opts.dir).map_err(|source| ExperimentError::Io {
        path: opts.dir.clone(),
        source,
    })?;
    let stem = outcome.config.stem();
    let mut written = Vec::new();
    let csv_path = opts.dir.join(format!("{stem}.csv"));
    write(&csv_path, &render_csv(&outcome.rows))?;
    written.push(csv_path);
    let cfg_path = opts.dir.join(format!("{stem}.config.toml"));
    let cfg_text = format!("# fingerprint {}\n{}", outcome.fingerprint, outcome.config.to_toml());
    write(&cfg_path, &cfg_text)?;
    written.push(cfg_path);
    if opts.plot_data {
        let plot_path = opts.dir.join(format!("{stem}.plot.csv"));
        write(&plot_path, &render_plot_data(&outcome.rows))?;
        written.push(plot_path);
    }
    Ok(written)
}

/// Human-readable run summary.
pub fn summary(outcome: &ExperimentOutcome) -> String {
    let cfg = &outcome.config;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} over {} ({} points, {} repetitions, seed {}, fingerprint {})",
        cfg.experiment.name(),
        cfg.axis.name(),
        cfg.grid.len(),
        cfg.repetitions,
        cfg.base_seed,
        outcome.fingerprint
    );
    let _ = writeln!(
        s,
        "{:>10}  {:<7} {:<20} {:>14} {:>12}",
        cfg.axis.name(),
        "rule",
        "metric",
        "mean",
        "stderr"
    );
    for r in &outcome.rows {
        let _ = writeln!(
            s,
            "{:>10}  {:<7} {:<20} {:>14.6e} {:>12.3e}",
            format_value(r.axis_value),
            r.rule,
            r.metric,
            r.mean,
            r.stderr
        );
    }
    if !outcome.failures.is_empty() {
        let _ = writeln!(s, "{} failed evaluations:", outcome.failures.len());
        for f in &outcome.failures {
            let _ = writeln!(
                s,
                "  {}={} repetition {}: {}",
                cfg.axis.name(),
                format_value(cfg.grid[f.index]),
                f.repetition,
                f.message
            );
        }
    }
    s
}
