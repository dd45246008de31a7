//! Evaluation reports: a CSV with one row per (config, seed, fold) plus a
//! text summary of per-config means and standard deviations.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "config,seed,fold,transfer_acc,identity_err,classifier_acc";

/// Metrics not measured for a row are `None` and written as empty fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub config: String,
    pub seed: u64,
    pub fold: usize,
    pub transfer_acc: Option<f64>,
    pub identity_err: Option<f64>,
    pub classifier_acc: Option<f64>,
}

impl ReportRow {
    pub fn new(config: &str, seed: u64, fold: usize) -> Self {
        Self {
            config: config.to_string(),
            seed,
            fold,
            transfer_acc: None,
            identity_err: None,
            classifier_acc: None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("transfer_acc", self.transfer_acc), ("classifier_acc", self.classifier_acc)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("{name} {v} outside [0, 1]"));
                }
            }
        }
        if let Some(v) = self.identity_err {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("identity_err {v} must be finite and nonnegative"));
            }
        }
        if self.config.is_empty() {
            return Err("empty config name".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Mean and sample standard deviation; zero deviation for one value.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

impl EvalReport {
    pub fn push(&mut self, row: ReportRow) -> Result<()> {
        row.validate().map_err(Error::Report)?;
        self.rows.push(row);
        Ok(())
    }

    /// Config names in first-appearance order.
    pub fn configs(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.config.as_str()) {
                out.push(&r.config);
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, config: &'a str) -> impl Iterator<Item = &'a ReportRow> {
        self.rows.iter().filter(move |r| r.config == config)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(REPORT_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.config.clone(),
                r.seed.to_string(),
                r.fold.to_string(),
                opt(r.transfer_acc),
                opt(r.identity_err),
                opt(r.classifier_acc),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:>5} {:>20} {:>20} {:>20}",
            "config", "rows", "transfer_acc", "identity_err", "classifier_acc"
        );
        for c in self.configs() {
            let rows: Vec<&ReportRow> = self.rows_for(c).collect();
            let cell = |f: fn(&ReportRow) -> Option<f64>| {
                let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                match mean_std(&v) {
                    Some((m, sd)) => format!("{m:.4} ± {sd:.4}"),
                    None => "-".into(),
                }
            };
            let _ = writeln!(
                s,
                "{:<20} {:>5} {:>20} {:>20} {:>20}",
                c,
                rows.len(),
                cell(|r| r.transfer_acc),
                cell(|r| r.identity_err),
                cell(|r| r.classifier_acc)
            );
        }
        s
    }
}

fn parse_opt(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Report(format!("line {line}: cannot parse {name} {field:?}")))
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let Some(header) = records.next() else {
        return Err(Error::Report("missing header".into()));
    };
    let header = header?;
    if header.iter().collect::<Vec<_>>().join(",") != REPORT_HEADER {
        return Err(Error::Report(format!("unexpected header; expected {REPORT_HEADER}")));
    }
    let mut report = EvalReport::default();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 6 {
            return Err(Error::Report(format!("line {line}: expected 6 fields, found {}", rec.len())));
        }
        let int = |i: usize, name: &str| {
            rec[i]
                .parse::<u64>()
                .map_err(|_| Error::Report(format!("line {line}: cannot parse {name} {:?}", &rec[i])))
        };
        let row = ReportRow {
            config: rec[0].to_string(),
            seed: int(1, "seed")?,
            fold: usize::try_from(int(2, "fold")?).map_err(|_| Error::Report(format!("line {line}: fold too large")))?,
            transfer_acc: parse_opt(&rec[3], "transfer_acc", line)?,
            identity_err: parse_opt(&rec[4], "identity_err", line)?,
            classifier_acc: parse_opt(&rec[5], "classifier_acc", line)?,
        };
        row.validate().map_err(|m| Error::Report(format!("line {line}: {m}")))?;
        report.rows.push(row);
    }
    Ok(report)
}

/// Writes the CSV to `path` and the summary table next to it with a
/// `.txt` extension.
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, report.to_csv()?)?;
    std::fs::write(path.with_extension("txt"), report.summary_table())?;
    Ok(())
}
