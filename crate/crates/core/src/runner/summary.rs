//! Seed-averaged summaries of a finished sweep: one row per
//! (algorithm, topology, SNR) group with the mean and spread of every
//! metric across seeds.

use std::cmp::Ordering;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::EvaluationReport;

use super::grid::RESULTS_FILE;

/// Name of the summary table written next to the results.
pub const SUMMARY_FILE: &str = "summary.csv";

/// Mean and population standard deviation of each metric over the seeds of
/// one grid group. A metric absent from every seed stays `None`; failed
/// cells contribute to `seeds` but not to the averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub topology: String,
    pub snr_db: Option<f64>,
    pub seeds: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub ece_mean: Option<f64>,
    pub ece_std: Option<f64>,
    pub mean_err_mean: Option<f64>,
    pub mean_err_std: Option<f64>,
    pub cov_err_mean: Option<f64>,
    pub cov_err_std: Option<f64>,
}

impl SummaryRow {
    pub fn csv_header() -> &'static [&'static str] {
        &[
            "algorithm",
            "topology",
            "snr_db",
            "seeds",
            "accuracy_mean",
            "accuracy_std",
            "ece_mean",
            "ece_std",
            "mean_err_mean",
            "mean_err_std",
            "cov_err_mean",
            "cov_err_std",
        ]
    }

    pub fn csv_record(&self) -> Vec<String> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        vec![
            self.algorithm.clone(),
            self.topology.clone(),
            opt(self.snr_db),
            self.seeds.to_string(),
            opt(self.accuracy_mean),
            opt(self.accuracy_std),
            opt(self.ece_mean),
            opt(self.ece_std),
            opt(self.mean_err_mean),
            opt(self.mean_err_std),
            opt(self.cov_err_mean),
            opt(self.cov_err_std),
        ]
    }
}

fn cmp_snr(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

fn mean_and_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Groups the reports by (algorithm, topology, SNR) and averages each
/// metric over the group. Rows come back sorted by those three keys.
pub fn summarize_records(records: &[EvaluationReport]) -> Vec<SummaryRow> {
    let mut groups: Vec<(&EvaluationReport, Vec<&EvaluationReport>)> = Vec::new();
    for record in records {
        let found = groups.iter_mut().find(|(head, _)| {
            head.algorithm == record.algorithm
                && head.topology == record.topology
                && cmp_snr(head.snr_db, record.snr_db) == Ordering::Equal
        });
        match found {
            Some((_, members)) => members.push(record),
            None => groups.push((record, vec![record])),
        }
    }
    groups.sort_by(|(a, _), (b, _)| {
        a.algorithm
            .cmp(&b.algorithm)
            .then_with(|| a.topology.cmp(&b.topology))
            .then_with(|| cmp_snr(a.snr_db, b.snr_db))
    });

    groups
        .into_iter()
        .map(|(head, members)| {
            let collect = |field: fn(&EvaluationReport) -> Option<f64>| {
                members.iter().filter_map(|r| field(r)).collect::<Vec<f64>>()
            };
            let (accuracy_mean, accuracy_std) = mean_and_std(&collect(|r| r.accuracy));
            let (ece_mean, ece_std) = mean_and_std(&collect(|r| r.ece));
            let (mean_err_mean, mean_err_std) = mean_and_std(&collect(|r| r.mean_err));
            let (cov_err_mean, cov_err_std) = mean_and_std(&collect(|r| r.cov_err));
            SummaryRow {
                algorithm: head.algorithm.clone(),
                topology: head.topology.clone(),
                snr_db: head.snr_db,
                seeds: members.len(),
                accuracy_mean,
                accuracy_std,
                ece_mean,
                ece_std,
                mean_err_mean,
                mean_err_std,
                cov_err_mean,
                cov_err_std,
            }
        })
        .collect()
}

fn parse_opt_f64(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("bad {what} '{field}' in results row {line}")))
}

/// Reads a `results.csv` written by a sweep back into reports. Rows of
/// failed cells come back with every metric empty.
pub fn read_results_csv(path: &Path) -> Result<Vec<EvaluationReport>> {
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let expected = EvaluationReport::csv_header();
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "unexpected results header '{}', want '{}'",
                headers.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            )));
        }
    }
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row?;
        let line = idx + 2;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let seed = field(3).parse().map_err(|_| {
            Error::InvalidArgument(format!("bad seed '{}' in results row {line}", field(3)))
        })?;
        let retained_samples = if field(8).is_empty() {
            0
        } else {
            field(8).parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "bad sample count '{}' in results row {line}",
                    field(8)
                ))
            })?
        };
        records.push(EvaluationReport {
            algorithm: field(0).to_string(),
            topology: field(1).to_string(),
            snr_db: parse_opt_f64(field(2), "snr", line)?,
            seed,
            accuracy: parse_opt_f64(field(4), "accuracy", line)?,
            ece: parse_opt_f64(field(5), "ece", line)?,
            mean_err: parse_opt_f64(field(6), "mean error", line)?,
            cov_err: parse_opt_f64(field(7), "covariance error", line)?,
            retained_samples,
        });
    }
    Ok(records)
}

/// Summarizes `<dir>/results.csv` into `<dir>/summary.csv` and returns the
/// rows.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let records = read_results_csv(&dir.join(RESULTS_FILE))?;
    let rows = summarize_records(&records);
    let mut writer = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    writer.write_record(SummaryRow::csv_header())?;
    for row in &rows {
        writer.write_record(row.csv_record())?;
    }
    writer.flush()?;
    Ok(rows)
}
