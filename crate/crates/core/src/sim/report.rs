use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Comparison, SimReport};

pub const COLUMNS: [&str; 9] = [
    "policy", "patients", "mean", "median", "p90", "max", "idle", "overtime", "reduction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" | "delimited" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?} (expected table or csv)")),
        }
    }
}

/// One output line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub patients: u32,
    pub mean: f64,
    pub median: f64,
    pub p90: i64,
    pub max: i64,
    pub idle: i64,
    pub overtime: i64,
    pub reduction: Option<f64>,
}

impl From<&SimReport> for ReportRow {
    fn from(r: &SimReport) -> Self {
        Self {
            policy: r.policy.clone(),
            patients: r.patients,
            mean: r.mean_wait,
            median: r.median_wait,
            p90: r.p90_wait,
            max: r.max_wait,
            idle: r.idle_minutes,
            overtime: r.overtime_minutes,
            reduction: r.reduction_vs_baseline,
        }
    }
}

impl ReportRow {
    fn cells(&self) -> [String; 9] {
        [
            self.policy.clone(),
            self.patients.to_string(),
            format!("{:.2}", self.mean),
            format!("{:.2}", self.median),
            self.p90.to_string(),
            self.max.to_string(),
            self.idle.to_string(),
            self.overtime.to_string(),
            self.reduction.map(|r| format!("{:.2}%", r * 100.0)).unwrap_or_default(),
        ]
    }
}

/// Renders rows under the fixed column header. No rows gives the header only.
pub fn emit_rows(rows: &[ReportRow], format: ReportFormat) -> String {
    let body: Vec<[String; 9]> = rows.iter().map(ReportRow::cells).collect();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for cells in &body {
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Table => {
            let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
            for cells in &body {
                for (w, c) in widths.iter_mut().zip(cells) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cells: &[&str]| {
                let mut s = String::new();
                for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                    if i == 0 {
                        let _ = write!(s, "{c:<w$}");
                    } else {
                        let _ = write!(s, "  {c:>w$}");
                    }
                }
                s.trim_end().to_owned()
            };
            out.push_str(&line(&COLUMNS));
            out.push('\n');
            for cells in &body {
                let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
                out.push_str(&line(&refs));
                out.push('\n');
            }
        }
    }
    out
}

pub fn emit_report(report: &SimReport, format: ReportFormat) -> String {
    emit_rows(&[ReportRow::from(report)], format)
}

/// Pooled baseline and treatment rows; the treatment row carries the
/// reduction. Tables add a line counting replications the treatment won.
pub fn emit_comparison(cmp: &Comparison, format: ReportFormat) -> String {
    let mut out = emit_rows(&[ReportRow::from(&cmp.baseline), ReportRow::from(&cmp.treatment)], format);
    if format == ReportFormat::Table {
        let _ = writeln!(
            out,
            "treatment lower mean wait in {}/{} replications",
            cmp.treatment_wins,
            cmp.replications.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, reduction: Option<f64>) -> ReportRow {
        ReportRow {
            policy: policy.into(),
            patients: 18,
            mean: 85.0,
            median: 85.0,
            p90: 160,
            max: 170,
            idle: 0,
            overtime: 0,
            reduction,
        }
    }

    #[test]
    fn csv_header_and_row() {
        let s = emit_rows(&[row("fcfs_walk_in", None)], ReportFormat::Csv);
        assert_eq!(
            s,
            "policy,patients,mean,median,p90,max,idle,overtime,reduction\nfcfs_walk_in,18,85.00,85.00,160,170,0,0,\n"
        );
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(emit_rows(&[], ReportFormat::Csv).lines().count(), 1);
        assert_eq!(emit_rows(&[], ReportFormat::Table).lines().count(), 1);
    }

    #[test]
    fn table_columns_align() {
        let s = emit_rows(&[row("fcfs_walk_in", None), row("modified_wave", Some(0.9))], ReportFormat::Table);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        // right-aligned: full rows end where the header ends
        assert_eq!(lines[0].len(), lines[2].len());
        assert!(lines[2].ends_with("90.00%"));
        let header_p90_end = lines[0].find("p90").unwrap() + 3;
        assert_eq!(&lines[1][header_p90_end - 3..header_p90_end], "160");
    }

    #[test]
    fn format_parse() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
