//! Metric tables: lossless CSV and an aligned text rendering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{StillReport, VideoRow};
use crate::error::{Error, Result};
use crate::metrics::METRIC_NAMES;

pub const MEAN_ROW: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub ids: Vec<String>,
    pub values: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub id_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn new(id_columns: &[&str]) -> Self {
        Self {
            id_columns: id_columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, ids: Vec<String>, values: [f64; 4]) {
        debug_assert_eq!(ids.len(), self.id_columns.len());
        self.rows.push(ReportRow { ids, values });
    }

    pub fn header(&self) -> Vec<String> {
        self.id_columns
            .iter()
            .cloned()
            .chain(METRIC_NAMES.iter().map(|s| s.to_string()))
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            let vals = r.values.iter().map(|v| v.to_string());
            w.write_record(r.ids.iter().cloned().chain(vals))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a table written by [`ReportTable::to_csv`]; the last four columns are metrics.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let n_ids = header
            .len()
            .checked_sub(4)
            .filter(|_| header[header.len() - 4..] == METRIC_NAMES)
            .ok_or_else(|| Error::Format(format!("report header {header:?} lacks the metric columns")))?;
        let mut table = Self {
            id_columns: header[..n_ids].to_vec(),
            rows: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            let ids = rec.iter().take(n_ids).map(str::to_string).collect();
            let mut values = [0.0; 4];
            for (v, s) in values.iter_mut().zip(rec.iter().skip(n_ids)) {
                *v = s
                    .parse()
                    .map_err(|_| Error::Format(format!("bad metric value {s:?}")))?;
            }
            table.push(ids, values);
        }
        Ok(table)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Row whose first id equals `id`.
    pub fn row(&self, id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.ids.first().map(String::as_str) == Some(id))
    }

    /// Whitespace-aligned rendering.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(self.header())
            .chain(self.rows.iter().map(|r| {
                r.ids
                    .iter()
                    .cloned()
                    .chain(r.values.iter().map(|v| format!("{v:.6}")))
                    .collect()
            }))
            .collect();
        let ncol = self.id_columns.len() + 4;
        let widths: Vec<usize> = (0..ncol)
            .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c < self.id_columns.len() {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (ncol - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}

/// Per-image rows followed by the mean row.
pub fn still_table(report: &StillReport) -> ReportTable {
    let mut t = ReportTable::new(&["image"]);
    for (id, m) in report.successes() {
        t.push(vec![id.to_string()], m.values());
    }
    if let Some(mean) = report.mean {
        t.push(vec![MEAN_ROW.to_string()], mean);
    }
    t
}

/// One row per (model, sequence, background source).
pub fn video_table(rows: &[VideoRow]) -> ReportTable {
    let mut t = ReportTable::new(&["model", "sequence", "background"]);
    for r in rows {
        if let Some(mean) = r.mean {
            t.push(vec![r.model.clone(), r.sequence.clone(), r.method.clone()], mean);
        }
    }
    t
}

/// Collapses labelled per-image tables to one row each (their mean rows).
pub fn summary_table(tables: &[(String, ReportTable)]) -> Result<ReportTable> {
    let mut out = ReportTable::new(&["method"]);
    for (label, t) in tables {
        let mean = t
            .row(MEAN_ROW)
            .ok_or_else(|| Error::Format(format!("table {label} has no {MEAN_ROW} row")))?;
        out.push(vec![label.clone()], mean.values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReportTable {
        let mut t = ReportTable::new(&["image"]);
        t.push(vec!["a".into()], [0.1, 1.0 / 3.0, 2.5e-7, 11.312]);
        t.push(vec!["b, with comma".into()], [0.0, 0.002, 4.85, 8.696]);
        t
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ReportTable::new(&["image"]);
        assert_eq!(t.to_csv().unwrap(), "image,SAD,MSE,GRAD,CONN\n");
    }

    #[test]
    fn csv_round_trips_exactly() {
        let t = sample();
        assert_eq!(ReportTable::from_csv(&t.to_csv().unwrap()).unwrap(), t);
    }

    #[test]
    fn text_has_one_column_per_field() {
        let t = sample();
        let text = t.to_text();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split_whitespace().count(), 1 + 4);
        assert_eq!(text.lines().count(), 2 + t.rows.len());
    }

    #[test]
    fn rejects_foreign_csv() {
        assert!(matches!(ReportTable::from_csv("x,y\n1,2\n"), Err(Error::Format(_))));
    }
}
