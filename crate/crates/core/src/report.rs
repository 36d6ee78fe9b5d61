//! Run records and comparison tables (raw vs whitened rows with a delta
//! column, and a per-model x per-dataset summary with an Avg column).
//! Every table renders both as aligned text and as CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    SpearmanX100,
    Isoscore,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::SpearmanX100 => "spearman_x100",
            Metric::Isoscore => "isoscore",
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Metric::Accuracy => (0.0, 100.0),
            Metric::SpearmanX100 => (-100.0, 100.0),
            Metric::Isoscore => (0.0, 1.0),
        }
    }
}

/// One evaluated number plus everything needed to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub model_name: String,
    pub task: String,
    /// Whitening kind, or `"none"`.
    pub whitening: String,
    pub fit_scope: String,
    pub metric: Metric,
    pub value: f64,
    pub config: serde_json::Value,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.metric.bounds();
        if !(self.value >= lo && self.value <= hi) {
            return Err(Error::invalid(format!(
                "{} value {} outside [{lo}, {hi}]",
                self.metric.as_str(),
                self.value
            )));
        }
        Ok(())
    }
}

/// Appends records to a JSON-lines log.
pub fn append_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for r in records {
        r.validate()?;
        buf.push_str(&serde_json::to_string(r).map_err(|e| Error::Internal(e.to_string()))?);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Schema(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Two-decimal rendering; negative zero prints as `0.00`.
pub fn format_value(v: f64) -> String {
    let s = format!("{:.2}", round2(v));
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Whitened minus raw, computed on the two-decimal values that get printed.
pub fn delta(raw: f64, whitened: f64) -> f64 {
    round2(round2(whitened) - round2(raw))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let ncols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let render = |out: &mut String, cells: &[String]| {
            let line: Vec<String> = (0..ncols)
                .map(|j| {
                    let cell = cells.get(j).map(String::as_str).unwrap_or("");
                    if j == 0 {
                        format!("{cell:<w$}", w = widths[j])
                    } else {
                        format!("{cell:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        };
        render(&mut out, &self.headers);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for row in &self.rows {
            render(&mut out, row);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).map_err(|e| Error::Internal(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| Error::Internal(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Raw row and, when given, a whitened row labelled `model_W(kind)` with a delta column.
pub fn comparison_table(
    model_name: &str,
    dataset: &str,
    raw: f64,
    whitened: Option<(&str, f64)>,
) -> Table {
    match whitened {
        None => Table {
            headers: vec!["model".into(), dataset.into()],
            rows: vec![vec![model_name.into(), format_value(raw)]],
        },
        Some((kind, value)) => Table {
            headers: vec!["model".into(), dataset.into(), "delta".into()],
            rows: vec![
                vec![model_name.into(), format_value(raw), String::new()],
                vec![
                    format!("{model_name}_W({kind})"),
                    format_value(value),
                    format_value(delta(raw, value)),
                ],
            ],
        },
    }
}

/// `model` for raw records, `model_W(kind)` for whitened ones.
pub fn record_label(r: &RunRecord) -> String {
    if r.whitening == "none" {
        r.model_name.clone()
    } else {
        format!("{}_W({})", r.model_name, r.whitening)
    }
}

/// Model rows x dataset columns for one metric, with an Avg column over the
/// datasets each row has. The latest record wins when a cell repeats.
pub fn summary_table(records: &[RunRecord], metric: Metric) -> Table {
    let selected: Vec<&RunRecord> = records.iter().filter(|r| r.metric == metric).collect();
    let datasets: BTreeSet<&str> = selected.iter().map(|r| r.dataset.as_str()).collect();
    let mut cells: BTreeMap<(String, String), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &selected {
        let key = (r.model_name.clone(), if r.whitening == "none" { String::new() } else { r.whitening.clone() });
        cells.entry(key).or_default().insert(r.dataset.as_str(), r.value);
    }
    let mut headers = vec!["model".to_string()];
    headers.extend(datasets.iter().map(|d| d.to_string()));
    headers.push("Avg".into());
    let rows = cells
        .iter()
        .map(|((model, kind), values)| {
            let label = if kind.is_empty() {
                model.clone()
            } else {
                format!("{model}_W({kind})")
            };
            let mut row = vec![label];
            for d in &datasets {
                row.push(values.get(d).map(|&v| format_value(v)).unwrap_or_default());
            }
            let avg = values.values().sum::<f64>() / values.len() as f64;
            row.push(format_value(avg));
            row
        })
        .collect();
    Table { headers, rows }
}

/// Per model and dataset: the raw value and the min / mean / max over
/// whitening kinds.
pub fn whitening_range_table(records: &[RunRecord], metric: Metric) -> Table {
    let mut groups: BTreeMap<(String, String), (Option<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric) {
        let entry = groups
            .entry((r.model_name.clone(), r.dataset.clone()))
            .or_insert((None, Vec::new()));
        if r.whitening == "none" {
            entry.0 = Some(r.value);
        } else {
            entry.1.push(r.value);
        }
    }
    let headers = ["model", "dataset", "raw", "w_min", "w_mean", "w_max", "n_kinds"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = groups
        .into_iter()
        .map(|((model, dataset), (raw, white))| {
            let fmt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
            let (min, mean, max) = if white.is_empty() {
                (None, None, None)
            } else {
                (
                    white.iter().copied().reduce(f64::min),
                    Some(white.iter().sum::<f64>() / white.len() as f64),
                    white.iter().copied().reduce(f64::max),
                )
            };
            vec![model, dataset, fmt(raw), fmt(min), fmt(mean), fmt(max), white.len().to_string()]
        })
        .collect();
    Table { headers, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: &str, dataset: &str, whitening: &str, value: f64) -> RunRecord {
        RunRecord {
            dataset: dataset.into(),
            model_name: model.into(),
            task: "classification".into(),
            whitening: whitening.into(),
            fit_scope: "all".into(),
            metric: Metric::Accuracy,
            value,
            config: serde_json::Value::Null,
            timestamp: 0,
            seed: 0,
        }
    }

    #[test]
    fn deltas_match_reported_rows() {
        assert_eq!(format_value(delta(80.96, 78.79)), "-2.17");
        assert_eq!(format_value(delta(87.08, 75.90)), "-11.18");
        assert_eq!(format_value(delta(81.0, 81.0)), "0.00");
    }

    #[test]
    fn comparison_table_shapes() {
        let t = comparison_table("BERT", "MR", 80.96, Some(("pca", 78.79)));
        assert_eq!(t.headers, vec!["model", "MR", "delta"]);
        assert_eq!(t.rows[1], vec!["BERT_W(pca)", "78.79", "-2.17"]);
        assert!(t.to_text().contains("-2.17"));
        assert_eq!(t.to_csv().unwrap().lines().count(), 3);

        let single = comparison_table("BERT", "STS-B", 100.0, None);
        assert_eq!(single.headers.len(), 2);
        assert_eq!(single.rows, vec![vec!["BERT".to_string(), "100.00".into()]]);
    }

    #[test]
    fn summary_layout() {
        let records = vec![
            record("LLaMA", "MR", "none", 87.08),
            record("LLaMA", "MR", "pca", 75.90),
            record("LLaMA", "CR", "none", 90.36),
            record("LLaMA", "CR", "pca", 60.80),
        ];
        let t = summary_table(&records, Metric::Accuracy);
        assert_eq!(t.headers, vec!["model", "CR", "MR", "Avg"]);
        assert_eq!(t.rows[0], vec!["LLaMA", "90.36", "87.08", "88.72"]);
        assert_eq!(t.rows[1], vec!["LLaMA_W(pca)", "60.80", "75.90", "68.35"]);

        let mut all = records.clone();
        all.push(record("LLaMA", "MR", "zca", 77.0));
        let r = whitening_range_table(&all, Metric::Accuracy);
        let mr = r.rows.iter().find(|row| row[1] == "MR").unwrap();
        assert_eq!(mr[2..], ["87.08", "75.90", "76.45", "77.00", "2"]);
    }

    #[test]
    fn records_round_trip_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let recs = vec![record("m", "d", "none", 50.0), record("m", "d", "zca", 40.0)];
        append_records(&path, &recs).unwrap();
        append_records(&path, &recs[..1]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[..2], recs[..]);
        assert!(append_records(&path, &[record("m", "d", "none", 101.0)]).is_err());
    }
}
