//! Fixed-schema metrics CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_COLUMNS: [&str; 8] = [
    "step",
    "episode_return_mean",
    "success_rate",
    "epsilon",
    "lambda_memory",
    "loss",
    "q_probe_mean",
    "mem_branch_fraction",
];

/// One evaluation row; `None` is written as an empty cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub episode_return_mean: Option<f64>,
    pub success_rate: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda_memory: Option<f64>,
    pub loss: Option<f64>,
    pub q_probe_mean: Option<f64>,
    pub mem_branch_fraction: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl MetricsRow {
    fn values(&self) -> [Option<f64>; 7] {
        [
            self.episode_return_mean,
            self.success_rate,
            self.epsilon,
            self.lambda_memory,
            self.loss,
            self.q_probe_mean,
            self.mem_branch_fraction,
        ]
    }

    /// Value of a named non-step column.
    pub fn column(&self, name: &str) -> Option<f64> {
        let i = METRICS_COLUMNS[1..].iter().position(|c| *c == name)?;
        self.values()[i]
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = METRICS_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}", r.step);
        for v in r.values() {
            let _ = write!(out, ",{}", cell(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

fn parse_cell(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::format(path, format!("line {line}: bad number {s:?}")))
}

pub fn parse_metrics(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty metrics file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols != METRICS_COLUMNS {
        let missing: Vec<&str> = METRICS_COLUMNS
            .iter()
            .copied()
            .filter(|c| !cols.contains(c))
            .collect();
        return Err(Error::format(
            path,
            format!("unexpected columns {cols:?}; missing {missing:?}"),
        ));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != METRICS_COLUMNS.len() {
                return Err(Error::format(path, format!("line {}: wrong field count", i + 2)));
            }
            let step = f[0]
                .parse()
                .map_err(|_| Error::format(path, format!("line {}: bad step", i + 2)))?;
            let v = |k: usize| parse_cell(path, i + 2, f[k]);
            Ok(MetricsRow {
                step,
                episode_return_mean: v(1)?,
                success_rate: v(2)?,
                epsilon: v(3)?,
                lambda_memory: v(4)?,
                loss: v(5)?,
                q_probe_mean: v(6)?,
                mem_branch_fraction: v(7)?,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

/// Trapezoidal area under `success_rate` against `step`.
pub fn success_auc(rows: &[MetricsRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.success_rate.map(|s| (r.step as f64, s)))
        .collect();
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_blanks() {
        let rows = vec![
            MetricsRow {
                step: 0,
                episode_return_mean: Some(-1.25),
                success_rate: Some(0.0),
                epsilon: Some(0.3),
                lambda_memory: Some(1.0),
                ..MetricsRow::default()
            },
            MetricsRow {
                step: 2000,
                loss: Some(0.1 + 0.2),
                mem_branch_fraction: Some(0.5),
                ..MetricsRow::default()
            },
        ];
        let text = metrics_csv(&rows);
        assert!(text.starts_with("step,episode_return_mean,success_rate,"));
        assert_eq!(parse_metrics(&text, Path::new("m.csv")).unwrap(), rows);
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let err = parse_metrics("step,return\n0,1\n", Path::new("m.csv")).unwrap_err();
        assert!(err.to_string().contains("success_rate"));
    }

    #[test]
    fn auc_trapezoid() {
        let rows: Vec<MetricsRow> = [(0, 0.0), (10, 1.0), (20, 1.0)]
            .iter()
            .map(|(s, v)| MetricsRow {
                step: *s,
                success_rate: Some(*v),
                ..MetricsRow::default()
            })
            .collect();
        assert_eq!(success_auc(&rows), 15.0);
    }
}
