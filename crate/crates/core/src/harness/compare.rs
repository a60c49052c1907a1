//! Side-by-side tables of finished runs.

use std::path::PathBuf;

use crate::error::{Error, Result};

use super::output::{read_summary, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub columns: Vec<String>,
    /// `(metric, one cell per column)`.
    pub rows: Vec<(String, Vec<String>)>,
}

/// Builds a metric-by-run table. With `aggregate`, runs sharing a method and
/// epsilon are pooled into `mean ± std` cells; otherwise every run must use
/// the same seed.
pub fn compare(dirs: &[PathBuf], aggregate: bool) -> Result<Comparison> {
    if dirs.len() < 2 {
        return Err(Error::Comparison("need at least two run directories".into()));
    }
    let runs: Vec<(String, RunSummary)> = dirs
        .iter()
        .map(|d| Ok((d.display().to_string(), read_summary(d)?)))
        .collect::<Result<_>>()?;
    let (first_dir, first) = &runs[0];
    for (dir, s) in &runs[1..] {
        if s.setup_fingerprint != first.setup_fingerprint {
            return Err(Error::Comparison(format!(
                "{dir} uses different data, model or federation settings than {first_dir}"
            )));
        }
        if !aggregate && s.seed != first.seed {
            return Err(Error::Comparison(format!(
                "{dir} has seed {} but {first_dir} has seed {}; use aggregate mode to pool seeds",
                s.seed, first.seed
            )));
        }
    }
    let metrics: [(&str, fn(&RunSummary) -> Option<f64>); 3] = [
        ("ATA", |s| s.best_ata),
        ("max-ATA", |s| Some(s.best_max_ata)),
        ("MTA", |s| Some(s.best_mta)),
    ];
    let groups: Vec<(String, Vec<&RunSummary>)> = if aggregate {
        let mut groups: Vec<(String, Vec<&RunSummary>)> = Vec::new();
        for (_, s) in &runs {
            let key = column_label(s);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(s),
                None => groups.push((key, vec![s])),
            }
        }
        groups
    } else {
        runs.iter().map(|(_, s)| (column_label(s), vec![s])).collect()
    };
    let rows = metrics
        .iter()
        .map(|(name, get)| {
            let cells = groups
                .iter()
                .map(|(_, members)| {
                    let values: Option<Vec<f64>> = members.iter().map(|s| get(s)).collect();
                    match values {
                        None => "-".to_string(),
                        Some(v) if aggregate => {
                            let (m, sd) = mean_std(&v);
                            format!("{m:.3} ± {sd:.3}")
                        }
                        Some(v) => format!("{:.3}", v[0]),
                    }
                })
                .collect();
            (name.to_string(), cells)
        })
        .collect();
    Ok(Comparison {
        columns: groups.into_iter().map(|(k, _)| k).collect(),
        rows,
    })
}

fn column_label(s: &RunSummary) -> String {
    format!("{} eps={}", s.method, s.epsilon)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let label_w = self.rows.iter().map(|(m, _)| m.chars().count()).max().unwrap_or(0).max(6);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.rows
                    .iter()
                    .map(|(_, cells)| cells[i].chars().count())
                    .chain([c.chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{:label_w$}", "metric");
        for (c, w) in self.columns.iter().zip(&widths) {
            out += &format!("  {c:>w$}");
        }
        out.push('\n');
        for (m, cells) in &self.rows {
            out += &format!("{m:label_w$}");
            for (cell, w) in cells.iter().zip(&widths) {
                out += &format!("  {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("metric").chain(self.columns.iter().map(String::as_str)).collect();
        let io = |e: csv::Error| Error::Comparison(e.to_string());
        w.write_record(&header).map_err(io)?;
        for (m, cells) in &self.rows {
            w.write_record(std::iter::once(m).chain(cells)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Comparison(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Comparison(e.to_string()))
    }
}
