//! Result files: per-round CSV, attack events, PCA coordinates and the run summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::federation::RoundLog;
use crate::metrics::PcaProjection;

pub const ROUNDS_CSV: &str = "rounds.csv";
pub const ATTACKS_CSV: &str = "attacks.csv";
pub const PCA_CSV: &str = "pca.csv";
pub const CONFIG_DUMP: &str = "config.toml";
pub const SUMMARY: &str = "summary.toml";
pub const INCOMPLETE: &str = "INCOMPLETE";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rounds to 9 significant digits; the shortest decimal form of the result
/// is what ends up in CSV files.
pub fn sig9(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// One line of `rounds.csv`, columns in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub val_loss: f64,
    pub mta: f64,
    pub ts_ata: Option<f64>,
    pub ata_target: Option<usize>,
    pub max_ata: f64,
    pub max_ata_class: usize,
    pub benign_norm_mean: Option<f64>,
    pub malicious_norms: String,
    pub rejected_ids: String,
    pub attack_active: bool,
    pub chosen_targets: String,
}

impl RoundRow {
    pub fn from_log(log: &RoundLog) -> Self {
        let m = &log.metrics;
        Self {
            round: log.round,
            val_loss: sig9(m.val_loss),
            mta: sig9(m.mta),
            ts_ata: m.ts_ata.map(sig9),
            ata_target: m.ata_target,
            max_ata: sig9(m.max_ata),
            max_ata_class: m.max_ata_class,
            benign_norm_mean: log.benign_norm_mean.map(sig9),
            malicious_norms: join(log.malicious_norms().into_iter().map(sig9)),
            rejected_ids: join(log.rejected.iter().map(|r| r.client)),
            attack_active: log.attack_active,
            chosen_targets: join(log.events.iter().filter_map(|e| e.target)),
        }
    }

    pub fn malicious_norm_values(&self) -> Vec<f64> {
        split_list(&self.malicious_norms)
    }

    pub fn targets(&self) -> Vec<usize> {
        split_list(&self.chosen_targets)
    }
}

fn split_list<T: std::str::FromStr>(s: &str) -> Vec<T> {
    s.split(';').filter(|p| !p.is_empty()).filter_map(|p| p.parse().ok()).collect()
}

pub fn rounds_csv(logs: &[RoundLog]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for log in logs {
        w.serialize(RoundRow::from_log(log)).map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_rounds_csv(text: &str) -> Result<Vec<RoundRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)
}

#[derive(Debug, Serialize)]
struct AttackRow {
    round: usize,
    client: usize,
    target: Option<usize>,
    q: Option<f64>,
    gamma: Option<f64>,
    unscaled_norm: Option<f64>,
    flipped: usize,
    non_source_reads: usize,
    distances: String,
    flame_scores: String,
    skipped: String,
}

pub fn attacks_csv(logs: &[RoundLog], source: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for log in logs {
        for e in &log.events {
            w.serialize(AttackRow {
                round: log.round,
                client: e.client,
                target: e.target,
                q: e.q.map(sig9),
                gamma: e.gamma.map(sig9),
                unscaled_norm: e.unscaled_norm.map(sig9),
                flipped: e.flipped,
                non_source_reads: e.audit.non_source_reads(source),
                distances: e
                    .distances
                    .as_ref()
                    .map(|row| join(row.iter().map(|d| d.map(|v| sig9(v).to_string()).unwrap_or_default())))
                    .unwrap_or_default(),
                flame_scores: e
                    .flame
                    .as_ref()
                    .map(|f| join(f.scores.iter().map(|(c, s)| format!("{c}:{}", sig9(*s)))))
                    .unwrap_or_default(),
                skipped: e.skipped.clone().unwrap_or_default(),
            })
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn pca_csv(p: &PcaProjection) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pc1", "pc2", "label"]).map_err(csv_err)?;
    for (c, y) in p.coords.iter().zip(&p.labels) {
        let get = |i: usize| c.get(i).map(|v| sig9(*v).to_string()).unwrap_or_default();
        w.write_record([get(0), get(1), y.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv encoding: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
    Error::format(offset, e.to_string())
}

/// Headline numbers for one run, or the average over a target sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub epsilon: f64,
    pub rounds: usize,
    /// Round at which the validation loss plateaued, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged_round: Option<usize>,
    /// Summary statistics cover rounds `horizon_start + 1 ..= horizon_end`.
    pub horizon_start: usize,
    pub horizon_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_ata: Option<f64>,
    pub best_max_ata: f64,
    pub best_mta: f64,
    pub final_mta: f64,
    pub wall_time_secs: f64,
    pub config_hash: String,
    pub setup_fingerprint: String,
    #[serde(default)]
    pub target_histogram: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_ata: Option<f64>,
    pub best_max_ata: f64,
    pub best_mta: f64,
}

/// Window statistics computed purely from `rounds.csv` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub horizon_end: usize,
    pub best_ata: Option<f64>,
    pub best_max_ata: f64,
    pub best_mta: f64,
    pub final_mta: f64,
    pub target_histogram: BTreeMap<String, usize>,
}

pub fn window_stats(rows: &[RoundRow], start: usize, horizon: Option<usize>) -> Result<WindowStats> {
    let end = horizon.map_or(usize::MAX, |h| start + h);
    let window: Vec<&RoundRow> = rows.iter().filter(|r| r.round > start && r.round <= end).collect();
    let last = window
        .last()
        .ok_or_else(|| Error::Metric(format!("no rounds after round {start}")))?;
    let max = |f: &dyn Fn(&RoundRow) -> f64| window.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
    let mut target_histogram = BTreeMap::new();
    for r in &window {
        for t in r.targets() {
            *target_histogram.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    Ok(WindowStats {
        horizon_end: last.round,
        best_ata: window
            .iter()
            .filter_map(|r| r.ts_ata)
            .reduce(f64::max),
        best_max_ata: max(&|r| r.max_ata),
        best_mta: max(&|r| r.mta),
        final_mta: last.mta,
        target_histogram,
    })
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Comparison(format!("{}: no readable {SUMMARY} ({e})", dir.display())))?;
    toml::from_str(&text).map_err(|e| Error::Comparison(format!("{}: {e}", path.display())))
}

pub fn summary_toml(s: &RunSummary) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: usize, mta: f64, ts: Option<f64>, targets: &str) -> RoundRow {
        RoundRow {
            round,
            val_loss: 0.5,
            mta,
            ts_ata: ts,
            ata_target: ts.map(|_| 3),
            max_ata: ts.unwrap_or(0.0) + 0.1,
            max_ata_class: 3,
            benign_norm_mean: Some(0.25),
            malicious_norms: "0.5;0.75".into(),
            rejected_ids: String::new(),
            attack_active: ts.is_some(),
            chosen_targets: targets.into(),
        }
    }

    #[test]
    fn sig9_keeps_nine_digits() {
        assert_eq!(sig9(0.1234567891234), 0.123456789);
        assert_eq!(sig9(123456789.987), 123456790.0);
        assert_eq!(sig9(0.5), 0.5);
        assert_eq!(sig9(1.0 / 3.0).to_string(), "0.333333333");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(1, 0.5, None, ""), row(2, 0.75, Some(0.125), "3;3")];
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r).unwrap();
        }
        let text = finish(w).unwrap();
        assert!(text.starts_with(
            "round,val_loss,mta,ts_ata,ata_target,max_ata,max_ata_class,benign_norm_mean,malicious_norms,rejected_ids"
        ));
        let back = parse_rounds_csv(&text).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[1].malicious_norm_values(), vec![0.5, 0.75]);
    }

    #[test]
    fn window_excludes_warmup() {
        let rows = vec![
            row(1, 0.99, None, ""),
            row(2, 0.6, Some(0.2), "3"),
            row(3, 0.7, Some(0.4), "3;4"),
            row(4, 0.8, Some(0.9), "4"),
        ];
        let s = window_stats(&rows, 1, Some(2)).unwrap();
        assert_eq!(s.horizon_end, 3);
        assert_eq!(s.best_ata, Some(0.4));
        assert_eq!(s.best_mta, 0.7);
        assert_eq!(s.final_mta, 0.7);
        assert_eq!(s.target_histogram.get("3"), Some(&2));
        assert_eq!(s.target_histogram.get("4"), Some(&1));
        assert!(window_stats(&rows, 4, None).is_err());
    }
}
