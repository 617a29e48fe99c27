//! Metric report assembly and rendering: a machine-readable JSON document
//! plus aligned text tables for single runs and ablation comparisons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Formats a FAR fraction as a stable map key, e.g. `0.0001`. Keys of this
/// form sort lexicographically in numeric order for targets in (0, 1).
pub fn far_key(target: f64) -> String {
    let s = format!("{target:.8}");
    let trimmed = s.trim_end_matches('0');
    let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
    trimmed.to_owned()
}

/// Formats a FAR fraction as a percentage label, e.g. `0.01%`.
pub fn far_percent_label(target: f64) -> String {
    format!("{}%", far_key(target * 100.0))
}

/// One evaluation run's metrics. `wer` is `None` when no ASR backend was
/// available; the report keeps the column and renders an explicit null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Fréchet distance between morph embeddings and real corpus clips.
    pub fad_vs_real: f64,
    /// Fréchet distance between morph embeddings and single-source clones.
    pub fad_vs_clone: f64,
    /// Mean KL divergence of morph log-mel histograms against source audio.
    pub kld: f64,
    /// Word error rate as a fraction, when an ASR backend transcribed the
    /// morphs.
    pub wer: Option<f64>,
    /// FAR-target key (see [`far_key`]) to MMPMR percentage.
    pub mmpmr: BTreeMap<String, f64>,
    /// FAR-target key to FMMPMR percentage.
    pub fmmpmr: BTreeMap<String, f64>,
    pub n_morphs: usize,
}

impl MetricReport {
    /// Checks the structural invariants: the two match-rate maps share keys,
    /// every rate is a percentage, FMMPMR never exceeds MMPMR, and WER and
    /// the distances are non-negative.
    pub fn validate(&self) -> Result<(), MetricError> {
        let fail = |msg: String| Err(MetricError::ReportInvariant(msg));
        if self.mmpmr.len() != self.fmmpmr.len()
            || self
                .mmpmr
                .keys()
                .zip(self.fmmpmr.keys())
                .any(|(a, b)| a != b)
        {
            return fail("mmpmr and fmmpmr report different FAR targets".into());
        }
        for (key, &m) in &self.mmpmr {
            let f = self.fmmpmr[key];
            if !(0.0..=100.0).contains(&m) || !(0.0..=100.0).contains(&f) {
                return fail(format!("rates at {key} outside [0, 100]: {m}, {f}"));
            }
            if f > m + 1e-9 {
                return fail(format!("fmmpmr {f} exceeds mmpmr {m} at FAR {key}"));
            }
        }
        if let Some(w) = self.wer {
            if !(w.is_finite() && w >= 0.0) {
                return fail(format!("wer {w} is negative or non-finite"));
            }
        }
        for (name, v) in [
            ("fad_vs_real", self.fad_vs_real),
            ("fad_vs_clone", self.fad_vs_clone),
            ("kld", self.kld),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} = {v} is negative or non-finite"));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Aligned two-column table for one run.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("fad_vs_real".into(), format!("{:.4}", self.fad_vs_real)),
            ("fad_vs_clone".into(), format!("{:.4}", self.fad_vs_clone)),
            ("kld".into(), format!("{:.4}", self.kld)),
            (
                "wer".into(),
                self.wer.map_or("null".into(), |w| format!("{w:.4}")),
            ),
        ];
        for (key, v) in &self.mmpmr {
            rows.push((format!("mmpmr@{key}"), format!("{v:.2}")));
        }
        for (key, v) in &self.fmmpmr {
            rows.push((format!("fmmpmr@{key}"), format!("{v:.2}")));
        }
        rows.push(("n_morphs".into(), self.n_morphs.to_string()));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}

/// Aligned comparison table, one row per labeled report. Rows keep their
/// input order; columns are the union of all FAR targets.
pub fn render_ablation_table(rows: &[(String, MetricReport)]) -> String {
    let mut far_keys: Vec<String> = Vec::new();
    for (_, report) in rows {
        for key in report.mmpmr.keys() {
            if !far_keys.contains(key) {
                far_keys.push(key.clone());
            }
        }
    }
    far_keys.sort();

    let mut header: Vec<String> = vec![
        "strategy".into(),
        "fad_vs_real".into(),
        "fad_vs_clone".into(),
        "kld".into(),
        "wer".into(),
    ];
    for key in &far_keys {
        header.push(format!("mmpmr@{key}"));
        header.push(format!("fmmpmr@{key}"));
    }

    let mut table: Vec<Vec<String>> = vec![header];
    for (label, r) in rows {
        let mut row = vec![
            label.clone(),
            format!("{:.4}", r.fad_vs_real),
            format!("{:.4}", r.fad_vs_clone),
            format!("{:.4}", r.kld),
            r.wer.map_or("null".into(), |w| format!("{w:.4}")),
        ];
        for key in &far_keys {
            row.push(r.mmpmr.get(key).map_or("-".into(), |v| format!("{v:.2}")));
            row.push(r.fmmpmr.get(key).map_or("-".into(), |v| format!("{v:.2}")));
        }
        table.push(row);
    }

    let n_cols = table[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> MetricReport {
        let mut mmpmr = BTreeMap::new();
        let mut fmmpmr = BTreeMap::new();
        for (t, m, f) in [
            (0.0001, 80.0, 70.0),
            (0.001, 90.0, 85.0),
            (0.01, 95.0, 92.0),
        ] {
            mmpmr.insert(far_key(t), m);
            fmmpmr.insert(far_key(t), f);
        }
        MetricReport {
            fad_vs_real: 4.9,
            fad_vs_clone: 0.27,
            kld: 0.1385,
            wer: Some(0.19),
            mmpmr,
            fmmpmr,
            n_morphs: 500,
        }
    }

    #[test]
    fn far_keys_are_trimmed_and_ordered() {
        assert_eq!(far_key(0.0001), "0.0001");
        assert_eq!(far_key(0.001), "0.001");
        assert_eq!(far_key(0.01), "0.01");
        assert_eq!(far_percent_label(0.0001), "0.01%");
        assert_eq!(far_percent_label(0.01), "1%");
        let mut keys = vec![far_key(0.01), far_key(0.0001), far_key(0.001)];
        keys.sort();
        assert_eq!(keys, vec!["0.0001", "0.001", "0.01"]);
    }

    #[test]
    fn valid_report_round_trips_through_json() {
        let r = sample_report();
        r.validate().unwrap();
        let json = r.to_json_string();
        let back = MetricReport::from_json_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn json_output_is_deterministic() {
        assert_eq!(
            sample_report().to_json_string(),
            sample_report().to_json_string()
        );
    }

    #[test]
    fn fmmpmr_above_mmpmr_fails_validation() {
        let mut r = sample_report();
        *r.fmmpmr.get_mut("0.001").unwrap() = 99.0;
        assert!(matches!(r.validate(), Err(MetricError::ReportInvariant(_))));
    }

    #[test]
    fn mismatched_far_targets_fail_validation() {
        let mut r = sample_report();
        r.fmmpmr.remove("0.01");
        assert!(r.validate().is_err());
    }

    #[test]
    fn missing_wer_renders_null() {
        let mut r = sample_report();
        r.wer = None;
        r.validate().unwrap();
        let table = r.render_table();
        assert!(table
            .lines()
            .any(|l| l.starts_with("wer ") && l.trim_end().ends_with("null")));
        assert!(r.to_json_string().contains("\"wer\": null"));
    }

    #[test]
    fn tables_contain_every_operating_point() {
        let r = sample_report();
        let table = r.render_table();
        for key in ["mmpmr@0.0001", "fmmpmr@0.01", "fad_vs_real", "kld"] {
            assert!(table.contains(key), "missing {key} in:\n{table}");
        }
        let ablation = render_ablation_table(&[("slerp".into(), r.clone()), ("lerp".into(), r)]);
        let lines: Vec<&str> = ablation.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("strategy"));
        assert!(lines[1].starts_with("slerp"));
        assert!(lines[2].starts_with("lerp"));
    }
}
