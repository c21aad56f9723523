//! Score report assembly.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::prf::MicroScores;
use crate::error::{Error, Result};

/// Model-based metrics this crate does not compute. Values may be supplied
/// from elsewhere and are then included in the overall mean.
pub const EXTERNAL_SLOTS: &[&str] = &["bertscore", "alignscore", "medcon"];

/// Generation metrics, each in [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenScores {
    pub bleu: f64,
    pub rouge_lsum: f64,
    pub sari: f64,
    /// External slot name to value; `None` marks a slot left empty.
    pub external: BTreeMap<String, Option<f64>>,
}

impl GenScores {
    pub fn new(bleu: f64, rouge_lsum: f64, sari: f64) -> Self {
        GenScores {
            bleu,
            rouge_lsum,
            sari,
            external: EXTERNAL_SLOTS
                .iter()
                .map(|s| (s.to_string(), None))
                .collect(),
        }
    }

    pub fn set_external(&mut self, name: &str, value: f64) -> Result<()> {
        if !EXTERNAL_SLOTS.contains(&name) {
            return Err(Error::InvalidInput(format!(
                "unknown external metric `{name}` (expected one of {})",
                EXTERNAL_SLOTS.join(", ")
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidInput(format!(
                "{name} = {value} is outside [0, 1]"
            )));
        }
        self.external.insert(name.to_string(), Some(value));
        Ok(())
    }

    /// Every populated metric, by name.
    pub fn available(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("bleu".to_string(), self.bleu),
            ("rouge_lsum".to_string(), self.rouge_lsum),
            ("sari".to_string(), self.sari),
        ];
        out.extend(
            self.external
                .iter()
                .filter_map(|(k, v)| v.map(|v| (k.clone(), v))),
        );
        out
    }

    /// Arithmetic mean of the populated metrics.
    pub fn overall(&self) -> f64 {
        let values = self.available();
        values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub subtask: u8,
    pub cases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro: Option<MicroScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenScores>,
    /// Mean of the available metrics, in [0, 1].
    pub overall: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ScoreReport {
    pub fn from_micro(subtask: u8, cases: usize, micro: MicroScores) -> Self {
        ScoreReport {
            subtask,
            cases,
            overall: micro.f1,
            micro: Some(micro),
            generation: None,
            notes: Vec::new(),
        }
    }

    pub fn from_generation(subtask: u8, cases: usize, generation: GenScores) -> Self {
        ScoreReport {
            subtask,
            cases,
            overall: generation.overall(),
            micro: None,
            generation: Some(generation),
            notes: Vec::new(),
        }
    }

    /// Aligned two-column table; scores are shown x100.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("subtask".into(), self.subtask.to_string()),
            ("cases".into(), self.cases.to_string()),
        ];
        if let Some(m) = &self.micro {
            rows.push((
                "tp / fp / fn".into(),
                format!("{} / {} / {}", m.tp, m.fp, m.fn_),
            ));
            rows.push(("precision".into(), format!("{:.2}", m.precision * 100.0)));
            rows.push(("recall".into(), format!("{:.2}", m.recall * 100.0)));
            rows.push(("f1".into(), format!("{:.2}", m.f1 * 100.0)));
        }
        if let Some(g) = &self.generation {
            rows.push(("bleu".into(), format!("{:.2}", g.bleu * 100.0)));
            rows.push(("rouge_lsum".into(), format!("{:.2}", g.rouge_lsum * 100.0)));
            rows.push(("sari".into(), format!("{:.2}", g.sari * 100.0)));
            for (name, value) in &g.external {
                let shown = value.map_or_else(
                    || "external (not provided)".into(),
                    |v| format!("{:.2}", v * 100.0),
                );
                rows.push((name.clone(), shown));
            }
        }
        rows.push(("overall".into(), format!("{:.2}", self.overall * 100.0)));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_skips_empty_slots() {
        let mut g = GenScores::new(0.2, 0.4, 0.6);
        assert!((g.overall() - 0.4).abs() < 1e-12);
        g.set_external("bertscore", 0.8).unwrap();
        assert!((g.overall() - 0.5).abs() < 1e-12);
        assert!(g.set_external("bleurt", 0.5).is_err());
    }

    #[test]
    fn table_shows_percentages() {
        let r = ScoreReport::from_micro(2, 20, MicroScores::from_counts(121, 307, 0));
        let t = r.to_table();
        assert!(t.contains("28.27"));
        assert!(t.contains("100.00"));
        assert!(t.contains("44.08"));
    }
}
