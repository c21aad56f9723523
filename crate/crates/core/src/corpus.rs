//! QA cases: the canonical JSON corpus format, its validation rules, and
//! descriptive statistics.
//!
//! A corpus file is a top-level JSON array of case objects:
//!
//! ```json
//! [{
//!   "case_id": "1",
//!   "patient_question": "...",
//!   "clinician_question": "...",
//!   "sentences": [{"id": "1", "text": "...", "relevance": "essential"}],
//!   "answer": [{"id": "1", "text": "..."}],
//!   "evidence": [{"answer_id": "1", "evidence_ids": ["1"]}],
//!   "specialty": "cardiology"
//! }]
//! ```
//!
//! Every key except `case_id`, `patient_question` and `sentences` is
//! optional, since test splits ship without gold labels.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relevance {
    #[serde(rename = "essential")]
    Essential,
    #[serde(rename = "supplementary")]
    Supplementary,
    #[serde(
        rename = "not-relevant",
        alias = "not_relevant",
        alias = "not relevant"
    )]
    NotRelevant,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Essential => "essential",
            Relevance::Supplementary => "supplementary",
            Relevance::NotRelevant => "not-relevant",
        }
    }

    /// Gold-positive under strict scoring. Only `essential` counts.
    pub fn is_strict_positive(self) -> bool {
        self == Relevance::Essential
    }
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSentence {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Relevance>,
}

impl NoteSentence {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        relevance: Option<Relevance>,
    ) -> Self {
        NoteSentence {
            id: id.into(),
            text: text.into(),
            relevance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSentence {
    pub id: String,
    pub text: String,
}

/// Citations for one answer sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLink {
    pub answer_id: String,
    pub evidence_ids: BTreeSet<String>,
}

/// Many-to-many mapping from answer sentence ids to cited note sentence ids.
///
/// Links keep the order of the answer sentences they describe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub case_id: String,
    pub links: Vec<EvidenceLink>,
}

impl AlignmentMap {
    /// A map with every answer id present and no citations.
    pub fn empty<'a>(case_id: &str, answer_ids: impl IntoIterator<Item = &'a str>) -> Self {
        AlignmentMap {
            case_id: case_id.to_string(),
            links: answer_ids
                .into_iter()
                .map(|id| EvidenceLink {
                    answer_id: id.to_string(),
                    evidence_ids: BTreeSet::new(),
                })
                .collect(),
        }
    }

    pub fn evidence_for(&self, answer_id: &str) -> Option<&BTreeSet<String>> {
        self.links
            .iter()
            .find(|l| l.answer_id == answer_id)
            .map(|l| &l.evidence_ids)
    }

    pub fn link_count(&self) -> usize {
        self.links.iter().map(|l| l.evidence_ids.len()).sum()
    }

    /// All (answer_id, sentence_id) pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.links.iter().flat_map(|l| {
            l.evidence_ids
                .iter()
                .map(move |e| (l.answer_id.as_str(), e.as_str()))
        })
    }

    /// Checks that the map covers exactly `answer_ids` and cites only
    /// sentences of `case`.
    pub fn validate<'a>(
        &self,
        case: &Case,
        answer_ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        let expected: Vec<&str> = answer_ids.into_iter().collect();
        let mut seen = HashSet::new();
        for link in &self.links {
            if !seen.insert(link.answer_id.as_str()) {
                return Err(Error::Validation(format!(
                    "case {}: answer id \"{}\" appears more than once",
                    self.case_id, link.answer_id
                )));
            }
            if !expected.contains(&link.answer_id.as_str()) {
                return Err(Error::Validation(format!(
                    "case {}: unknown answer id \"{}\"",
                    self.case_id, link.answer_id
                )));
            }
            for id in &link.evidence_ids {
                if case.sentence(id).is_none() {
                    return Err(Error::Validation(format!(
                        "case {}: evidence id \"{}\" is not a note sentence of this case",
                        self.case_id, id
                    )));
                }
            }
        }
        if let Some(missing) = expected.iter().find(|id| !seen.contains(*id)) {
            return Err(Error::Validation(format!(
                "case {}: answer id \"{}\" has no alignment entry",
                self.case_id, missing
            )));
        }
        Ok(())
    }
}

/// Where a synthetic case came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_case_id: String,
    pub repair_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub patient_question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinician_question: Option<String>,
    pub sentences: Vec<NoteSentence>,
    #[serde(default, rename = "answer", skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<Vec<AnswerSentence>>,
    #[serde(default, rename = "evidence", skip_serializing_if = "Option::is_none")]
    pub evidence_links: Option<Vec<EvidenceLink>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialty: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Case {
    pub fn sentence(&self, id: &str) -> Option<&NoteSentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn sentence_ids(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.id.as_str())
    }

    pub fn is_labeled(&self) -> bool {
        self.sentences.iter().all(|s| s.relevance.is_some())
    }

    /// Ids of sentences that are gold-positive under strict scoring.
    pub fn essential_ids(&self) -> impl Iterator<Item = &str> {
        self.sentences
            .iter()
            .filter(|s| s.relevance.is_some_and(Relevance::is_strict_positive))
            .map(|s| s.id.as_str())
    }

    /// Reference answer as a single string, sentences joined by spaces.
    pub fn reference_answer_text(&self) -> Option<String> {
        self.reference_answer.as_ref().map(|a| {
            a.iter()
                .map(|s| s.text.trim())
                .collect::<Vec<_>>()
                .join(" ")
        })
    }

    /// The note excerpt as one string.
    pub fn note_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.trim())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn gold_alignment(&self) -> Option<AlignmentMap> {
        let answer = self.reference_answer.as_ref()?;
        let links = self.evidence_links.as_ref()?;
        let mut map = AlignmentMap::empty(&self.case_id, answer.iter().map(|a| a.id.as_str()));
        for link in links {
            if let Some(slot) = map.links.iter_mut().find(|l| l.answer_id == link.answer_id) {
                slot.evidence_ids.extend(link.evidence_ids.iter().cloned());
            }
        }
        Some(map)
    }

    /// Checks the per-case invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("case {}: {msg}", self.case_id)));
        if self.case_id.trim().is_empty() {
            return Err(Error::Validation("case with empty case_id".into()));
        }
        if self.sentences.is_empty() {
            return fail("no note sentences".into());
        }
        let mut ids = HashSet::new();
        for s in &self.sentences {
            if s.id.is_empty() {
                return fail("note sentence with empty id".into());
            }
            if !ids.insert(s.id.as_str()) {
                return fail(format!("duplicate sentence id \"{}\"", s.id));
            }
            if s.text.trim().is_empty() {
                return fail(format!("sentence \"{}\" has empty text", s.id));
            }
        }
        let mut answer_ids = HashSet::new();
        if let Some(answer) = &self.reference_answer {
            for a in answer {
                if a.id.is_empty() || !answer_ids.insert(a.id.as_str()) {
                    return fail(format!("empty or duplicate answer id \"{}\"", a.id));
                }
                if a.text.trim().is_empty() {
                    return fail(format!("answer sentence \"{}\" has empty text", a.id));
                }
            }
        }
        if let Some(links) = &self.evidence_links {
            for link in links {
                if self.reference_answer.is_some() && !answer_ids.contains(link.answer_id.as_str())
                {
                    return fail(format!(
                        "evidence link cites unknown answer id \"{}\"",
                        link.answer_id
                    ));
                }
                if let Some(bad) = link.evidence_ids.iter().find(|e| !ids.contains(e.as_str())) {
                    return fail(format!("evidence link cites unknown sentence id \"{bad}\""));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Json,
}

pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Case>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Json => parse_corpus_str(&raw),
    }
}

/// Parses and validates a JSON corpus. Errors name the offending case.
pub fn parse_corpus_str(raw: &str) -> Result<Vec<Case>> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(raw).map_err(|e| Error::parse("corpus", e))?;
    let mut cases = Vec::with_capacity(values.len());
    for (i, value) in values.into_iter().enumerate() {
        let label = value
            .get("case_id")
            .and_then(|v| v.as_str())
            .map(|id| format!("case[{i}] (case_id={id})"))
            .unwrap_or_else(|| format!("case[{i}]"));
        let case: Case = serde_json::from_value(value).map_err(|e| Error::parse(label, e))?;
        cases.push(case);
    }
    validate_corpus(&cases)?;
    Ok(cases)
}

pub fn validate_corpus(cases: &[Case]) -> Result<()> {
    let mut ids = HashSet::new();
    for case in cases {
        case.validate()?;
        if !ids.insert(case.case_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate case_id \"{}\"",
                case.case_id
            )));
        }
    }
    Ok(())
}

pub fn serialize_corpus(cases: &[Case]) -> String {
    serde_json::to_string_pretty(cases).expect("cases always serialize")
}

pub fn write_corpus(path: &Path, cases: &[Case]) -> Result<()> {
    crate::io::write_atomic(path, serialize_corpus(cases).as_bytes())
}

/// Word-count statistics over a corpus. Lengths are whitespace token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub case_count: usize,
    pub total_note_sentences: usize,
    pub avg_note_sentences_per_case: f64,
    pub avg_note_sentence_length_words: f64,
    pub avg_note_length_per_case_words: f64,
    pub avg_patient_question_length_words: f64,
    /// Over cases that carry a clinician question.
    pub avg_clinician_question_length_words: f64,
    /// Over cases that carry a reference answer.
    pub avg_answer_sentences_per_case: f64,
    pub avg_answer_sentence_length_words: f64,
}

fn mean(total: usize, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        total as f64 / count as f64
    }
}

pub fn compute_stats(cases: &[Case]) -> Result<CorpusStats> {
    if cases.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute statistics of an empty corpus".into(),
        ));
    }
    let n = cases.len();
    let total_sentences: usize = cases.iter().map(|c| c.sentences.len()).sum();
    let note_words: usize = cases
        .iter()
        .flat_map(|c| &c.sentences)
        .map(|s| word_count(&s.text))
        .sum();
    let patient_words: usize = cases.iter().map(|c| word_count(&c.patient_question)).sum();
    let clinician: Vec<usize> = cases
        .iter()
        .filter_map(|c| c.clinician_question.as_deref().map(word_count))
        .collect();
    let answers: Vec<&Vec<AnswerSentence>> = cases
        .iter()
        .filter_map(|c| c.reference_answer.as_ref())
        .collect();
    let answer_sentences: usize = answers.iter().map(|a| a.len()).sum();
    let answer_words: usize = answers
        .iter()
        .flat_map(|a| a.iter())
        .map(|s| word_count(&s.text))
        .sum();

    Ok(CorpusStats {
        case_count: n,
        total_note_sentences: total_sentences,
        avg_note_sentences_per_case: mean(total_sentences, n),
        avg_note_sentence_length_words: mean(note_words, total_sentences),
        avg_note_length_per_case_words: mean(note_words, n),
        avg_patient_question_length_words: mean(patient_words, n),
        avg_clinician_question_length_words: mean(clinician.iter().sum(), clinician.len()),
        avg_answer_sentences_per_case: mean(answer_sentences, answers.len()),
        avg_answer_sentence_length_words: mean(answer_words, answer_sentences),
    })
}

impl CorpusStats {
    /// Two-column text table, two decimals.
    pub fn to_table(&self) -> String {
        let rows: [(&str, String); 9] = [
            ("Cases", self.case_count.to_string()),
            ("Note sentences", self.total_note_sentences.to_string()),
            (
                "Average note sentences per case",
                format!("{:.2}", self.avg_note_sentences_per_case),
            ),
            (
                "Average note sentence length",
                format!("{:.2}", self.avg_note_sentence_length_words),
            ),
            (
                "Average note length per case",
                format!("{:.2}", self.avg_note_length_per_case_words),
            ),
            (
                "Average patient question length",
                format!("{:.2}", self.avg_patient_question_length_words),
            ),
            (
                "Average clinician question length",
                format!("{:.2}", self.avg_clinician_question_length_words),
            ),
            (
                "Average answer sentences per case",
                format!("{:.2}", self.avg_answer_sentences_per_case),
            ),
            (
                "Average answer sentence length",
                format!("{:.2}", self.avg_answer_sentence_length_words),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>8}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CASES: &str = r#"[
      {"case_id": "1", "patient_question": "Why did I get a fever?",
       "clinician_question": "What caused the fever?",
       "sentences": [{"id": "1", "text": "Fever on admission.", "relevance": "essential"},
                     {"id": "2", "text": "Diet advanced.", "relevance": "not-relevant"}],
       "answer": [{"id": "1", "text": "The fever came from a urinary infection."}],
       "evidence": [{"answer_id": "1", "evidence_ids": ["1"]}]},
      {"case_id": "2", "patient_question": "Is my heart ok?",
       "sentences": [{"id": "1", "text": "Echo normal."}]}
    ]"#;

    #[test]
    fn optional_clinician_question() {
        let cases = parse_corpus_str(TWO_CASES).unwrap();
        assert_eq!(cases.len(), 2);
        assert!(cases[0].clinician_question.is_some());
        assert!(cases[1].clinician_question.is_none());
        assert!(!cases[1].is_labeled());
    }

    #[test]
    fn unknown_evidence_id_is_named() {
        let raw = TWO_CASES.replace(r#""evidence_ids": ["1"]"#, r#""evidence_ids": ["99"]"#);
        let err = parse_corpus_str(&raw).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("\"99\""), "{err}");
    }

    #[test]
    fn duplicate_case_id_rejected() {
        let raw = TWO_CASES.replace(r#""case_id": "2""#, r#""case_id": "1""#);
        let err = parse_corpus_str(&raw).unwrap_err();
        assert!(err.to_string().contains("duplicate case_id"));
    }

    #[test]
    fn duplicate_sentence_id_rejected() {
        let raw = TWO_CASES.replace(
            r#"{"id": "2", "text": "Diet"#,
            r#"{"id": "1", "text": "Diet"#,
        );
        assert!(parse_corpus_str(&raw).is_err());
    }

    #[test]
    fn malformed_field_names_case() {
        let raw = TWO_CASES.replace(r#""relevance": "essential""#, r#""relevance": "crucial""#);
        let err = parse_corpus_str(&raw).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("case_id=1"), "{msg}");
    }

    #[test]
    fn stats_by_hand() {
        let case = Case {
            case_id: "a".into(),
            patient_question: "one two".into(),
            clinician_question: None,
            sentences: vec![
                NoteSentence::new("1", "a b c", None),
                NoteSentence::new("2", "a b c d e", None),
            ],
            reference_answer: None,
            evidence_links: None,
            specialty: None,
            provenance: None,
        };
        let s = compute_stats(&[case]).unwrap();
        assert_eq!(s.avg_note_sentences_per_case, 2.0);
        assert_eq!(s.avg_note_sentence_length_words, 4.0);
        assert_eq!(s.avg_note_length_per_case_words, 8.0);
        assert_eq!(s.avg_clinician_question_length_words, 0.0);
    }

    #[test]
    fn empty_question_counts_zero_words() {
        let mut cases = parse_corpus_str(TWO_CASES).unwrap();
        cases.truncate(1);
        cases[0].patient_question.clear();
        let s = compute_stats(&cases).unwrap();
        assert_eq!(s.avg_patient_question_length_words, 0.0);
    }

    #[test]
    fn empty_corpus_stats_error() {
        assert!(compute_stats(&[]).is_err());
    }

    #[test]
    fn gold_alignment_covers_all_answers() {
        let cases = parse_corpus_str(TWO_CASES).unwrap();
        let map = cases[0].gold_alignment().unwrap();
        assert_eq!(map.link_count(), 1);
        map.validate(&cases[0], ["1"]).unwrap();
        assert!(cases[1].gold_alignment().is_none());
    }
}
