//! Grounded answer generation with a hard 75-word cap.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, ChatRequest, Decoding, Message};
use crate::corpus::{AnswerSentence, Case};
use crate::error::{Error, Result};
use crate::prompts;
use crate::text::{enforce_word_limit, split_sentences, word_count};

pub const ANSWER_WORD_LIMIT: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// One call with q, q_clin and the numbered note.
    #[default]
    ZeroShotFull,
    /// Draft from q and the note, then a grounded revision call.
    TwoStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub case_id: String,
    pub text: String,
    pub sentences: Vec<AnswerSentence>,
    pub word_count: usize,
}

impl GeneratedAnswer {
    /// Wraps an existing answer (e.g. a gold reference) so it can be aligned.
    pub fn from_sentences(case_id: &str, sentences: Vec<AnswerSentence>) -> Self {
        let text = sentences
            .iter()
            .map(|s| s.text.trim())
            .collect::<Vec<_>>()
            .join(" ");
        GeneratedAnswer {
            case_id: case_id.to_string(),
            word_count: word_count(&text),
            text,
            sentences,
        }
    }

    pub fn from_text(case_id: &str, text: &str) -> Self {
        GeneratedAnswer {
            case_id: case_id.to_string(),
            text: text.to_string(),
            sentences: split_sentences(text),
            word_count: word_count(text),
        }
    }

    pub fn answer_ids(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.id.as_str())
    }
}

fn citation_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\s*(\[\s*\d+(\s*[,;\-]\s*\d+)*\s*\]|\|\s*\d+(\s*,\s*\d+)*\s*\||\(\s*(sentences?|s)\s*\d+(\s*[,;\-]\s*\d+)*\s*\))")
            .expect("valid regex")
    })
}

/// Removes bracketed sentence-number citations and collapses whitespace.
pub fn strip_citations(text: &str) -> String {
    let stripped = citation_pattern().replace_all(text, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cleans raw model output into a capped, segmented answer.
pub fn finalize_answer(case_id: &str, raw: &str) -> Result<GeneratedAnswer> {
    let cleaned = strip_citations(raw.trim());
    let text = enforce_word_limit(&cleaned, ANSWER_WORD_LIMIT);
    if text.is_empty() {
        return Err(Error::Generation(format!(
            "empty answer for case {case_id}"
        )));
    }
    Ok(GeneratedAnswer::from_text(case_id, &text))
}

pub fn render_note(case: &Case) -> String {
    prompts::numbered(
        case.sentences
            .iter()
            .map(|s| (s.id.as_str(), s.text.as_str())),
    )
}

/// User message: questions followed by the numbered note excerpt.
pub fn render_user(case: &Case, q_clin: Option<&str>) -> String {
    let mut out = format!("Patient question:\n{}\n\n", case.patient_question.trim());
    if let Some(q_clin) = q_clin {
        out.push_str(&format!("Clinician question:\n{}\n\n", q_clin.trim()));
    }
    out.push_str("Clinical note excerpt:\n");
    out.push_str(&render_note(case));
    out
}

pub struct AnswerGenerator<'a> {
    backend: &'a dyn Backend,
    mode: AnswerMode,
    decoding: Decoding,
}

impl<'a> AnswerGenerator<'a> {
    pub fn new(backend: &'a dyn Backend, mode: AnswerMode) -> Self {
        AnswerGenerator {
            backend,
            mode,
            decoding: Decoding::default(),
        }
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn render(&self, case: &Case, q_clin: &str) -> ChatRequest {
        let q_clin = match self.mode {
            AnswerMode::ZeroShotFull => Some(q_clin),
            AnswerMode::TwoStep => None,
        };
        ChatRequest::with_decoding(
            vec![
                Message::system(prompts::answer_generation().text),
                Message::user(render_user(case, q_clin)),
            ],
            self.decoding,
        )
    }

    pub fn render_revision(&self, case: &Case, draft: &str) -> ChatRequest {
        let user = format!(
            "{}\n{}",
            render_user(case, None),
            prompts::answer_revision().render(&[("draft", draft.trim())])
        );
        ChatRequest::with_decoding(
            vec![
                Message::system(prompts::answer_generation().text),
                Message::user(user),
            ],
            self.decoding,
        )
    }

    pub fn generate(&self, case: &Case, q_clin: &str) -> Result<GeneratedAnswer> {
        if case.sentences.is_empty() || case.patient_question.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "case {} needs a question and note sentences",
                case.case_id
            )));
        }
        let first = self.backend.chat(&self.render(case, q_clin))?;
        let raw = match self.mode {
            AnswerMode::ZeroShotFull => first,
            AnswerMode::TwoStep => {
                let draft = strip_citations(&first);
                if draft.is_empty() {
                    return Err(Error::Generation(format!(
                        "empty draft for case {}",
                        case.case_id
                    )));
                }
                self.backend.chat(&self.render_revision(case, &draft))?
            }
        };
        finalize_answer(&case.case_id, &raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::corpus::NoteSentence;

    fn case3() -> Case {
        Case {
            case_id: "c1".into(),
            patient_question: "Why was my mother kept in the hospital so long?".into(),
            clinician_question: Some("Why was the patient's stay prolonged?".into()),
            sentences: vec![
                NoteSentence::new("1", "She developed a fever on day two.", None),
                NoteSentence::new("2", "Blood cultures grew E. coli.", None),
                NoteSentence::new("3", "She completed 7 days of ceftriaxone.", None),
            ],
            reference_answer: None,
            evidence_links: None,
            specialty: None,
            provenance: None,
        }
    }

    fn words(n: usize) -> String {
        (0..n)
            .map(|i| format!("word{i}"))
            .collect::<Vec<_>>()
            .join(" ")
            + "."
    }

    #[test]
    fn under_limit_returned_intact() {
        let mock = MockBackend::new("m").with_fallback(words(40));
        let out = AnswerGenerator::new(&mock, AnswerMode::ZeroShotFull)
            .generate(&case3(), "q")
            .unwrap();
        assert_eq!(out.word_count, 40);
        assert_eq!(out.text, words(40));
    }

    #[test]
    fn over_limit_truncated() {
        let mock = MockBackend::new("m").with_fallback(words(90));
        let out = AnswerGenerator::new(&mock, AnswerMode::ZeroShotFull)
            .generate(&case3(), "q")
            .unwrap();
        assert_eq!(out.word_count, 75);
    }

    #[test]
    fn prompt_lists_numbered_note() {
        let mock = MockBackend::new("m");
        let case = case3();
        let req =
            AnswerGenerator::new(&mock, AnswerMode::ZeroShotFull).render(&case, "Why prolonged?");
        let user = req.last_user().unwrap();
        for s in &case.sentences {
            assert!(user.contains(&format!("{}: {}", s.id, s.text)));
        }
        assert!(user.contains("Why prolonged?"));
        assert!(user.contains(&case.patient_question));
        assert!(req.messages[0]
            .content
            .contains("Do not include citations or sentence numbers."));
    }

    #[test]
    fn two_step_omits_clinician_question_and_revises() {
        let mock = MockBackend::new("m")
            .with_rule("Draft answer:", "She had an infection. It was treated.")
            .with_fallback("draft text [1]");
        let gen = AnswerGenerator::new(&mock, AnswerMode::TwoStep);
        let req = gen.render(&case3(), "CLINQ");
        assert!(!req.full_text().contains("CLINQ"));
        let out = gen.generate(&case3(), "CLINQ").unwrap();
        assert_eq!(mock.chat_calls(), 2);
        assert_eq!(out.sentences.len(), 2);
    }

    #[test]
    fn citations_removed() {
        assert_eq!(
            strip_citations("She had a fever [1]. Cultures were positive [2, 3] |4| (sentence 5)."),
            "She had a fever. Cultures were positive."
        );
        let out = finalize_answer("c", "Treated with antibiotics [3].\n\nShe improved.").unwrap();
        assert_eq!(out.text, "Treated with antibiotics. She improved.");
        assert_eq!(out.sentences.len(), 2);
    }

    #[test]
    fn empty_output_is_generation_error() {
        assert!(matches!(
            finalize_answer("c", " [1] "),
            Err(Error::Generation(_))
        ));
    }
}
