//! Question interpretation: rewriting a patient narrative into a short
//! clinician-style question.

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, ChatRequest, Decoding, Message};
use crate::corpus::Case;
use crate::error::{Error, Result};
use crate::prompts::{self, PromptTemplate};
use crate::text::{enforce_word_limit, word_count};

pub const CLIN_QUESTION_WORD_LIMIT: usize = 15;

/// Marker preceding the draft in the revision prompt.
pub const DRAFT_MARKER: &str = "Draft question:\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub patient_question: String,
    pub clinician_question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpretKind {
    FewShot,
    /// Few-shot prompt with the question block repeated.
    DoubleQuery,
    /// Few-shot draft, then a revision call on a second backend.
    TwoStep,
}

#[derive(Debug, Clone)]
pub struct InterpretStrategy {
    pub kind: InterpretKind,
    pub shots: Vec<Shot>,
    pub template: PromptTemplate,
}

impl InterpretStrategy {
    pub fn new(kind: InterpretKind, shots: Vec<Shot>, template: PromptTemplate) -> Result<Self> {
        if !matches!(shots.len(), 3 | 5) {
            return Err(Error::Config(format!(
                "few-shot prompts take 3 or 5 examples, got {}",
                shots.len()
            )));
        }
        Ok(InterpretStrategy {
            kind,
            shots,
            template,
        })
    }

    /// Uses the first `k` cases of the development corpus, in order, as
    /// examples, with the default template.
    pub fn from_dev(kind: InterpretKind, k: usize, dev: &[Case]) -> Result<Self> {
        if dev.len() < k {
            return Err(Error::Config(format!(
                "need {k} development cases for shots, corpus has {}",
                dev.len()
            )));
        }
        let shots = dev[..k]
            .iter()
            .map(|c| {
                let clinician_question = c.clinician_question.clone().ok_or_else(|| {
                    Error::Config(format!("shot case {} has no clinician question", c.case_id))
                })?;
                Ok(Shot {
                    patient_question: c.patient_question.trim().to_string(),
                    clinician_question,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        InterpretStrategy::new(kind, shots, prompts::question_interpretation())
    }

    pub fn k(&self) -> usize {
        self.shots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinQuestion {
    pub text: String,
    pub word_count: usize,
}

impl ClinQuestion {
    fn from_raw(raw: &str) -> Result<Self> {
        let text = enforce_word_limit(&clean_output(raw), CLIN_QUESTION_WORD_LIMIT);
        if text.is_empty() {
            return Err(Error::Generation("model returned no question".into()));
        }
        Ok(ClinQuestion {
            word_count: word_count(&text),
            text,
        })
    }
}

/// First non-empty line, without wrapping quotes or a leading label.
fn clean_output(raw: &str) -> String {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let line = line
        .strip_prefix("Clinician question:")
        .or_else(|| line.strip_prefix("Rewritten question:"))
        .unwrap_or(line)
        .trim();
    line.trim_matches(|c| matches!(c, '"' | '`' | '\u{201c}' | '\u{201d}'))
        .trim()
        .to_string()
}

fn question_block(q: &str) -> String {
    format!("Patient question:\n{}\n", q.trim())
}

pub struct Interpreter<'a> {
    strategy: InterpretStrategy,
    drafter: &'a dyn Backend,
    reviser: Option<&'a dyn Backend>,
    decoding: Decoding,
}

impl<'a> Interpreter<'a> {
    pub fn new(strategy: InterpretStrategy, drafter: &'a dyn Backend) -> Self {
        Interpreter {
            strategy,
            drafter,
            reviser: None,
            decoding: Decoding::default(),
        }
    }

    pub fn with_reviser(mut self, reviser: &'a dyn Backend) -> Self {
        self.reviser = Some(reviser);
        self
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn strategy(&self) -> &InterpretStrategy {
        &self.strategy
    }

    fn shots_block(&self) -> String {
        self.strategy
            .shots
            .iter()
            .map(|s| {
                format!(
                    "Patient question:\n{}\nClinician question:\n{}\n\n",
                    s.patient_question, s.clinician_question
                )
            })
            .collect()
    }

    /// The few-shot request for `q` (the drafting request for two-step).
    pub fn render(&self, q: &str) -> ChatRequest {
        let system = self.strategy.template.with_examples(&self.shots_block());
        let block = question_block(q);
        let user = match self.strategy.kind {
            InterpretKind::DoubleQuery => format!("{block}\n{block}"),
            InterpretKind::FewShot | InterpretKind::TwoStep => block,
        };
        ChatRequest::with_decoding(
            vec![Message::system(system), Message::user(user)],
            self.decoding,
        )
    }

    pub fn render_revision(&self, q: &str, draft: &str) -> ChatRequest {
        let user = format!("{}\n{DRAFT_MARKER}{}", question_block(q), draft.trim());
        ChatRequest::with_decoding(
            vec![
                Message::system(prompts::interpret_revision().text),
                Message::user(user),
            ],
            self.decoding,
        )
    }

    pub fn interpret(&self, q: &str) -> Result<ClinQuestion> {
        if q.trim().is_empty() {
            return Err(Error::InvalidInput("empty patient question".into()));
        }
        let draft = self.drafter.chat(&self.render(q))?;
        if self.strategy.kind != InterpretKind::TwoStep {
            return ClinQuestion::from_raw(&draft);
        }
        let reviser = self.reviser.ok_or_else(|| {
            Error::Config("two-step interpretation needs a reviser backend".into())
        })?;
        let draft = clean_output(&draft);
        if draft.is_empty() {
            return Err(Error::Generation("drafter returned no question".into()));
        }
        let revised = reviser.chat(&self.render_revision(q, &draft))?;
        ClinQuestion::from_raw(&revised)
    }
}
