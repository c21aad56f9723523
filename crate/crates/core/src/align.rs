//! Evidence alignment: link each answer sentence to the note sentences that
//! support it.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::answer::GeneratedAnswer;
use crate::backends::{cosine, Backend, ChatRequest, Decoding, EmbedRole, Message};
use crate::corpus::{AlignmentMap, Case, EvidenceLink};
use crate::error::{Error, Result};
use crate::exec::map_bounded;
use crate::extract::first_json;
use crate::prompts::{self, numbered};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignStrategy {
    /// Link when answer/note embedding cosine exceeds `t`.
    Threshold { t: f64 },
    /// Zero-shot list-wise prompt; a second call reformats output that does
    /// not parse.
    ListwiseTwoStep,
    /// One YES/NO call per (answer sentence, note sentence) pair.
    PairwiseZeroShot,
    /// List-wise prompt with one worked example.
    ListwiseOneShot,
}

impl AlignStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            AlignStrategy::Threshold { t } if !t.is_finite() => Err(Error::Config(format!(
                "alignment threshold must be finite, got {t}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Cosine similarities, `rows[i][j]` for answer sentence i and note sentence j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub answer_ids: Vec<String>,
    pub sentence_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Links every pair whose similarity is strictly above `t`.
    pub fn threshold(&self, case_id: &str, t: f64) -> AlignmentMap {
        AlignmentMap {
            case_id: case_id.to_string(),
            links: self
                .answer_ids
                .iter()
                .zip(&self.rows)
                .map(|(a, row)| EvidenceLink {
                    answer_id: a.clone(),
                    evidence_ids: self
                        .sentence_ids
                        .iter()
                        .zip(row)
                        .filter(|(_, s)| **s > t)
                        .map(|(id, _)| id.clone())
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Answer sentences are embedded in the query role, note sentences in the
/// document role.
pub fn similarity_matrix(
    answer: &GeneratedAnswer,
    case: &Case,
    backend: &dyn Backend,
) -> Result<SimilarityMatrix> {
    let answer_texts: Vec<String> = answer.sentences.iter().map(|s| s.text.clone()).collect();
    let note_texts: Vec<String> = case.sentences.iter().map(|s| s.text.clone()).collect();
    let a = if answer_texts.is_empty() {
        Vec::new()
    } else {
        backend.embed(&answer_texts, EmbedRole::Query)?
    };
    let d = backend.embed(&note_texts, EmbedRole::Document)?;
    let rows = a
        .iter()
        .map(|u| d.iter().map(|v| cosine(u, v)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityMatrix {
        answer_ids: answer.answer_ids().map(str::to_string).collect(),
        sentence_ids: case.sentence_ids().map(str::to_string).collect(),
        rows,
    })
}

pub fn align_threshold(
    answer: &GeneratedAnswer,
    case: &Case,
    t: f64,
    backend: &dyn Backend,
) -> Result<AlignmentMap> {
    Ok(similarity_matrix(answer, case, backend)?.threshold(&case.case_id, t))
}

/// The list-wise user message: questions, numbered note, numbered answer.
pub fn render_listwise_input(
    case: &Case,
    answer: &GeneratedAnswer,
    q: &str,
    q_clin: &str,
) -> String {
    format!(
        "Case ID: {}\n\nPatient question:\n{}\n\nClinician question:\n{}\n\nClinical note sentences:\n{}\nAnswer sentences:\n{}",
        case.case_id,
        q.trim(),
        q_clin.trim(),
        numbered(case.sentences.iter().map(|s| (s.id.as_str(), s.text.as_str()))),
        numbered(answer.sentences.iter().map(|s| (s.id.as_str(), s.text.as_str()))),
    )
}

/// A worked example built from a labeled case: its input block followed by
/// its gold alignment in the output format.
pub fn render_exemplar(case: &Case) -> Result<String> {
    let gold = case.gold_alignment().ok_or_else(|| {
        Error::Config(format!(
            "exemplar case {} needs a reference answer and evidence links",
            case.case_id
        ))
    })?;
    let answer = GeneratedAnswer::from_sentences(
        &case.case_id,
        case.reference_answer.clone().unwrap_or_default(),
    );
    let q_clin = case
        .clinician_question
        .as_deref()
        .unwrap_or(&case.patient_question);
    let output = serde_json::to_string_pretty(&to_submission(std::slice::from_ref(&gold)))
        .expect("alignment serializes");
    Ok(format!(
        "Input:\n{}\nOutput:\n{}\n",
        render_listwise_input(case, &answer, &case.patient_question, q_clin),
        output
    ))
}

fn without_example(text: &str) -> String {
    match text.rfind("Example:") {
        Some(i) => text[..i].trim_end().to_string() + "\n",
        None => text.to_string(),
    }
}

fn coerce_id(v: &Value, what: &str) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Number(n) if n.is_u64() || n.is_i64() => Ok(n.to_string()),
        other => Err(Error::AlignmentParse {
            reason: format!("{what} must be a string or integer, got {other}"),
            raw: String::new(),
        }),
    }
}

fn coerce_ids(v: &Value) -> Result<Vec<String>> {
    match v {
        Value::Array(items) => items.iter().map(|x| coerce_id(x, "evidence id")).collect(),
        Value::Null => Ok(Vec::new()),
        single => Ok(vec![coerce_id(single, "evidence id")?]),
    }
}

/// Pulls the (answer_id, evidence ids) rows out of the accepted shapes.
fn prediction_rows(value: &Value, case_id: &str) -> Result<Vec<(String, Vec<String>)>> {
    let bad = |reason: &str| Error::AlignmentParse {
        reason: reason.to_string(),
        raw: String::new(),
    };
    let rows_of = |list: &[Value]| -> Result<Vec<(String, Vec<String>)>> {
        list.iter()
            .map(|row| {
                let answer_id = row
                    .get("answer_id")
                    .ok_or_else(|| bad("prediction row without answer_id"))
                    .and_then(|v| coerce_id(v, "answer id"))?;
                let ids = row
                    .get("evidence_id")
                    .or_else(|| row.get("evidence_ids"))
                    .map(coerce_ids)
                    .transpose()?
                    .unwrap_or_default();
                Ok((answer_id, ids))
            })
            .collect()
    };
    let is_case_entry = |v: &Value| v.get("prediction").is_some();
    match value {
        Value::Array(items) if items.iter().any(is_case_entry) => {
            let entry = items
                .iter()
                .filter(|v| is_case_entry(v))
                .find(|v| {
                    v.get("case_id")
                        .and_then(|c| coerce_id(c, "case id").ok())
                        .is_some_and(|c| c == case_id)
                })
                .or_else(|| (items.len() == 1).then(|| &items[0]))
                .ok_or_else(|| bad(&format!("no prediction entry for case {case_id}")))?;
            prediction_rows(entry, case_id)
        }
        Value::Array(items) => rows_of(items),
        Value::Object(obj) => match obj.get("prediction") {
            Some(Value::Array(list)) => rows_of(list),
            Some(_) => Err(bad("`prediction` must be an array")),
            None if obj.values().all(|v| v.is_array()) => obj
                .iter()
                .map(|(k, v)| Ok((k.trim().to_string(), coerce_ids(v)?)))
                .collect(),
            None => Err(bad("object has no `prediction` array")),
        },
        _ => Err(bad("expected a JSON array or object")),
    }
}

/// Parses model output into an alignment map for `case` and the answer
/// sentence ids `answer_ids`.
///
/// Accepts the documented output shape, a bare list of prediction rows, or
/// an object mapping answer ids to id lists; code fences and surrounding
/// prose are ignored. Ids may be strings or integers. Answer ids missing
/// from the output get an empty evidence list. Unknown answer or evidence
/// ids are a validation error.
pub fn parse_alignment_json<'a>(
    text: &str,
    case: &Case,
    answer_ids: impl IntoIterator<Item = &'a str>,
) -> Result<AlignmentMap> {
    let with_raw = |e: Error| match e {
        Error::AlignmentParse { reason, .. } => Error::AlignmentParse {
            reason,
            raw: text.to_string(),
        },
        other => other,
    };
    let value = first_json(text).ok_or_else(|| Error::AlignmentParse {
        reason: "no JSON array or object found".into(),
        raw: text.to_string(),
    })?;
    let rows = prediction_rows(&value, &case.case_id).map_err(with_raw)?;
    let answer_ids: Vec<&str> = answer_ids.into_iter().collect();
    let mut cited: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (answer_id, ids) in rows {
        if !answer_ids.contains(&answer_id.as_str()) {
            return Err(Error::Validation(format!(
                "case {}: unknown answer id \"{answer_id}\"",
                case.case_id
            )));
        }
        if let Some(bad) = ids.iter().find(|id| case.sentence(id).is_none()) {
            return Err(Error::Validation(format!(
                "case {}: evidence id \"{bad}\" is not a note sentence of this case",
                case.case_id
            )));
        }
        cited.entry(answer_id).or_default().extend(ids);
    }
    let mut map = AlignmentMap::empty(&case.case_id, answer_ids.iter().copied());
    for link in &mut map.links {
        if let Some(ids) = cited.remove(&link.answer_id) {
            link.evidence_ids = ids;
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub answer_id: String,
    pub evidence_id: Vec<String>,
}

/// One case in the alignment submission file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionEntry {
    pub case_id: String,
    pub prediction: Vec<PredictionRow>,
}

pub fn to_submission(maps: &[AlignmentMap]) -> Vec<SubmissionEntry> {
    maps.iter()
        .map(|m| SubmissionEntry {
            case_id: m.case_id.clone(),
            prediction: m
                .links
                .iter()
                .map(|l| PredictionRow {
                    answer_id: l.answer_id.clone(),
                    evidence_id: l.evidence_ids.iter().cloned().collect(),
                })
                .collect(),
        })
        .collect()
}

pub fn from_submission(entries: Vec<SubmissionEntry>) -> Vec<AlignmentMap> {
    entries
        .into_iter()
        .map(|e| AlignmentMap {
            case_id: e.case_id,
            links: e
                .prediction
                .into_iter()
                .map(|r| EvidenceLink {
                    answer_id: r.answer_id,
                    evidence_ids: r.evidence_id.into_iter().collect(),
                })
                .collect(),
        })
        .collect()
}

/// Leading YES/NO token, case-insensitive.
pub fn parse_verdict(text: &str) -> Option<bool> {
    let token: String = text
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect();
    match token.to_ascii_uppercase().as_str() {
        "YES" => Some(true),
        "NO" => Some(false),
        _ => None,
    }
}

pub fn render_pairwise(
    answer_sentence: &str,
    note_sentence: &str,
    decoding: Decoding,
) -> ChatRequest {
    ChatRequest::with_decoding(
        vec![
            Message::system(prompts::pairwise_alignment().text),
            Message::user(format!(
                "Answer sentence:\n{}\n\nNote sentence:\n{}\n",
                answer_sentence.trim(),
                note_sentence.trim()
            )),
        ],
        decoding,
    )
}

pub struct Aligner<'a> {
    strategy: AlignStrategy,
    backend: &'a dyn Backend,
    exemplar: Option<String>,
    decoding: Decoding,
    fanout: usize,
}

impl<'a> Aligner<'a> {
    pub fn new(strategy: AlignStrategy, backend: &'a dyn Backend) -> Result<Self> {
        strategy.validate()?;
        Ok(Aligner {
            strategy,
            backend,
            exemplar: None,
            decoding: Decoding::default(),
            fanout: 1,
        })
    }

    /// Worked example for the one-shot prompt, usually the first
    /// development case.
    pub fn with_exemplar(mut self, exemplar_case: &Case) -> Result<Self> {
        self.exemplar = Some(render_exemplar(exemplar_case)?);
        Ok(self)
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn with_fanout(mut self, fanout: usize) -> Self {
        self.fanout = fanout.max(1);
        self
    }

    pub fn strategy(&self) -> AlignStrategy {
        self.strategy
    }

    pub fn render_listwise(
        &self,
        case: &Case,
        answer: &GeneratedAnswer,
        q: &str,
        q_clin: &str,
    ) -> Result<ChatRequest> {
        let template = prompts::evidence_alignment();
        let system = match self.strategy {
            AlignStrategy::ListwiseOneShot => {
                let exemplar = self.exemplar.as_deref().ok_or_else(|| {
                    Error::Config("one-shot alignment needs an exemplar case".into())
                })?;
                template.with_examples(exemplar)
            }
            _ => without_example(&template.text),
        };
        Ok(ChatRequest::with_decoding(
            vec![
                Message::system(system),
                Message::user(render_listwise_input(case, answer, q, q_clin)),
            ],
            self.decoding,
        ))
    }

    pub fn render_reformat(&self, case: &Case, answer: &GeneratedAnswer, raw: &str) -> ChatRequest {
        let answer_ids: Vec<&str> = answer.answer_ids().collect();
        let note_ids: Vec<&str> = case.sentence_ids().collect();
        let text = prompts::alignment_reformat().render(&[
            ("case_id", &case.case_id),
            ("answer_ids", &answer_ids.join(", ")),
            ("note_ids", &note_ids.join(", ")),
            ("raw", raw.trim()),
        ]);
        ChatRequest::with_decoding(vec![Message::user(text)], self.decoding)
    }

    fn listwise(
        &self,
        case: &Case,
        answer: &GeneratedAnswer,
        q: &str,
        q_clin: &str,
    ) -> Result<AlignmentMap> {
        let raw = self
            .backend
            .chat(&self.render_listwise(case, answer, q, q_clin)?)?;
        match parse_alignment_json(&raw, case, answer.answer_ids()) {
            Err(Error::AlignmentParse { .. })
                if self.strategy == AlignStrategy::ListwiseTwoStep =>
            {
                let reformatted = self
                    .backend
                    .chat(&self.render_reformat(case, answer, &raw))?;
                parse_alignment_json(&reformatted, case, answer.answer_ids())
            }
            other => other,
        }
    }

    fn pairwise(&self, case: &Case, answer: &GeneratedAnswer) -> Result<AlignmentMap> {
        let pairs: Vec<(usize, usize)> = (0..answer.sentences.len())
            .flat_map(|i| (0..case.sentences.len()).map(move |j| (i, j)))
            .collect();
        let verdicts = map_bounded(&pairs, self.fanout, |&(i, j)| {
            let req = render_pairwise(
                &answer.sentences[i].text,
                &case.sentences[j].text,
                self.decoding,
            );
            let reply = self.backend.chat(&req)?;
            Ok(parse_verdict(&reply).unwrap_or_else(|| {
                warn!(
                    "case {}: unparseable verdict for answer {} / note {}, treating as NO: {:?}",
                    case.case_id, answer.sentences[i].id, case.sentences[j].id, reply
                );
                false
            }))
        });
        let mut map = AlignmentMap::empty(&case.case_id, answer.answer_ids());
        for (&(i, j), verdict) in pairs.iter().zip(verdicts) {
            if verdict? {
                map.links[i]
                    .evidence_ids
                    .insert(case.sentences[j].id.clone());
            }
        }
        Ok(map)
    }

    /// Aligns `answer` to the note of `case`. The questions are used by the
    /// list-wise prompts only.
    pub fn align(
        &self,
        case: &Case,
        answer: &GeneratedAnswer,
        q: &str,
        q_clin: &str,
    ) -> Result<AlignmentMap> {
        let map = match self.strategy {
            AlignStrategy::Threshold { t } => align_threshold(answer, case, t, self.backend),
            AlignStrategy::ListwiseTwoStep | AlignStrategy::ListwiseOneShot => {
                self.listwise(case, answer, q, q_clin)
            }
            AlignStrategy::PairwiseZeroShot => self.pairwise(case, answer),
        }
        .map_err(|e| e.in_case(&case.case_id))?;
        map.validate(case, answer.answer_ids())?;
        Ok(map)
    }
}
