//! Synthetic labeled cases: generation from seed cases, a structural quality
//! gate, and targeted repair of cases that fail it.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backends::{Backend, ChatRequest, Decoding, Message};
use crate::corpus::{Case, NoteSentence, Provenance, Relevance};
use crate::error::{Error, Result};
use crate::extract::first_json;
use crate::prompts;

/// Tolerance for ratio comparisons at the bounds.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityGate {
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_sentence_chars: usize,
    pub max_sentence_chars: usize,
    pub essential_ratio_min: f64,
    pub essential_ratio_max: f64,
    pub supplementary_ratio_max: f64,
    pub not_relevant_ratio_min: f64,
}

impl Default for QualityGate {
    fn default() -> Self {
        QualityGate {
            min_sentences: 10,
            max_sentences: 20,
            min_sentence_chars: 10,
            max_sentence_chars: 500,
            essential_ratio_min: 0.10,
            essential_ratio_max: 0.40,
            supplementary_ratio_max: 0.15,
            not_relevant_ratio_min: 0.45,
        }
    }
}

impl QualityGate {
    pub fn check(&self) -> Result<()> {
        let ratios = [
            self.essential_ratio_min,
            self.essential_ratio_max,
            self.supplementary_ratio_max,
            self.not_relevant_ratio_min,
        ];
        if self.min_sentences > self.max_sentences
            || self.min_sentence_chars > self.max_sentence_chars
            || self.essential_ratio_min > self.essential_ratio_max
            || ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::Config(format!(
                "inconsistent quality gate: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    SentenceCount,
    SentenceLength,
    EssentialRatio,
    SupplementaryRatio,
    NotRelevantRatio,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::SentenceCount => "sentence_count",
            Rule::SentenceLength => "sentence_length",
            Rule::EssentialRatio => "essential_ratio",
            Rule::SupplementaryRatio => "supplementary_ratio",
            Rule::NotRelevantRatio => "not_relevant_ratio",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Set for per-sentence rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_id: Option<String>,
    pub observed: f64,
    pub bound_kind: BoundKind,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.bound_kind {
            BoundKind::Min => "min",
            BoundKind::Max => "max",
        };
        match &self.sentence_id {
            Some(id) => write!(
                f,
                "{} of sentence {id} = {} ({kind} {})",
                self.rule.as_str(),
                self.observed,
                self.bound
            ),
            None => write!(
                f,
                "{} = {:.4} ({kind} {})",
                self.rule.as_str(),
                self.observed,
                self.bound
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub case_id: String,
    pub violations: Vec<Violation>,
}

impl QualityReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks sentence count, per-sentence character length, and the three
/// label-ratio windows. All bounds are inclusive.
pub fn validate_case(case: &Case, gate: &QualityGate) -> Result<QualityReport> {
    if let Some(s) = case.sentences.iter().find(|s| s.relevance.is_none()) {
        return Err(Error::InvalidInput(format!(
            "case {}: sentence {} has no relevance label",
            case.case_id, s.id
        )));
    }
    let mut violations = Vec::new();
    let n = case.sentences.len();
    let mut push = |rule, sentence_id, observed: f64, bound_kind, bound: f64| {
        violations.push(Violation {
            rule,
            sentence_id,
            observed,
            bound_kind,
            bound,
        })
    };
    if n < gate.min_sentences {
        push(
            Rule::SentenceCount,
            None,
            n as f64,
            BoundKind::Min,
            gate.min_sentences as f64,
        );
    }
    if n > gate.max_sentences {
        push(
            Rule::SentenceCount,
            None,
            n as f64,
            BoundKind::Max,
            gate.max_sentences as f64,
        );
    }
    for s in &case.sentences {
        let chars = s.text.chars().count();
        if chars < gate.min_sentence_chars {
            push(
                Rule::SentenceLength,
                Some(s.id.clone()),
                chars as f64,
                BoundKind::Min,
                gate.min_sentence_chars as f64,
            );
        }
        if chars > gate.max_sentence_chars {
            push(
                Rule::SentenceLength,
                Some(s.id.clone()),
                chars as f64,
                BoundKind::Max,
                gate.max_sentence_chars as f64,
            );
        }
    }
    let ratio = |label| {
        if n == 0 {
            0.0
        } else {
            case.sentences
                .iter()
                .filter(|s| s.relevance == Some(label))
                .count() as f64
                / n as f64
        }
    };
    let (ess, sup, nr) = (
        ratio(Relevance::Essential),
        ratio(Relevance::Supplementary),
        ratio(Relevance::NotRelevant),
    );
    if ess < gate.essential_ratio_min - EPS {
        push(
            Rule::EssentialRatio,
            None,
            ess,
            BoundKind::Min,
            gate.essential_ratio_min,
        );
    }
    if ess > gate.essential_ratio_max + EPS {
        push(
            Rule::EssentialRatio,
            None,
            ess,
            BoundKind::Max,
            gate.essential_ratio_max,
        );
    }
    if sup > gate.supplementary_ratio_max + EPS {
        push(
            Rule::SupplementaryRatio,
            None,
            sup,
            BoundKind::Max,
            gate.supplementary_ratio_max,
        );
    }
    if nr < gate.not_relevant_ratio_min - EPS {
        push(
            Rule::NotRelevantRatio,
            None,
            nr,
            BoundKind::Min,
            gate.not_relevant_ratio_min,
        );
    }
    Ok(QualityReport {
        case_id: case.case_id.clone(),
        violations,
    })
}

/// A labeled case in the generation prompt's JSON output format.
pub fn to_synthetic_json(case: &Case) -> Value {
    json!({
        "patient_question": case.patient_question,
        "clinician_question": case.clinician_question.clone().unwrap_or_default(),
        "sentences": case.sentences.iter().map(|s| json!({"id": s.id, "text": s.text})).collect::<Vec<_>>(),
        "relevance_labels": case.sentences.iter().map(|s| json!({
            "sentence_id": s.id,
            "relevance": s.relevance.map(Relevance::as_str),
        })).collect::<Vec<_>>(),
    })
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_relevance(v: &Value) -> Option<Relevance> {
    serde_json::from_value(v.clone()).ok()
}

/// Parses a generated case. Labels may come from the `relevance_labels`
/// list or a `relevance` key on each sentence; every sentence needs one.
pub fn parse_synthetic_json(text: &str, case_id: &str) -> Result<Case> {
    let loc = |field: &str| format!("synthetic case {case_id}: {field}");
    let value =
        first_json(text).ok_or_else(|| Error::parse(loc("output"), "no JSON object found"))?;
    let str_field = |key: &str| {
        value
            .get(key)
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
    };
    let patient_question = str_field("patient_question")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(loc("patient_question"), "missing or empty"))?;
    let clinician_question = str_field("clinician_question").filter(|s| !s.is_empty());
    let raw_sentences = value
        .get("sentences")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(loc("sentences"), "missing array"))?;
    let mut sentences = Vec::with_capacity(raw_sentences.len());
    for (i, s) in raw_sentences.iter().enumerate() {
        let id = s
            .get("id")
            .and_then(id_string)
            .ok_or_else(|| Error::parse(loc(&format!("sentences[{i}].id")), "missing"))?;
        let text = s
            .get("text")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| {
                Error::parse(loc(&format!("sentences[{i}].text")), "missing or empty")
            })?;
        let relevance = s.get("relevance").and_then(parse_relevance);
        sentences.push(NoteSentence::new(id, text, relevance));
    }
    if let Some(labels) = value.get("relevance_labels").and_then(Value::as_array) {
        for (i, l) in labels.iter().enumerate() {
            let id = l.get("sentence_id").and_then(id_string).ok_or_else(|| {
                Error::parse(
                    loc(&format!("relevance_labels[{i}].sentence_id")),
                    "missing",
                )
            })?;
            let rel = l
                .get("relevance")
                .and_then(parse_relevance)
                .ok_or_else(|| {
                    Error::parse(
                        loc(&format!("relevance_labels[{i}].relevance")),
                        "unknown label",
                    )
                })?;
            let target = sentences.iter_mut().find(|s| s.id == id).ok_or_else(|| {
                Error::parse(
                    loc(&format!("relevance_labels[{i}]")),
                    format!("unknown sentence id \"{id}\""),
                )
            })?;
            target.relevance = Some(rel);
        }
    }
    if let Some(s) = sentences.iter().find(|s| s.relevance.is_none()) {
        return Err(Error::parse(
            loc("relevance_labels"),
            format!("sentence \"{}\" has no label", s.id),
        ));
    }
    let case = Case {
        case_id: case_id.to_string(),
        patient_question,
        clinician_question,
        sentences,
        reference_answer: None,
        evidence_links: None,
        specialty: None,
        provenance: None,
    };
    case.validate()?;
    Ok(case)
}

/// Labeled example cases for the `{examples_block}` slot.
pub fn render_examples_block(examples: &[&Case]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "EXAMPLE {}:\n{}\n",
                i + 1,
                serde_json::to_string_pretty(&to_synthetic_json(c)).expect("json value")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Generation request for one variation. The variation index is the request
/// seed, so every variation has its own cache entry.
pub fn render_generation(examples: &[&Case], variation: u64, decoding: Decoding) -> ChatRequest {
    let text = prompts::synthetic_case()
        .render(&[("examples_block", render_examples_block(examples).trim_end())]);
    ChatRequest::with_decoding(vec![Message::user(text)], decoding).seed(variation)
}

pub fn render_repair(
    case: &Case,
    report: &QualityReport,
    gate: &QualityGate,
    decoding: Decoding,
) -> ChatRequest {
    let violations = report
        .violations
        .iter()
        .map(|v| format!("- {v}"))
        .collect::<Vec<_>>()
        .join("\n");
    let case_json = serde_json::to_string_pretty(&to_synthetic_json(case)).expect("json value");
    let num = |x: f64| format!("{x:.2}");
    let text = prompts::synthetic_repair().render(&[
        ("violations", &violations),
        ("min_sentences", &gate.min_sentences.to_string()),
        ("max_sentences", &gate.max_sentences.to_string()),
        ("min_chars", &gate.min_sentence_chars.to_string()),
        ("max_chars", &gate.max_sentence_chars.to_string()),
        ("ess_min", &num(gate.essential_ratio_min)),
        ("ess_max", &num(gate.essential_ratio_max)),
        ("sup_max", &num(gate.supplementary_ratio_max)),
        ("nr_min", &num(gate.not_relevant_ratio_min)),
        ("case_json", &case_json),
    ]);
    ChatRequest::with_decoding(vec![Message::user(text)], decoding)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub case: Case,
    pub report: QualityReport,
    pub attempts: u32,
}

impl RepairOutcome {
    pub fn accepted(&self) -> bool {
        self.report.passes()
    }
}

/// Asks the backend to fix the listed violations, re-validating after each
/// attempt, until the case passes or `max_repairs` attempts are spent. A
/// reply that does not parse counts as a failed attempt.
pub fn repair_case(
    case: Case,
    report: QualityReport,
    backend: &dyn Backend,
    gate: &QualityGate,
    max_repairs: u32,
    decoding: Decoding,
) -> Result<RepairOutcome> {
    let mut current = RepairOutcome {
        case,
        report,
        attempts: 0,
    };
    while !current.report.passes() && current.attempts < max_repairs {
        current.attempts += 1;
        let reply = backend.chat(&render_repair(
            &current.case,
            &current.report,
            gate,
            decoding,
        ))?;
        match parse_synthetic_json(&reply, &current.case.case_id) {
            Ok(mut fixed) => {
                fixed.provenance = current.case.provenance.clone();
                current.report = validate_case(&fixed, gate)?;
                current.case = fixed;
            }
            Err(e) => log::warn!("repair of {} unparseable: {e}", current.case.case_id),
        }
    }
    if let Some(p) = current.case.provenance.as_mut() {
        p.repair_attempts = current.attempts;
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub variations_per_seed: usize,
    pub max_repairs: u32,
    /// Real cases shown per generation prompt, starting with the seed.
    pub examples_per_prompt: usize,
    pub gate: QualityGate,
    pub decoding: Decoding,
    /// Request seed of the first variation; later ones count up from it.
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            variations_per_seed: 10,
            max_repairs: 3,
            examples_per_prompt: 1,
            gate: QualityGate::default(),
            decoding: Decoding::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFailure {
    pub variation: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBatch {
    pub seed_case_id: String,
    /// Cases that pass the gate.
    pub generated: Vec<Case>,
    /// Final report for every parsed variation, accepted or not.
    pub per_case_reports: Vec<QualityReport>,
    /// Repair attempts for every parsed variation, aligned with the reports.
    pub repair_attempts: Vec<u32>,
    /// Parsed variations still failing the gate after repairs.
    pub rejected: Vec<Case>,
    /// Variations that produced no usable case.
    pub failures: Vec<SynthFailure>,
}

impl SynthBatch {
    /// One JSON record per rejected case or failed variation.
    pub fn audit_records(&self) -> Vec<Value> {
        let mut out: Vec<Value> = self
            .rejected
            .iter()
            .map(|c| {
                let report = self.per_case_reports.iter().find(|r| r.case_id == c.case_id);
                json!({"seed_case_id": self.seed_case_id, "status": "rejected", "case": c, "report": report})
            })
            .collect();
        out.extend(self.failures.iter().map(|f| {
            json!({"seed_case_id": self.seed_case_id, "status": "failed", "variation": f.variation, "message": f.message})
        }));
        out
    }
}

/// Generates `config.variations_per_seed` variations of `seed`, repairing
/// those that fail the gate. `extra_examples` follow the seed in the
/// examples block, up to `config.examples_per_prompt` cases in total.
/// Per-variation failures are recorded in the batch; backend errors on a
/// variation are recorded too.
pub fn generate_synthetic(
    seed: &Case,
    extra_examples: &[&Case],
    backend: &dyn Backend,
    config: &SynthConfig,
) -> Result<SynthBatch> {
    config.gate.check()?;
    if !seed.is_labeled() {
        return Err(Error::InvalidInput(format!(
            "seed case {} is not labeled",
            seed.case_id
        )));
    }
    let mut examples = vec![seed];
    examples.extend(
        extra_examples
            .iter()
            .take(config.examples_per_prompt.saturating_sub(1)),
    );
    let mut batch = SynthBatch {
        seed_case_id: seed.case_id.clone(),
        generated: Vec::new(),
        per_case_reports: Vec::new(),
        repair_attempts: Vec::new(),
        rejected: Vec::new(),
        failures: Vec::new(),
    };
    for v in 0..config.variations_per_seed {
        let case_id = format!("{}-syn{}", seed.case_id, v + 1);
        let fail = |message: String| SynthFailure {
            variation: v + 1,
            message,
        };
        let raw = match backend.chat(&render_generation(
            &examples,
            config.seed.wrapping_add(v as u64),
            config.decoding,
        )) {
            Ok(raw) => raw,
            Err(e) => {
                batch.failures.push(fail(e.to_string()));
                continue;
            }
        };
        let mut case = match parse_synthetic_json(&raw, &case_id) {
            Ok(c) => c,
            Err(e) => {
                batch.failures.push(fail(e.to_string()));
                continue;
            }
        };
        case.provenance = Some(Provenance {
            seed_case_id: seed.case_id.clone(),
            repair_attempts: 0,
        });
        let report = validate_case(&case, &config.gate)?;
        let outcome = match repair_case(
            case,
            report,
            backend,
            &config.gate,
            config.max_repairs,
            config.decoding,
        ) {
            Ok(o) => o,
            Err(e) => {
                batch.failures.push(fail(e.to_string()));
                continue;
            }
        };
        batch.repair_attempts.push(outcome.attempts);
        batch.per_case_reports.push(outcome.report.clone());
        if outcome.accepted() {
            batch.generated.push(outcome.case);
        } else {
            batch.rejected.push(outcome.case);
        }
    }
    Ok(batch)
}

/// Sentence and label totals over accepted cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub seeds: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
    pub sentences: usize,
    pub essential: usize,
    pub supplementary: usize,
    pub not_relevant: usize,
}

pub fn summarize(batches: &[SynthBatch]) -> SynthSummary {
    let mut s = SynthSummary {
        seeds: batches.len(),
        ..Default::default()
    };
    for b in batches {
        s.accepted += b.generated.len();
        s.rejected += b.rejected.len();
        s.failed += b.failures.len();
        for c in &b.generated {
            s.sentences += c.sentences.len();
            for sent in &c.sentences {
                match sent.relevance {
                    Some(Relevance::Essential) => s.essential += 1,
                    Some(Relevance::Supplementary) => s.supplementary += 1,
                    _ => s.not_relevant += 1,
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;

    fn labeled(ess: usize, sup: usize, nr: usize) -> Case {
        let labels = std::iter::repeat_n(Relevance::Essential, ess)
            .chain(std::iter::repeat_n(Relevance::Supplementary, sup))
            .chain(std::iter::repeat_n(Relevance::NotRelevant, nr));
        Case {
            case_id: "s".into(),
            patient_question: "Why was I given insulin in the hospital?".into(),
            clinician_question: Some("Why was insulin started?".into()),
            sentences: labels
                .enumerate()
                .map(|(i, r)| {
                    NoteSentence::new(
                        (i + 1).to_string(),
                        format!("Clinical sentence number {}.", i + 1),
                        Some(r),
                    )
                })
                .collect(),
            reference_answer: None,
            evidence_links: None,
            specialty: None,
            provenance: None,
        }
    }

    fn rules(case: &Case) -> Vec<Rule> {
        validate_case(case, &QualityGate::default())
            .unwrap()
            .violations
            .iter()
            .map(|v| v.rule)
            .collect()
    }

    #[test]
    fn hand_checked_verdicts() {
        assert!(rules(&labeled(3, 2, 10)).is_empty());
        let nine = validate_case(&labeled(2, 1, 6), &QualityGate::default()).unwrap();
        assert_eq!(nine.violations[0].rule, Rule::SentenceCount);
        assert_eq!(
            (nine.violations[0].observed, nine.violations[0].bound),
            (9.0, 10.0)
        );
        let heavy = validate_case(&labeled(6, 0, 4), &QualityGate::default()).unwrap();
        let v = heavy
            .violations
            .iter()
            .find(|v| v.rule == Rule::EssentialRatio)
            .unwrap();
        assert_eq!(
            (v.observed, v.bound_kind, v.bound),
            (0.6, BoundKind::Max, 0.4)
        );
    }

    #[test]
    fn unlabeled_is_an_error() {
        let mut c = labeled(3, 2, 10);
        c.sentences[0].relevance = None;
        assert!(validate_case(&c, &QualityGate::default()).is_err());
    }

    #[test]
    fn synthetic_json_round_trip() {
        let c = labeled(3, 2, 10);
        let text = format!("Here:\n```json\n{}\n```", to_synthetic_json(&c));
        let parsed = parse_synthetic_json(&text, "s").unwrap();
        assert_eq!(parsed, c);
        assert!(parse_synthetic_json("I cannot do that.", "x").is_err());
    }

    #[test]
    fn repair_prompt_names_bounds() {
        let c = labeled(2, 1, 6);
        let report = validate_case(&c, &QualityGate::default()).unwrap();
        let req = render_repair(&c, &report, &QualityGate::default(), Decoding::default());
        let text = req.full_text();
        assert!(text.contains("sentence_count = 9.0000 (min 10)"));
        assert!(text.contains("Between 10 and 20 sentences"));
    }

    #[test]
    fn repair_stops_at_pass_or_budget() {
        let good = to_synthetic_json(&labeled(3, 2, 10)).to_string();
        let bad_case = labeled(2, 1, 6);
        let report = validate_case(&bad_case, &QualityGate::default()).unwrap();

        let fixer = MockBackend::new("m").with_fallback(good);
        let out = repair_case(
            bad_case.clone(),
            report.clone(),
            &fixer,
            &QualityGate::default(),
            3,
            Decoding::default(),
        )
        .unwrap();
        assert!(out.accepted());
        assert_eq!(out.attempts, 1);

        let stubborn =
            MockBackend::new("m").with_fallback(to_synthetic_json(&bad_case).to_string());
        let out = repair_case(
            bad_case,
            report,
            &stubborn,
            &QualityGate::default(),
            2,
            Decoding::default(),
        )
        .unwrap();
        assert!(!out.accepted());
        assert_eq!(out.attempts, 2);
        assert_eq!(stubborn.chat_calls(), 2);
    }

    #[test]
    fn batch_records_failures_and_caps_size() {
        let seed = labeled(3, 2, 10);
        let good = to_synthetic_json(&labeled(3, 2, 10)).to_string();
        let mock = MockBackend::new("m").with_responder(move |req| {
            Some(if req.seed == Some(1) {
                "prose, not json".to_string()
            } else {
                good.clone()
            })
        });
        let config = SynthConfig {
            variations_per_seed: 4,
            ..Default::default()
        };
        let batch = generate_synthetic(&seed, &[], &mock, &config).unwrap();
        assert_eq!(batch.generated.len(), 3);
        assert_eq!(batch.failures.len(), 1);
        assert_eq!(batch.failures[0].variation, 2);
        assert_eq!(batch.generated[0].case_id, "s-syn1");
        assert_eq!(
            batch.generated[0].provenance.as_ref().unwrap().seed_case_id,
            "s"
        );
        assert_eq!(batch.audit_records().len(), 1);
        assert_eq!(summarize(&[batch]).sentences, 45);
    }
}
