//! Scoring prediction files against a labeled corpus.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pipeline::{AnswerRecord, QuestionRecord, Subtask};
use crate::align::SubmissionEntry;
use crate::corpus::Case;
use crate::error::{Error, Result};
use crate::evidence::EvidenceSet;
use crate::metrics::{corpus_bleu, micro_prf, rouge_lsum, sari, GenScores, ScoreReport};

/// Text that SARI treats as the input being rewritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SariSource {
    PatientQuestion,
    /// The note sentences joined by spaces.
    Note,
}

impl SariSource {
    fn text(self, case: &Case) -> String {
        match self {
            SariSource::PatientQuestion => case.patient_question.clone(),
            SariSource::Note => case.note_text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub interpret_sari_source: SariSource,
    pub answer_sari_source: SariSource,
    /// Externally computed model-based scores, in [0, 1].
    #[serde(skip)]
    pub external: BTreeMap<String, f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            interpret_sari_source: SariSource::PatientQuestion,
            answer_sari_source: SariSource::Note,
            external: BTreeMap::new(),
        }
    }
}

/// Deserializes each element of a top-level array, reporting the index of
/// the first bad one.
fn records<T: DeserializeOwned>(predictions: &Value, fix: impl Fn(&mut Value)) -> Result<Vec<T>> {
    let items = predictions
        .as_array()
        .ok_or_else(|| Error::parse("predictions", "expected a JSON array"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut item = item.clone();
            fix(&mut item);
            serde_json::from_value(item).map_err(|e| Error::parse(format!("predictions[{i}]"), e))
        })
        .collect()
}

fn stringify_ids(value: &mut Value, key: &str) {
    let ids = match value.get_mut(key).and_then(Value::as_array_mut) {
        Some(ids) => ids,
        None => return,
    };
    for id in ids {
        if let Value::Number(n) = id {
            *id = Value::String(n.to_string());
        }
    }
}

/// Indexes predictions by case id. Duplicates and unknown cases are errors;
/// gold cases without a prediction are reported in `notes`.
fn by_case<T>(
    items: Vec<T>,
    id: impl Fn(&T) -> &str,
    gold: &[Case],
    notes: &mut Vec<String>,
) -> Result<BTreeMap<String, T>> {
    let known: HashSet<&str> = gold.iter().map(|c| c.case_id.as_str()).collect();
    let mut out = BTreeMap::new();
    for (i, item) in items.into_iter().enumerate() {
        let case_id = id(&item).to_string();
        if !known.contains(case_id.as_str()) {
            return Err(Error::Validation(format!(
                "predictions[{i}]: case {case_id} is not in the gold corpus"
            )));
        }
        if out.insert(case_id.clone(), item).is_some() {
            return Err(Error::Validation(format!(
                "predictions[{i}]: second prediction for case {case_id}"
            )));
        }
    }
    let missing: Vec<&str> = gold
        .iter()
        .map(|c| c.case_id.as_str())
        .filter(|id| !out.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        notes.push(format!(
            "no prediction for {} case(s), scored as empty: {}",
            missing.len(),
            missing.join(", ")
        ));
    }
    Ok(out)
}

fn generation(
    gold: &[Case],
    predicted: &BTreeMap<String, String>,
    reference: impl Fn(&Case) -> Result<String>,
    source: SariSource,
    options: &EvalOptions,
) -> Result<GenScores> {
    let references = gold.iter().map(&reference).collect::<Result<Vec<_>>>()?;
    let candidates: Vec<&str> = gold
        .iter()
        .map(|c| predicted.get(&c.case_id).map(String::as_str).unwrap_or(""))
        .collect();
    let n = gold.len() as f64;
    let bleu = corpus_bleu(
        candidates
            .iter()
            .zip(&references)
            .map(|(c, r)| (*c, vec![r.as_str()])),
    );
    let rouge = candidates
        .iter()
        .zip(&references)
        .map(|(c, r)| rouge_lsum(c, r))
        .sum::<f64>()
        / n;
    let sari_mean = gold
        .iter()
        .zip(candidates.iter().zip(&references))
        .map(|(case, (c, r))| sari(&source.text(case), c, &[r.as_str()]))
        .sum::<f64>()
        / n;
    let mut scores = GenScores::new(bleu, rouge, sari_mean);
    for (name, value) in &options.external {
        scores.set_external(name, *value)?;
    }
    Ok(scores)
}

/// Scores `predictions` (the parsed contents of a submission file) for one
/// subtask against the labeled `gold` cases.
pub fn evaluate(
    predictions: &Value,
    gold: &[Case],
    subtask: Subtask,
    options: &EvalOptions,
) -> Result<ScoreReport> {
    if gold.is_empty() {
        return Err(Error::InvalidInput("gold corpus is empty".into()));
    }
    let mut notes = Vec::new();
    let mut report = match subtask {
        Subtask::Interpret => {
            let items: Vec<QuestionRecord> = records(predictions, |_| {})?;
            let predicted: BTreeMap<String, String> =
                by_case(items, |r| &r.case_id, gold, &mut notes)?
                    .into_iter()
                    .map(|(k, r)| (k, r.text))
                    .collect();
            let reference = |c: &Case| {
                c.clinician_question.clone().ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "gold case {} has no clinician question",
                        c.case_id
                    ))
                })
            };
            let scores = generation(
                gold,
                &predicted,
                reference,
                options.interpret_sari_source,
                options,
            )?;
            ScoreReport::from_generation(1, gold.len(), scores)
        }
        Subtask::Answer => {
            let items: Vec<AnswerRecord> = records(predictions, |_| {})?;
            let predicted: BTreeMap<String, String> =
                by_case(items, |r| &r.case_id, gold, &mut notes)?
                    .into_iter()
                    .map(|(k, r)| (k, r.text))
                    .collect();
            let reference = |c: &Case| {
                c.reference_answer_text().ok_or_else(|| {
                    Error::InvalidInput(format!("gold case {} has no reference answer", c.case_id))
                })
            };
            let scores = generation(
                gold,
                &predicted,
                reference,
                options.answer_sari_source,
                options,
            )?;
            ScoreReport::from_generation(3, gold.len(), scores)
        }
        Subtask::Evidence => {
            let items: Vec<EvidenceSet> =
                records(predictions, |v| stringify_ids(v, "evidence_ids"))?;
            let predicted = by_case(items, |r| &r.case_id, gold, &mut notes)?;
            let mut p = HashSet::new();
            let mut g = HashSet::new();
            for case in gold {
                if !case.is_labeled() {
                    return Err(Error::InvalidInput(format!(
                        "gold case {} has unlabeled sentences",
                        case.case_id
                    )));
                }
                g.extend(
                    case.essential_ids()
                        .map(|s| (case.case_id.clone(), s.to_string())),
                );
                for id in predicted
                    .get(&case.case_id)
                    .map(|s| &s.evidence_ids)
                    .into_iter()
                    .flatten()
                {
                    if case.sentence(id).is_none() {
                        return Err(Error::Validation(format!(
                            "case {}: evidence id \"{id}\" is not a note sentence",
                            case.case_id
                        )));
                    }
                    p.insert((case.case_id.clone(), id.clone()));
                }
            }
            ScoreReport::from_micro(2, gold.len(), micro_prf(&p, &g))
        }
        Subtask::Align => {
            let items: Vec<SubmissionEntry> = records(predictions, |v| {
                if let Some(rows) = v.get_mut("prediction").and_then(Value::as_array_mut) {
                    for row in rows {
                        stringify_ids(row, "evidence_id");
                        if let Some(Value::Number(n)) = row.get("answer_id").cloned() {
                            row["answer_id"] = Value::String(n.to_string());
                        }
                    }
                }
            })?;
            let predicted = by_case(items, |r| &r.case_id, gold, &mut notes)?;
            let mut p = HashSet::new();
            let mut g = HashSet::new();
            for case in gold {
                let gold_map = case.gold_alignment().ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "gold case {} has no reference answer and evidence links",
                        case.case_id
                    ))
                })?;
                g.extend(
                    gold_map
                        .pairs()
                        .map(|(a, s)| (case.case_id.clone(), a.to_string(), s.to_string())),
                );
                let rows = predicted
                    .get(&case.case_id)
                    .map(|e| e.prediction.as_slice())
                    .unwrap_or_default();
                let mut seen = BTreeSet::new();
                for row in rows {
                    if !seen.insert(row.answer_id.as_str()) {
                        return Err(Error::Validation(format!(
                            "case {}: answer id \"{}\" appears more than once",
                            case.case_id, row.answer_id
                        )));
                    }
                    for sid in &row.evidence_id {
                        if case.sentence(sid).is_none() {
                            return Err(Error::Validation(format!(
                                "case {}: evidence id \"{sid}\" is not a note sentence",
                                case.case_id
                            )));
                        }
                        p.insert((case.case_id.clone(), row.answer_id.clone(), sid.clone()));
                    }
                }
            }
            let mut report = ScoreReport::from_micro(4, gold.len(), micro_prf(&p, &g));
            report.notes.push(
                "units are pooled (case, answer sentence, note sentence) triples; an all-relevant prediction scores 100% recall here"
                    .into(),
            );
            report
        }
    };
    report.notes.extend(notes);
    Ok(report)
}

/// Reads a prediction file and scores it.
pub fn evaluate_file(
    path: &Path,
    gold: &[Case],
    subtask: Subtask,
    options: &EvalOptions,
) -> Result<ScoreReport> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value =
        serde_json::from_str(&raw).map_err(|e| Error::parse(path.display().to_string(), e))?;
    evaluate(&value, gold, subtask, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use serde_json::json;

    fn gold_as_predictions(cases: &[Case], subtask: Subtask) -> Value {
        match subtask {
            Subtask::Interpret => json!(cases
                .iter()
                .map(|c| json!({"case_id": c.case_id, "text": c.clinician_question}))
                .collect::<Vec<_>>()),
            Subtask::Evidence => json!(cases
                .iter()
                .map(|c| json!({"case_id": c.case_id, "evidence_ids": c.essential_ids().collect::<Vec<_>>()}))
                .collect::<Vec<_>>()),
            Subtask::Answer => json!(cases
                .iter()
                .map(|c| json!({"case_id": c.case_id, "text": c.reference_answer_text()}))
                .collect::<Vec<_>>()),
            Subtask::Align => json!(crate::align::to_submission(
                &cases.iter().map(|c| c.gold_alignment().unwrap()).collect::<Vec<_>>()
            )),
        }
    }

    #[test]
    fn gold_scores_perfectly() {
        let cases = fixtures::sample_cases();
        for subtask in [Subtask::Evidence, Subtask::Align] {
            let r = evaluate(
                &gold_as_predictions(&cases, subtask),
                &cases,
                subtask,
                &EvalOptions::default(),
            )
            .unwrap();
            assert_eq!(r.micro.unwrap().f1, 1.0);
        }
        for subtask in [Subtask::Interpret, Subtask::Answer] {
            let r = evaluate(
                &gold_as_predictions(&cases, subtask),
                &cases,
                subtask,
                &EvalOptions::default(),
            )
            .unwrap();
            let g = r.generation.unwrap();
            assert!((g.bleu - 1.0).abs() < 1e-9 && (g.rouge_lsum - 1.0).abs() < 1e-9);
            assert!(r.notes.is_empty());
        }
    }

    #[test]
    fn all_relevant_baseline_on_dev_shaped_fixture() {
        let cases = fixtures::dev_shaped();
        let all = json!(cases
            .iter()
            .map(|c| json!({"case_id": c.case_id, "evidence_ids": c.sentence_ids().collect::<Vec<_>>()}))
            .collect::<Vec<_>>());
        let m = evaluate(&all, &cases, Subtask::Evidence, &EvalOptions::default())
            .unwrap()
            .micro
            .unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (121, 307, 0));
    }

    #[test]
    fn external_slots_enter_the_mean() {
        let cases = fixtures::sample_cases();
        let mut opts = EvalOptions::default();
        opts.external.insert("alignscore".into(), 0.5);
        let r = evaluate(
            &gold_as_predictions(&cases, Subtask::Interpret),
            &cases,
            Subtask::Interpret,
            &opts,
        )
        .unwrap();
        let g = r.generation.unwrap();
        assert_eq!(g.external["alignscore"], Some(0.5));
        assert_eq!(g.external["medcon"], None);
        assert!((r.overall - g.overall()).abs() < 1e-12);
        opts.external.insert("rouge1".into(), 0.5);
        assert!(evaluate(
            &gold_as_predictions(&cases, Subtask::Interpret),
            &cases,
            Subtask::Interpret,
            &opts
        )
        .is_err());
    }

    #[test]
    fn schema_errors_carry_location() {
        let cases = fixtures::sample_cases();
        let bad = json!([{"case_id": "1", "evidence_ids": ["1"]}, {"case_id": "2"}]);
        match evaluate(&bad, &cases, Subtask::Evidence, &EvalOptions::default()) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "predictions[1]"),
            other => panic!("{other:?}"),
        }
        let unknown = json!([{"case_id": "nope", "text": "x"}]);
        assert!(matches!(
            evaluate(
                &unknown,
                &cases,
                Subtask::Interpret,
                &EvalOptions::default()
            ),
            Err(Error::Validation(_))
        ));
        let bad_sid = json!([{"case_id": "1", "evidence_ids": ["999"]}]);
        assert!(matches!(
            evaluate(&bad_sid, &cases, Subtask::Evidence, &EvalOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn missing_and_integer_ids() {
        let cases = fixtures::sample_cases();
        let first = &cases[0];
        let ids: Vec<u64> = first.essential_ids().map(|s| s.parse().unwrap()).collect();
        let preds = json!([{"case_id": first.case_id, "evidence_ids": ids}]);
        let r = evaluate(&preds, &cases, Subtask::Evidence, &EvalOptions::default()).unwrap();
        let m = r.micro.unwrap();
        assert_eq!(m.precision, 1.0);
        assert!(m.recall < 1.0);
        assert!(r
            .notes
            .iter()
            .any(|n| n.contains("no prediction for 4 case(s)")));
    }
}
