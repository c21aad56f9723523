//! Evidence identification: score note sentences against the clinician
//! question, keep those scoring strictly above a threshold, and calibrate
//! that threshold by strict micro F1 on labeled cases.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::backends::{cosine, Backend, EmbedRole};
use crate::corpus::Case;
use crate::error::{Error, Result};
use crate::exec::map_bounded;
use crate::metrics::{micro_prf, MicroScores};

/// Number of points in the default threshold grid.
pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    /// Cosine between the question embedding (query role) and each
    /// sentence embedding (document role).
    EmbeddingCosine,
    /// Cross-encoder relevance score for each (question, sentence) pair.
    PairEncoder,
    /// Binary-head relevance probability from the classifier service.
    Classifier,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::EmbeddingCosine => "embedding-cosine",
            ScorerKind::PairEncoder => "pair-encoder",
            ScorerKind::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Copy)]
pub struct Scorer<'a> {
    pub kind: ScorerKind,
    pub backend: &'a dyn Backend,
}

impl<'a> Scorer<'a> {
    pub fn new(kind: ScorerKind, backend: &'a dyn Backend) -> Self {
        Scorer { kind, backend }
    }

    /// One score per sentence text, in order.
    pub fn score(&self, question: &str, sentences: &[String]) -> Result<Vec<f64>> {
        match self.kind {
            ScorerKind::EmbeddingCosine => {
                let q = self
                    .backend
                    .embed(&[question.to_string()], EmbedRole::Query)?;
                let q = q
                    .first()
                    .ok_or_else(|| Error::InvalidInput("no query embedding returned".into()))?;
                let docs = self.backend.embed(sentences, EmbedRole::Document)?;
                docs.iter().map(|d| cosine(q, d)).collect()
            }
            ScorerKind::PairEncoder | ScorerKind::Classifier => {
                let scores = self.backend.score_pairs(question, sentences)?;
                if scores.len() != sentences.len() {
                    return Err(Error::InvalidInput(format!(
                        "scorer returned {} scores for {} sentences",
                        scores.len(),
                        sentences.len()
                    )));
                }
                Ok(scores)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub sentence_id: String,
    pub score: f64,
    pub scorer_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub case_id: String,
    pub evidence_ids: BTreeSet<String>,
}

pub fn score_case(case: &Case, question: &str, scorer: &Scorer<'_>) -> Result<Vec<ScoredSentence>> {
    if question.trim().is_empty() {
        return Err(Error::InvalidInput(format!(
            "case {}: empty question",
            case.case_id
        )));
    }
    let texts: Vec<String> = case.sentences.iter().map(|s| s.text.clone()).collect();
    let scores = scorer
        .score(question, &texts)
        .map_err(|e| e.in_case(&case.case_id))?;
    case.sentences
        .iter()
        .zip(scores)
        .map(|(s, score)| {
            if !score.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "case {}: non-finite score for sentence {}",
                    case.case_id, s.id
                )));
            }
            Ok(ScoredSentence {
                sentence_id: s.id.clone(),
                score,
                scorer_id: scorer.kind.as_str().to_string(),
            })
        })
        .collect()
}

/// Sentences scoring strictly above `t`.
pub fn select_evidence(case_id: &str, scored: &[ScoredSentence], t: f64) -> EvidenceSet {
    EvidenceSet {
        case_id: case_id.to_string(),
        evidence_ids: scored
            .iter()
            .filter(|s| s.score > t)
            .map(|s| s.sentence_id.clone())
            .collect(),
    }
}

/// `points` evenly spaced thresholds from `min` to `max` inclusive. A
/// degenerate range yields the single threshold `min`.
pub fn linear_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !min.is_finite() || !max.is_finite() || min > max {
        return Err(Error::InvalidInput(format!(
            "bad grid range [{min}, {max}]"
        )));
    }
    if points == 0 {
        return Err(Error::InvalidInput("grid needs at least one point".into()));
    }
    if min == max || points == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| min + step * i as f64).collect();
    grid[points - 1] = max;
    grid.dedup();
    Ok(grid)
}

/// The default grid: 101 points spanning the pooled score range.
pub fn default_grid<'a>(scores: impl IntoIterator<Item = &'a ScoredSentence>) -> Result<Vec<f64>> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in scores {
        lo = lo.min(s.score);
        hi = hi.max(s.score);
    }
    if lo > hi {
        return Err(Error::InvalidInput("no scores to build a grid from".into()));
    }
    linear_grid(lo, hi, DEFAULT_GRID_POINTS)
}

/// Gold evidence and predicted scores for one labeled case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub case_id: String,
    pub gold: BTreeSet<String>,
    pub scored: Vec<ScoredSentence>,
}

impl LabeledScores {
    pub fn from_case(case: &Case, scored: Vec<ScoredSentence>) -> Result<Self> {
        if !case.is_labeled() {
            return Err(Error::InvalidInput(format!(
                "case {} has unlabeled sentences; calibration needs relevance labels",
                case.case_id
            )));
        }
        Ok(LabeledScores {
            case_id: case.case_id.clone(),
            gold: case.essential_ids().map(str::to_string).collect(),
            scored,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub scores: MicroScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub points: Vec<CurvePoint>,
    pub best_t: f64,
    pub best: MicroScores,
    /// Every sentence predicted relevant.
    pub baseline: MicroScores,
}

impl ThresholdCurve {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn baseline_f1(&self) -> f64 {
        self.baseline.f1
    }

    /// `t,precision,recall,f1` rows, one per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,precision,recall,f1\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.t, p.scores.precision, p.scores.recall, p.scores.f1
            );
        }
        out
    }
}

fn pooled_scores(cases: &[LabeledScores], t: f64) -> MicroScores {
    let mut predicted = HashSet::new();
    let mut gold = HashSet::new();
    for c in cases {
        for s in c.scored.iter().filter(|s| s.score > t) {
            predicted.insert((c.case_id.as_str(), s.sentence_id.as_str()));
        }
        for g in &c.gold {
            gold.insert((c.case_id.as_str(), g.as_str()));
        }
    }
    micro_prf(&predicted, &gold)
}

/// Sweeps `grid` over already-scored labeled cases. The best threshold
/// maximizes strict micro F1; ties go to the smallest threshold.
pub fn calibrate_from_scores(cases: &[LabeledScores], grid: &[f64]) -> Result<ThresholdCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("threshold grid is empty".into()));
    }
    if grid.iter().any(|t| t.is_nan()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    let points: Vec<CurvePoint> = grid
        .iter()
        .map(|&t| CurvePoint {
            t,
            scores: pooled_scores(cases, t),
        })
        .collect();
    let mut best = points[0];
    for p in &points[1..] {
        if p.scores.f1 > best.scores.f1 {
            best = *p;
        }
    }
    Ok(ThresholdCurve {
        best_t: best.t,
        best: best.scores,
        baseline: pooled_scores(cases, f64::NEG_INFINITY),
        points,
    })
}

/// Which question text each case is scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum QuestionSource {
    /// The case's own clinician question.
    Clinician,
    /// The case's patient question.
    Patient,
    /// Questions by case id, e.g. from a question-interpretation run.
    Given(BTreeMap<String, String>),
}

impl QuestionSource {
    pub fn question_for<'a>(&'a self, case: &'a Case) -> Result<&'a str> {
        match self {
            QuestionSource::Clinician => case.clinician_question.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!("case {} has no clinician question", case.case_id))
            }),
            QuestionSource::Patient => Ok(case.patient_question.as_str()),
            QuestionSource::Given(map) => {
                map.get(&case.case_id).map(String::as_str).ok_or_else(|| {
                    Error::InvalidInput(format!("no question supplied for case {}", case.case_id))
                })
            }
        }
    }
}

/// Scores every case, up to `fanout` cases at a time. Output follows input order.
pub fn score_cases(
    cases: &[Case],
    questions: &QuestionSource,
    scorer: &Scorer<'_>,
    fanout: usize,
) -> Result<Vec<Vec<ScoredSentence>>> {
    map_bounded(cases, fanout, |case| {
        let q = questions.question_for(case)?;
        score_case(case, q, scorer)
    })
    .into_iter()
    .collect()
}

/// Scores labeled cases and sweeps `grid`, or the default grid over the
/// pooled score range when `grid` is `None`.
pub fn calibrate_threshold(
    cases: &[Case],
    questions: &QuestionSource,
    scorer: &Scorer<'_>,
    grid: Option<&[f64]>,
    fanout: usize,
) -> Result<ThresholdCurve> {
    if let Some(bad) = cases.iter().find(|c| !c.is_labeled()) {
        return Err(Error::InvalidInput(format!(
            "case {} has unlabeled sentences; calibration needs relevance labels",
            bad.case_id
        )));
    }
    let scored = score_cases(cases, questions, scorer, fanout)?;
    let labeled = cases
        .iter()
        .zip(scored)
        .map(|(c, s)| LabeledScores::from_case(c, s))
        .collect::<Result<Vec<_>>>()?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(labeled.iter().flat_map(|c| &c.scored))?,
    };
    calibrate_from_scores(&labeled, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;
    use crate::corpus::{NoteSentence, Relevance};

    fn scored(pairs: &[(&str, f64)]) -> Vec<ScoredSentence> {
        pairs
            .iter()
            .map(|(id, s)| ScoredSentence {
                sentence_id: id.to_string(),
                score: *s,
                scorer_id: "test".into(),
            })
            .collect()
    }

    fn case(texts: &[(&str, Relevance)]) -> Case {
        Case {
            case_id: "c".into(),
            patient_question: "q".into(),
            clinician_question: Some("chest pain".into()),
            sentences: texts
                .iter()
                .enumerate()
                .map(|(i, (t, r))| NoteSentence::new((i + 1).to_string(), *t, Some(*r)))
                .collect(),
            reference_answer: None,
            evidence_links: None,
            specialty: None,
            provenance: None,
        }
    }

    #[test]
    fn strict_selection() {
        let s = scored(&[("a", 0.9), ("b", 0.1), ("c", 0.5)]);
        let ids = |t| {
            select_evidence("c", &s, t)
                .evidence_ids
                .into_iter()
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(0.5), ["a"]);
        assert_eq!(ids(f64::NEG_INFINITY), ["a", "b", "c"]);
        assert_eq!(ids(0.0), ["a", "b", "c"]);
    }

    #[test]
    fn pair_scorer_on_mock() {
        let mock = MockBackend::new("m");
        let c = case(&[
            ("chest pain noted", Relevance::Essential),
            ("no issues", Relevance::NotRelevant),
        ]);
        let out = score_case(
            &c,
            "chest pain",
            &Scorer::new(ScorerKind::PairEncoder, &mock),
        )
        .unwrap();
        assert_eq!(out.iter().map(|s| s.score).collect::<Vec<_>>(), [1.0, 0.0]);
        assert_eq!(out[0].scorer_id, "pair-encoder");
    }

    #[test]
    fn self_similarity_wins_under_embeddings() {
        let mock = MockBackend::new("m");
        let c = case(&[
            ("The patient denied fever.", Relevance::NotRelevant),
            ("Chest pain started after exercise.", Relevance::Essential),
            ("She was discharged home.", Relevance::NotRelevant),
        ]);
        let out = score_case(
            &c,
            "Chest pain started after exercise.",
            &Scorer::new(ScorerKind::EmbeddingCosine, &mock),
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        let best = out
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .unwrap();
        assert_eq!(best.sentence_id, "2");
        assert!((best.score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_case_hand_f1() {
        let cases = vec![LabeledScores {
            case_id: "c".into(),
            gold: ["s1".to_string()].into(),
            scored: scored(&[("s1", 0.9), ("s2", 0.1)]),
        }];
        let curve = calibrate_from_scores(&cases, &[0.5]).unwrap();
        assert_eq!(curve.best_t, 0.5);
        assert_eq!(curve.best.f1, 1.0);
        assert!((curve.baseline.precision - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_smallest_threshold() {
        let cases = vec![LabeledScores {
            case_id: "c".into(),
            gold: ["s1".to_string()].into(),
            scored: scored(&[("s1", 0.9), ("s2", 0.1)]),
        }];
        let curve = calibrate_from_scores(&cases, &[0.2, 0.4, 0.6]).unwrap();
        assert_eq!(curve.best_t, 0.2);
    }

    #[test]
    fn grid_validation_and_defaults() {
        assert!(calibrate_from_scores(&[], &[]).is_err());
        assert!(calibrate_from_scores(&[], &[0.5, 0.5]).is_err());
        let g = linear_grid(0.0, 1.0, 101).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!((g[0], g[100]), (0.0, 1.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(linear_grid(0.3, 0.3, 101).unwrap(), [0.3]);
    }

    #[test]
    fn unlabeled_case_rejected() {
        let mock = MockBackend::new("m");
        let mut c = case(&[("chest pain", Relevance::Essential)]);
        c.sentences[0].relevance = None;
        let err = calibrate_threshold(
            &[c],
            &QuestionSource::Clinician,
            &Scorer::new(ScorerKind::PairEncoder, &mock),
            None,
            1,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let cases = vec![LabeledScores {
            case_id: "c".into(),
            gold: ["s1".to_string()].into(),
            scored: scored(&[("s1", 0.9), ("s2", 0.1)]),
        }];
        let csv = calibrate_from_scores(&cases, &[0.0, 0.5]).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,precision,recall,f1");
        assert_eq!(lines[2], "0.5,1,1,1");
    }
}
