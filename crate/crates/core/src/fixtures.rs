//! Built-in corpora for tests, examples, and offline runs.
//!
//! * [`sample_cases`]: five hand-written, fully labeled cases.
//! * [`dev_shaped`]: twenty synthetic cases whose counts and word lengths
//!   reproduce the development split's descriptive statistics exactly
//!   (428 note sentences, 121 essential, 95 answer sentences, and so on).

use std::collections::BTreeSet;

use crate::corpus::{
    parse_corpus_str, AnswerSentence, Case, EvidenceLink, NoteSentence, Relevance,
};

const SAMPLE_JSON: &str = include_str!("../data/sample_cases.json");

pub fn sample_cases() -> Vec<Case> {
    parse_corpus_str(SAMPLE_JSON).expect("bundled sample corpus is valid")
}

pub fn sample_cases_json() -> &'static str {
    SAMPLE_JSON
}

const FILLER: &[&str] = &[
    "patient",
    "noted",
    "with",
    "stable",
    "vitals",
    "and",
    "labs",
    "reviewed",
    "by",
    "the",
    "team",
    "during",
    "morning",
    "rounds",
    "today",
    "after",
    "admission",
    "for",
    "further",
    "care",
    "plan",
];

/// `prefix` followed by filler words up to exactly `words` tokens, ending in `end`.
fn sentence(prefix: &[String], words: usize, end: char) -> String {
    let mut tokens: Vec<String> = prefix.iter().take(words).cloned().collect();
    let mut k = 0;
    while tokens.len() < words {
        tokens.push(FILLER[k % FILLER.len()].to_string());
        k += 1;
    }
    let mut text = tokens.join(" ");
    text.push(end);
    text
}

const ESSENTIAL_POSITIONS: [usize; 6] = [1, 4, 7, 10, 13, 16];
const SUPPLEMENTARY_POSITIONS: [usize; 2] = [2, 8];

/// Twenty labeled cases shaped like the development split:
///
/// | quantity | value |
/// |---|---|
/// | note sentences | 8 cases x 22 + 12 x 21 = 428 |
/// | essential sentences | 19 x 6 + 7 = 121 |
/// | note words | 426 x 15 + 2 x 14 = 6418 |
/// | patient question words | 4 x 17 + 16 x 16 = 324 |
/// | clinician question words | 15 x 11 + 5 x 10 = 215 |
/// | answer sentences | 15 x 5 + 5 x 4 = 95 |
/// | answer words | 47 x 16 + 48 x 15 = 1472 |
/// | gold alignment links | 71 x 2 + 24 x 1 = 166 of 2035 pairs |
pub fn dev_shaped() -> Vec<Case> {
    let mut short_note_sentences = 2;
    let mut long_answers = 47;
    let mut double_links = 71;
    (0..20)
        .map(|c| {
            let n = if c < 8 { 22 } else { 21 };
            let m = if c < 15 { 5 } else { 4 };
            let mut essential: Vec<usize> = ESSENTIAL_POSITIONS.to_vec();
            if c == 0 {
                essential.push(19);
            }
            let sentences: Vec<NoteSentence> = (1..=n)
                .map(|i| {
                    let words = if short_note_sentences > 0 && c == 19 && i > n - 2 {
                        short_note_sentences -= 1;
                        14
                    } else {
                        15
                    };
                    let relevance = if essential.contains(&i) {
                        Relevance::Essential
                    } else if SUPPLEMENTARY_POSITIONS.contains(&i) {
                        Relevance::Supplementary
                    } else {
                        Relevance::NotRelevant
                    };
                    let prefix = vec![
                        format!("Case{c}"),
                        format!("note{i}"),
                        relevance.as_str().to_string(),
                    ];
                    NoteSentence::new(
                        i.to_string(),
                        sentence(&prefix, words, '.'),
                        Some(relevance),
                    )
                })
                .collect();
            let mut answer = Vec::new();
            let mut links = Vec::new();
            for j in 0..m {
                let words = if long_answers > 0 {
                    long_answers -= 1;
                    16
                } else {
                    15
                };
                let prefix = vec![format!("Answer{c}"), format!("part{}", j + 1)];
                answer.push(AnswerSentence {
                    id: (j + 1).to_string(),
                    text: sentence(&prefix, words, '.'),
                });
                let first = ESSENTIAL_POSITIONS[(2 * j) % 6];
                let mut cited: BTreeSet<String> = [first.to_string()].into();
                if double_links > 0 {
                    double_links -= 1;
                    cited.insert(ESSENTIAL_POSITIONS[(2 * j + 1) % 6].to_string());
                }
                links.push(EvidenceLink {
                    answer_id: (j + 1).to_string(),
                    evidence_ids: cited,
                });
            }
            let pq_words = if c < 4 { 17 } else { 16 };
            let cq_words = if c < 15 { 11 } else { 10 };
            Case {
                case_id: format!("dev-{}", c + 1),
                patient_question: sentence(&[format!("Case{c}"), "question".into()], pq_words, '?'),
                clinician_question: Some(sentence(
                    &[format!("Case{c}"), "clinician".into()],
                    cq_words,
                    '?',
                )),
                sentences,
                reference_answer: Some(answer),
                evidence_links: Some(links),
                specialty: None,
                provenance: None,
            }
        })
        .collect()
}
