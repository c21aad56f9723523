//! Summary-level ROUGE-L ("ROUGE-Lsum").
//!
//! Both texts are sentence-split. For each reference sentence, the union of
//! its LCS matches against every candidate sentence is collected; hits are
//! clipped by the remaining token counts on each side and pooled over the
//! whole summary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::rouge_tokens;
use crate::text::Segmenter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

/// Positions in `reference` of one LCS with `candidate`.
fn lcs_positions(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

fn sentences(text: &str) -> Vec<Vec<String>> {
    Segmenter::default()
        .split(text)
        .into_iter()
        .map(rouge_tokens)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn rouge_lsum_scores(candidate: &str, reference: &str) -> RougeScore {
    let zero = RougeScore {
        precision: 0.0,
        recall: 0.0,
        fmeasure: 0.0,
    };
    let cand = sentences(candidate);
    let refs = sentences(reference);
    let n: usize = cand.iter().map(Vec::len).sum();
    let m: usize = refs.iter().map(Vec::len).sum();
    if n == 0 || m == 0 {
        return zero;
    }
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in cand.iter().flatten() {
        *cand_counts.entry(t).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in refs.iter().flatten() {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    let mut hits = 0usize;
    for r in &refs {
        let mut union: Vec<usize> = cand.iter().flat_map(|c| lcs_positions(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for pos in union {
            let token = r[pos].as_str();
            let (Some(cc), Some(rc)) = (cand_counts.get_mut(token), ref_counts.get_mut(token))
            else {
                continue;
            };
            if *cc > 0 && *rc > 0 {
                hits += 1;
                *cc -= 1;
                *rc -= 1;
            }
        }
    }
    let precision = hits as f64 / n as f64;
    let recall = hits as f64 / m as f64;
    let fmeasure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeScore {
        precision,
        recall,
        fmeasure,
    }
}

/// ROUGE-Lsum F-measure in [0, 1].
pub fn rouge_lsum(candidate: &str, reference: &str) -> f64 {
    rouge_lsum_scores(candidate, reference).fmeasure
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(rouge_lsum("The cat sat.", "The cat sat."), 1.0);
        assert_eq!(rouge_lsum("Dogs run.", "The cat sat."), 0.0);
        assert_eq!(rouge_lsum("", "The cat sat."), 0.0);
    }

    #[test]
    fn partial_lcs_by_hand() {
        let s = rouge_lsum_scores("the cat", "the cat sat");
        assert_eq!(s.precision, 1.0);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.fmeasure - 0.8).abs() < 1e-12);
    }

    #[test]
    fn union_over_candidate_sentences() {
        // reference sentence "a b c d"; candidate sentences cover "a b" and "c d"
        let s = rouge_lsum_scores("A b. C d.", "A b c d.");
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.precision, 1.0);
    }

    #[test]
    fn hits_are_clipped_by_counts() {
        // "a a" in the candidate once; reference has two sentences each containing "a"
        let s = rouge_lsum_scores("X a.", "A y. A z.");
        // only one "a" available on the candidate side
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 0.25).abs() < 1e-12);
    }
}
