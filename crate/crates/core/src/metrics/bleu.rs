//! BLEU with uniform weights up to 4-grams, clipped n-gram counts, the
//! brevity penalty, and exponential smoothing of zero n-gram matches.
//!
//! Smoothing: the k-th order with zero matches gets precision
//! `1 / (2^k * total_n)`. A candidate with no unigram match scores 0.
//! Orders longer than the candidate are dropped (effective order).

use std::collections::HashMap;

use super::tokenize::bleu_tokens;

pub const MAX_ORDER: usize = 4;

pub(crate) fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Sufficient statistics for BLEU; add them up for corpus-level scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn compute(candidate: &str, references: &[&str]) -> Self {
        let cand = bleu_tokens(candidate);
        let refs: Vec<Vec<String>> = references.iter().map(|r| bleu_tokens(r)).collect();
        let mut stats = BleuStats {
            candidate_len: cand.len(),
            reference_len: closest_ref_len(cand.len(), &refs),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let counts = ngram_counts(&cand, n);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in &refs {
                for (gram, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            stats.matches[n - 1] = counts
                .iter()
                .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            stats.totals[n - 1] = cand.len().saturating_sub(n - 1);
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for i in 0..MAX_ORDER {
            self.matches[i] += other.matches[i];
            self.totals[i] += other.totals[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let order = (1..=MAX_ORDER)
            .filter(|&n| self.totals[n - 1] > 0)
            .max()
            .unwrap_or(0);
        let mut smooth = 1.0;
        let mut log_sum = 0.0;
        for n in 0..order {
            let p = if self.matches[n] > 0 {
                self.matches[n] as f64 / self.totals[n] as f64
            } else {
                smooth *= 2.0;
                1.0 / (smooth * self.totals[n] as f64)
            };
            log_sum += p.ln();
        }
        let bp = if self.candidate_len < self.reference_len {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        } else {
            1.0
        };
        bp * (log_sum / order as f64).exp()
    }
}

/// Reference length closest to the candidate length; ties go to the shorter.
fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(cand_len), r))
        .unwrap_or(0)
}

/// Sentence-level BLEU in [0, 1].
pub fn bleu(candidate: &str, references: &[&str]) -> f64 {
    BleuStats::compute(candidate, references).score()
}

/// Corpus-level BLEU from pooled statistics.
pub fn corpus_bleu<'a>(pairs: impl IntoIterator<Item = (&'a str, Vec<&'a str>)>) -> f64 {
    let mut total = BleuStats::default();
    for (cand, refs) in pairs {
        total.add(&BleuStats::compute(cand, &refs));
    }
    total.score()
}
