//! SARI: mean over n = 1..4 of the keep F1, delete precision, and add F1
//! of the candidate's edits relative to the source and references.
//!
//! Source and candidate n-gram counts are multiplied by the number of
//! references before comparison. An empty ratio (0/0) counts as 1, so a
//! candidate identical to source and reference scores 1.

use std::collections::{HashMap, HashSet};

use super::bleu::ngram_counts;
use super::tokenize::sari_tokens;

type Counts<'a> = HashMap<Vec<&'a str>, i64>;

fn scaled<'a>(counts: HashMap<Vec<&'a str>, usize>, factor: i64) -> Counts<'a> {
    counts
        .into_iter()
        .map(|(k, v)| (k, v as i64 * factor))
        .collect()
}

/// Multiset intersection (positive minimums).
fn and<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(k, v)| {
            let m = (*v).min(b.get(k).copied().unwrap_or(0));
            (m > 0).then(|| (k.clone(), m))
        })
        .collect()
}

/// Multiset difference (positive remainders).
fn minus<'a>(a: &Counts<'a>, b: &Counts<'a>) -> Counts<'a> {
    a.iter()
        .filter_map(|(k, v)| {
            let d = v - b.get(k).copied().unwrap_or(0);
            (d > 0).then(|| (k.clone(), d))
        })
        .collect()
}

fn get(c: &Counts<'_>, k: &[&str]) -> i64 {
    c.get(k).copied().unwrap_or(0)
}

fn f1(p: f64, r: f64) -> f64 {
    if p > 0.0 || r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// (keep F1, delete precision, add F1) for one n-gram order.
fn sari_ngram(
    source: &[String],
    candidate: &[String],
    references: &[Vec<String>],
    n: usize,
) -> (f64, f64, f64) {
    let numref = references.len() as i64;
    let mut refs: Counts = HashMap::new();
    for r in references {
        for (k, v) in ngram_counts(r, n) {
            *refs.entry(k).or_insert(0) += v as i64;
        }
    }
    let src = scaled(ngram_counts(source, n), numref);
    let cand = scaled(ngram_counts(candidate, n), numref);

    let keep = and(&src, &cand);
    let keep_good = and(&keep, &refs);
    let keep_all = and(&src, &refs);
    let keep_p = if keep.is_empty() {
        1.0
    } else {
        keep.iter()
            .map(|(k, v)| get(&keep_good, k) as f64 / *v as f64)
            .sum::<f64>()
            / keep.len() as f64
    };
    let keep_r = if keep_all.is_empty() {
        1.0
    } else {
        keep_good.values().sum::<i64>() as f64 / keep_all.values().sum::<i64>() as f64
    };

    let del = minus(&src, &cand);
    let del_good = minus(&del, &refs);
    let del_p = if del.is_empty() {
        1.0
    } else {
        del.iter()
            .map(|(k, v)| get(&del_good, k) as f64 / *v as f64)
            .sum::<f64>()
            / del.len() as f64
    };

    let src_set: HashSet<&Vec<&str>> = src.keys().collect();
    let ref_set: HashSet<&Vec<&str>> = refs.keys().collect();
    let added: Vec<&Vec<&str>> = cand.keys().filter(|k| !src_set.contains(k)).collect();
    let add_good = added.iter().filter(|k| ref_set.contains(*k)).count();
    let add_all = ref_set.iter().filter(|k| !src_set.contains(*k)).count();
    let add_p = if added.is_empty() {
        1.0
    } else {
        add_good as f64 / added.len() as f64
    };
    let add_r = if add_all == 0 {
        1.0
    } else {
        add_good as f64 / add_all as f64
    };

    (f1(keep_p, keep_r), del_p, f1(add_p, add_r))
}

/// Sentence-level SARI in [0, 1].
pub fn sari(source: &str, candidate: &str, references: &[&str]) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let s = sari_tokens(source);
    let c = sari_tokens(candidate);
    let r: Vec<Vec<String>> = references.iter().map(|x| sari_tokens(x)).collect();
    let (mut keep, mut del, mut add) = (0.0, 0.0, 0.0);
    for n in 1..=4 {
        let (k, d, a) = sari_ngram(&s, &c, &r, n);
        keep += k;
        del += d;
        add += a;
    }
    (keep / 4.0 + del / 4.0 + add / 4.0) / 3.0
}
