//! Brute-force reference implementations of the lexical metrics, written
//! from the metric definitions with plain vectors and linear scans.
//!
//! Inputs are assumed simple: ASCII words, with `.`, `,` and `?` as the
//! only punctuation and sentences separated by a terminator and a space.

#![allow(dead_code)]

pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// All n-grams in order, duplicates kept.
fn grams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return vec![];
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join(" "))
        .collect()
}

fn count(list: &[String], g: &str) -> usize {
    list.iter().filter(|x| x.as_str() == g).count()
}

fn distinct(list: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

/// Sentence BLEU: clipped precisions up to 4-grams over the orders the
/// candidate is long enough for, geometric mean, brevity penalty against
/// the closest reference length (shorter on ties). A zero-match order k
/// (counting only zero-match orders, from 1) uses 1 / (2^k * total).
pub fn bleu(candidate: &str, references: &[&str]) -> f64 {
    let c = words(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| words(r)).collect();
    if c.is_empty() {
        return 0.0;
    }
    let mut logs = Vec::new();
    let mut zero_orders = 0;
    for n in 1..=4 {
        let cg = grams(&c, n);
        if cg.is_empty() {
            break;
        }
        let mut matched = 0;
        for g in distinct(&cg) {
            let best_ref = refs
                .iter()
                .map(|r| count(&grams(r, n), &g))
                .max()
                .unwrap_or(0);
            matched += count(&cg, &g).min(best_ref);
        }
        if n == 1 && matched == 0 {
            return 0.0;
        }
        let p = if matched > 0 {
            matched as f64 / cg.len() as f64
        } else {
            zero_orders += 1;
            1.0 / (2f64.powi(zero_orders) * cg.len() as f64)
        };
        logs.push(p.ln());
    }
    let mut r_len = usize::MAX;
    let mut best_diff = usize::MAX;
    for r in &refs {
        let d = r.len().abs_diff(c.len());
        if d < best_diff || (d == best_diff && r.len() < r_len) {
            best_diff = d;
            r_len = r.len();
        }
    }
    let bp = if c.len() < r_len {
        (1.0 - r_len as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn sentence_split(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        let boundary = matches!(c, '.' | '?' | '!')
            && chars.get(i + 1) == Some(&' ')
            && chars
                .get(i + 2)
                .is_some_and(|n| n.is_ascii_uppercase() || n.is_ascii_digit());
        if boundary {
            out.push(std::mem::take(&mut cur));
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| {
            s.split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Positions of the longest common subsequence of `r` and `c`, found by
/// trying every subset of `r`. Panics if two different position sets tie,
/// since the union would then depend on tie-breaking.
fn lcs_positions(r: &[String], c: &[String]) -> Vec<usize> {
    assert!(r.len() <= 20, "oracle sentence too long");
    let mut best: Vec<Vec<usize>> = vec![vec![]];
    for mask in 1u32..(1 << r.len()) {
        let pos: Vec<usize> = (0..r.len()).filter(|i| mask & (1 << i) != 0).collect();
        if pos.len() < best[0].len() {
            continue;
        }
        let toks: Vec<&String> = pos.iter().map(|&i| &r[i]).collect();
        if !is_subsequence(&toks, c) {
            continue;
        }
        if pos.len() > best[0].len() {
            best = vec![pos];
        } else {
            best.push(pos);
        }
    }
    assert!(
        best.len() == 1,
        "ambiguous LCS in oracle fixture: {r:?} / {c:?}"
    );
    best.pop().unwrap()
}

/// Summary-level ROUGE-L F-measure: per reference sentence, the union of
/// LCS positions against each candidate sentence; each hit consumes one
/// remaining occurrence of the token on both sides.
pub fn rouge_lsum(candidate: &str, reference: &str) -> f64 {
    let cand = sentence_split(candidate);
    let refs = sentence_split(reference);
    let n: usize = cand.iter().map(Vec::len).sum();
    let m: usize = refs.iter().map(Vec::len).sum();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let all_c: Vec<String> = cand.concat();
    let all_r: Vec<String> = refs.concat();
    let mut left_c: Vec<(String, usize)> = distinct(&all_c)
        .into_iter()
        .map(|t| {
            let k = count(&all_c, &t);
            (t, k)
        })
        .collect();
    let mut left_r: Vec<(String, usize)> = distinct(&all_r)
        .into_iter()
        .map(|t| {
            let k = count(&all_r, &t);
            (t, k)
        })
        .collect();
    let mut hits = 0;
    for r in &refs {
        let mut union: Vec<usize> = Vec::new();
        for c in &cand {
            for p in lcs_positions(r, c) {
                if !union.contains(&p) {
                    union.push(p);
                }
            }
        }
        union.sort();
        for p in union {
            let tok = &r[p];
            let ci = left_c.iter().position(|(t, _)| t == tok);
            let ri = left_r.iter().position(|(t, _)| t == tok);
            if let (Some(ci), Some(ri)) = (ci, ri) {
                if left_c[ci].1 > 0 && left_r[ri].1 > 0 {
                    hits += 1;
                    left_c[ci].1 -= 1;
                    left_r[ri].1 -= 1;
                }
            }
        }
    }
    let p = hits as f64 / n as f64;
    let r = hits as f64 / m as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// SARI on lowercased tokens. Source and candidate counts are scaled by
/// the number of references; reference counts are summed. Keep: F1 of a
/// per-gram averaged precision and a pooled recall. Delete: per-gram
/// averaged precision only. Add: F1 over distinct grams. Empty ratios are 1.
pub fn sari(source: &str, candidate: &str, references: &[&str]) -> f64 {
    let lower = |t: &str| words(&t.to_lowercase());
    let s = lower(source);
    let c = lower(candidate);
    let rs: Vec<Vec<String>> = references.iter().map(|r| lower(r)).collect();
    let k = rs.len();
    let f1 = |p: f64, r: f64| {
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    for n in 1..=4 {
        let sg = grams(&s, n);
        let cg = grams(&c, n);
        let rg: Vec<String> = rs.iter().flat_map(|r| grams(r, n)).collect();
        let sc = |g: &str| count(&sg, g) * k;
        let cc = |g: &str| count(&cg, g) * k;
        let rc = |g: &str| count(&rg, g);

        let kept: Vec<String> = distinct(&sg)
            .into_iter()
            .filter(|g| sc(g).min(cc(g)) > 0)
            .collect();
        let keep_p = if kept.is_empty() {
            1.0
        } else {
            kept.iter()
                .map(|g| {
                    let kc = sc(g).min(cc(g));
                    kc.min(rc(g)) as f64 / kc as f64
                })
                .sum::<f64>()
                / kept.len() as f64
        };
        let good: usize = kept.iter().map(|g| sc(g).min(cc(g)).min(rc(g))).sum();
        let possible: usize = distinct(&sg).iter().map(|g| sc(g).min(rc(g))).sum();
        let keep_r = if possible == 0 {
            1.0
        } else {
            good as f64 / possible as f64
        };

        let deleted: Vec<String> = distinct(&sg)
            .into_iter()
            .filter(|g| sc(g) > cc(g))
            .collect();
        let del_p = if deleted.is_empty() {
            1.0
        } else {
            deleted
                .iter()
                .map(|g| {
                    let d = sc(g) - cc(g);
                    d.saturating_sub(rc(g)) as f64 / d as f64
                })
                .sum::<f64>()
                / deleted.len() as f64
        };

        let added: Vec<String> = distinct(&cg)
            .into_iter()
            .filter(|g| !sg.contains(g))
            .collect();
        let add_good = added.iter().filter(|g| rg.contains(g)).count();
        let add_all = distinct(&rg).iter().filter(|g| !sg.contains(g)).count();
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

        total += (f1(keep_p, keep_r) + del_p + f1(add_p, add_r)) / 3.0;
    }
    total / 4.0
}

/// (source, candidate, reference) triples in the style of both generation
/// subtasks: patient question to clinician question, note to answer.
pub const TRIPLES: [(&str, &str, &str); 10] = [
    (
        "My dad had a fever and they gave him antibiotics, why?",
        "Why was the patient given antibiotics?",
        "Why was the patient treated with antibiotics?",
    ),
    (
        "She was confused after surgery and nobody told us why.",
        "What caused her confusion after surgery?",
        "What caused the postoperative delirium?",
    ),
    (
        "Why did my mother need dialysis after the heart surgery?",
        "Why did the patient need dialysis after cardiac surgery?",
        "Why was dialysis required after cardiac surgery?",
    ),
    ("The cat sat.", "The cat sat.", "The cat sat."),
    ("a b c", "a b c", "a b"),
    (
        "He had chest pain. Troponin was elevated. He got a stent.",
        "He had a heart attack. A stent was placed.",
        "He had a heart attack. He received a stent in the right coronary artery.",
    ),
    (
        "Lab showed low sodium. She had a seizure. Fluid was restricted.",
        "Low sodium caused a seizure. Fluids were limited.",
        "The seizure was caused by low sodium. Fluids were restricted.",
    ),
    (
        "Bile leak was seen on imaging. A drain was placed.",
        "A drain was placed for the bile leak.",
        "The bile leak was treated with a drain. She recovered.",
    ),
    (
        "why was my blood thinner stopped",
        "Why was the anticoagulant held?",
        "Why was anticoagulation stopped?",
    ),
    (
        "Kidney function got worse on ibuprofen.",
        "Kidney injury was due to ibuprofen.",
        "Kidney injury was attributed to ibuprofen and dehydration.",
    ),
];
