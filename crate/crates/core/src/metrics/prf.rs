use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Pooled (micro) precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MicroScores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // equals 2PR/(P+R); one division keeps equal ratios bit-identical,
        // so threshold ties are not broken by rounding
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        MicroScores {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Micro scores of pooled prediction units against pooled gold units.
///
/// Units should carry their case id, e.g. `(case_id, sentence_id)` for
/// evidence sets or `(case_id, answer_id, sentence_id)` for alignments.
pub fn micro_prf<T: Eq + Hash>(predictions: &HashSet<T>, gold: &HashSet<T>) -> MicroScores {
    let tp = predictions.intersection(gold).count();
    MicroScores::from_counts(tp, predictions.len() - tp, gold.len() - tp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_empty() {
        let gold: HashSet<u32> = [1, 2, 3].into();
        let s = micro_prf(&gold, &gold);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = micro_prf(&HashSet::new(), &gold);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = micro_prf::<u32>(&HashSet::new(), &HashSet::new());
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn all_relevant_baseline_counts() {
        let all: HashSet<u32> = (0..428).collect();
        let gold: HashSet<u32> = (0..121).collect();
        let s = micro_prf(&all, &gold);
        assert_eq!((s.tp, s.fp, s.fn_), (121, 307, 0));
        assert!((s.precision - 0.2827).abs() < 1e-4);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 0.4408).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn f1_identity(pred in prop::collection::hash_set(0u16..200, 0..100), gold in prop::collection::hash_set(0u16..200, 0..100)) {
            let s = micro_prf(&pred, &gold);
            if s.precision + s.recall > 0.0 {
                prop_assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-12);
            }
            prop_assert_eq!(s.tp + s.fp, pred.len());
            prop_assert_eq!(s.tp + s.fn_, gold.len());
        }
    }
}
