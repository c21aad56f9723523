//! Evaluation metrics: strict micro P/R/F1 over pooled units, and the
//! lexical generation metrics BLEU, ROUGE-Lsum and SARI.

mod bleu;
mod prf;
mod report;
mod rouge;
mod sari;
pub mod tokenize;

pub use bleu::{bleu, corpus_bleu, BleuStats, MAX_ORDER};
pub use prf::{micro_prf, MicroScores};
pub use report::{GenScores, ScoreReport, EXTERNAL_SLOTS};
pub use rouge::{rouge_lsum, rouge_lsum_scores, RougeScore};
pub use sari::sari;
