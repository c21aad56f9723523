//! Strict micro P/R/F1 and the lexical generation metrics.

use std::collections::HashSet;

use ehrqa::fixtures;
use ehrqa::metrics::{bleu, micro_prf, rouge_lsum, sari, GenScores, ScoreReport};

fn main() -> ehrqa::Result<()> {
    // every sentence predicted relevant on the dev-shaped fixture
    let cases = fixtures::dev_shaped();
    let mut predicted = HashSet::new();
    let mut gold = HashSet::new();
    for c in &cases {
        predicted.extend(c.sentence_ids().map(|s| (c.case_id.clone(), s.to_string())));
        gold.extend(
            c.essential_ids()
                .map(|s| (c.case_id.clone(), s.to_string())),
        );
    }
    print!(
        "{}",
        ScoreReport::from_micro(2, cases.len(), micro_prf(&predicted, &gold)).to_table()
    );
    println!();

    let source = "my dad had a fever and they gave him antibiotics why";
    let reference = "Why was the patient given antibiotics?";
    let candidate = "Why did the patient receive antibiotics?";
    let mut scores = GenScores::new(
        bleu(candidate, &[reference]),
        rouge_lsum(candidate, reference),
        sari(source, candidate, &[reference]),
    );
    scores.set_external("alignscore", 0.7)?;
    print!("{}", ScoreReport::from_generation(1, 1, scores).to_table());
    Ok(())
}
