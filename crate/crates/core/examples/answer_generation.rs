//! Grounded answer generation, with the 75-word cap and sentence splitting.

use ehrqa::answer::{AnswerGenerator, AnswerMode};
use ehrqa::backends::MockBackend;
use ehrqa::fixtures;

fn main() -> ehrqa::Result<()> {
    let case = &fixtures::sample_cases()[1];
    let backend = MockBackend::scripted("offline");
    for mode in [AnswerMode::ZeroShotFull, AnswerMode::TwoStep] {
        let answer = AnswerGenerator::new(&backend, mode)
            .generate(case, case.clinician_question.as_deref().unwrap())?;
        println!("{mode:?} ({} words):", answer.word_count);
        for s in &answer.sentences {
            println!("  {}: {}", s.id, s.text);
        }
    }
    Ok(())
}
