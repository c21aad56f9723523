//! Answer-to-note alignment with each strategy, printed in submission form.

use ehrqa::align::{to_submission, AlignStrategy, Aligner};
use ehrqa::answer::GeneratedAnswer;
use ehrqa::backends::MockBackend;
use ehrqa::fixtures;

fn main() -> ehrqa::Result<()> {
    let cases = fixtures::sample_cases();
    let (exemplar, case) = (&cases[0], &cases[2]);
    let answer =
        GeneratedAnswer::from_sentences(&case.case_id, case.reference_answer.clone().unwrap());
    let q_clin = case.clinician_question.as_deref().unwrap();
    let backend = MockBackend::scripted("offline");
    let strategies = [
        AlignStrategy::Threshold { t: 0.3 },
        AlignStrategy::ListwiseOneShot,
        AlignStrategy::ListwiseTwoStep,
        AlignStrategy::PairwiseZeroShot,
    ];
    for strategy in strategies {
        let before = backend.total_calls();
        let aligner = Aligner::new(strategy, &backend)?.with_exemplar(exemplar)?;
        let map = aligner.align(case, &answer, &case.patient_question, q_clin)?;
        println!(
            "{strategy:?}: {} link(s), {} backend call(s)",
            map.link_count(),
            backend.total_calls() - before
        );
        println!("{}", serde_json::to_string(&to_submission(&[map])).unwrap());
    }
    Ok(())
}
