//! Threshold calibration on labeled cases, then evidence selection.
//! Writes the sweep to `threshold_curve.csv` in the working directory.

use ehrqa::backends::MockBackend;
use ehrqa::evidence::{
    calibrate_threshold, score_case, select_evidence, QuestionSource, Scorer, ScorerKind,
};
use ehrqa::fixtures;

fn main() -> ehrqa::Result<()> {
    let cases = fixtures::sample_cases();
    let backend = MockBackend::new("embedder");
    let scorer = Scorer::new(ScorerKind::EmbeddingCosine, &backend);
    let curve = calibrate_threshold(&cases, &QuestionSource::Clinician, &scorer, None, 1)?;
    println!(
        "best t = {:.4}: P {:.3} R {:.3} F1 {:.3} (all-relevant F1 {:.3}, {} grid points)",
        curve.best_t,
        curve.best.precision,
        curve.best.recall,
        curve.best.f1,
        curve.baseline_f1(),
        curve.points.len()
    );
    std::fs::write("threshold_curve.csv", curve.to_csv())
        .map_err(|e| ehrqa::Error::io("threshold_curve.csv", e))?;

    let case = &cases[0];
    let scored = score_case(case, case.clinician_question.as_deref().unwrap(), &scorer)?;
    let selected = select_evidence(&case.case_id, &scored, curve.best_t);
    println!(
        "case {}: evidence {:?}",
        case.case_id, selected.evidence_ids
    );
    Ok(())
}
