//! Few-shot question interpretation with the offline scripted backend.

use ehrqa::backends::MockBackend;
use ehrqa::fixtures;
use ehrqa::interpret::{InterpretKind, InterpretStrategy, Interpreter};

fn main() -> ehrqa::Result<()> {
    let dev = fixtures::sample_cases();
    let backend = MockBackend::scripted("offline");
    for kind in [InterpretKind::FewShot, InterpretKind::DoubleQuery] {
        let strategy = InterpretStrategy::from_dev(kind, 3, &dev)?;
        let interpreter = Interpreter::new(strategy, &backend);
        let case = &dev[4];
        let q = interpreter.interpret(&case.patient_question)?;
        println!("{kind:?}: {} ({} words)", q.text, q.word_count);
    }
    Ok(())
}
