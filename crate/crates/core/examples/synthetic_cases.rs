//! Synthetic case generation with the structural quality gate and repair loop.

use ehrqa::backends::MockBackend;
use ehrqa::fixtures;
use ehrqa::synthgen::{generate_synthetic, summarize, validate_case, QualityGate, SynthConfig};

fn main() -> ehrqa::Result<()> {
    let cases = fixtures::sample_cases();
    let gate = QualityGate::default();
    for c in &cases {
        let report = validate_case(c, &gate)?;
        println!(
            "seed {}: {} violation(s)",
            c.case_id,
            report.violations.len()
        );
        for v in &report.violations {
            println!("  {v}");
        }
    }
    let backend = MockBackend::scripted("generator");
    let config = SynthConfig {
        variations_per_seed: 3,
        ..SynthConfig::default()
    };
    let batches = cases
        .iter()
        .map(|seed| generate_synthetic(seed, &[], &backend, &config))
        .collect::<ehrqa::Result<Vec<_>>>()?;
    println!("{:?}", summarize(&batches));
    Ok(())
}
