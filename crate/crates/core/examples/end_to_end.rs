//! All four subtasks on the bundled sample, twice. The second pass is
//! served entirely from the response cache.

use ehrqa::run::{Pipeline, RunConfig};

fn main() -> ehrqa::Result<()> {
    let dir = std::env::temp_dir().join("ehrqa-end-to-end");
    let config = RunConfig {
        output_dir: dir.clone(),
        ..RunConfig::default()
    };
    for pass in 1..=2 {
        let pipeline = Pipeline::new(config.clone())?;
        for m in pipeline.run_all("dev")? {
            println!(
                "pass {pass} {}: {} backend call(s), {} cache hit(s)",
                m.task, m.total_backend_calls, m.cache_hits
            );
        }
    }
    println!("outputs in {}", dir.join("dev").display());
    Ok(())
}
