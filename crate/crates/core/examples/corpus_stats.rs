//! Corpus loading and word-count statistics.
//!
//!     cargo run --example corpus_stats [corpus.json]

use ehrqa::corpus::{compute_stats, parse_corpus, CorpusFormat};
use ehrqa::fixtures;

fn main() -> ehrqa::Result<()> {
    let cases = match std::env::args().nth(1) {
        Some(path) => parse_corpus(path.as_ref(), CorpusFormat::Json)?,
        None => fixtures::dev_shaped(),
    };
    print!("{}", compute_stats(&cases)?.to_table());
    let essential: usize = cases.iter().map(|c| c.essential_ids().count()).sum();
    println!("essential sentences: {essential}");
    Ok(())
}
