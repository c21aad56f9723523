//! Talking to a local OpenAI-compatible server (Ollama, llama.cpp, MLX).
//!
//!     EHRQA_BASE_URL=http://127.0.0.1:11434/v1 cargo run --example local_endpoint -- qwen3:4b
//!
//! Responses are cached under `./cache`, so a second run makes no requests.

use std::sync::Arc;

use ehrqa::backends::{
    Backend, CachedBackend, ChatRequest, DiskCache, Message, OpenAiBackend, OpenAiConfig,
};

fn main() -> ehrqa::Result<()> {
    let model = std::env::args().nth(1).unwrap_or_else(|| "qwen3:4b".into());
    let config = OpenAiConfig {
        chat_model: Some(model),
        ..OpenAiConfig::default()
    };
    let client = OpenAiBackend::new("local", config)?;
    let cache = Arc::new(DiskCache::open("cache")?);
    let backend = CachedBackend::new(client, cache.clone());
    let request = ChatRequest::new(vec![
        Message::system(
            "Rewrite the patient's question as a clinician would ask it. Maximum 15 words.",
        ),
        Message::user("My mom got really confused after her hip surgery, is that normal?"),
    ]);
    match backend.chat(&request) {
        Ok(reply) => println!("{reply}"),
        Err(e) => eprintln!("request failed ({:?}): {e}", e.class()),
    }
    println!("{:?}", cache.stats());
    Ok(())
}
