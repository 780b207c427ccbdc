//! One request against an OpenAI-compatible chat completions server.
//! Reads HAZGUARD_ENDPOINT and HAZGUARD_API_KEY.
//!
//! ```text
//! HAZGUARD_ENDPOINT=http://localhost:8000/v1 cargo run --example live_client -- <model> <image>
//! ```

use hazguard::category::CategorySet;
use hazguard::vlm::{complete, InferenceConfig, LiveBackend};
use hazguard::{build_prompt, parse_assessment, PromptMode, PromptTemplate};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(model), Some(image)) = (args.next(), args.next()) else {
        eprintln!("usage: live_client <model> <image>");
        std::process::exit(1);
    };
    let cfg = InferenceConfig::evaluation(model);
    let backend = LiveBackend::new(&cfg)?;
    println!("POST {}", backend.url());

    let prompt = build_prompt(
        PromptMode::Baseline,
        &[],
        &CategorySet::default(),
        &PromptTemplate::baseline_v1(),
    )?;
    let bytes = std::fs::read(&image)?;
    let raw = complete(&backend, &bytes, &prompt, &cfg)?;
    println!(
        "{} ms, usage {:?}\n{}\n",
        raw.latency.as_millis(),
        raw.token_usage,
        raw.text
    );
    println!("{:#?}", parse_assessment(&raw.text));
    Ok(())
}
