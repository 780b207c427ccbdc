//! Multi-label hazard scoring (micro and macro) and token-level BERTScore
//! between generated and reference rationales.
//!
//! ```text
//! cargo run --example hazard_eval
//! ```

use std::collections::BTreeSet;

use hazguard::hazard_metrics::{aggregate_hazard_metrics, bertscore, bertscore_idf, IdfTable, LabelPair};
use hazguard::vlm::{embed_tokens, HashingEmbedder, TokenEmbeddings};
use hazguard::HazardKind::{self, *};

fn set(ks: &[HazardKind]) -> BTreeSet<HazardKind> {
    ks.iter().copied().collect()
}

fn main() -> hazguard::Result<()> {
    let pairs = vec![
        LabelPair {
            pred: set(&[PpeNonCompliance, FallHazard]),
            gt: set(&[PpeNonCompliance]),
        },
        LabelPair {
            pred: set(&[CaughtBetweenHazard]),
            gt: set(&[CaughtBetweenHazard, FallHazard]),
        },
        LabelPair {
            pred: set(&[]),
            gt: set(&[]),
        },
        LabelPair {
            pred: set(&[UnsafeEnvironment]),
            gt: set(&[UnsafeEnvironment]),
        },
    ];
    let m = aggregate_hazard_metrics(&pairs);
    println!("counts tp {} fp {} fn {}", m.counts.tp, m.counts.fp, m.counts.fn_);
    println!(
        "micro P {:.3} R {:.3} F1 {:.3}",
        m.micro.precision, m.micro.recall, m.micro.f1
    );
    println!(
        "macro P {:.3} R {:.3} F1 {:.3}",
        m.macro_avg.precision, m.macro_avg.recall, m.macro_avg.f1
    );
    for (k, s) in &m.per_category {
        println!(
            "  {:<22} tp {} fp {} fn {}  F1 {:.3}",
            k.key(),
            s.counts.tp,
            s.counts.fp,
            s.counts.fn_,
            s.score.f1
        );
    }

    // hand-made 2-d embeddings: the candidate has an extra off-topic token
    let cand = TokenEmbeddings::new(
        vec!["worker".into(), "no".into(), "helmet".into(), "sunny".into()],
        vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0], vec![-1.0, 0.1]],
    )?;
    let refr = TokenEmbeddings::new(
        vec!["worker".into(), "without".into(), "helmet".into()],
        vec![vec![1.0, 0.0], vec![0.5, 0.9], vec![0.0, 1.0]],
    )?;
    let s = bertscore(&cand, &refr)?;
    println!("\nBERTScore P {:.4} R {:.4} F1 {:.4}", s.precision, s.recall, s.f1);

    let emb = HashingEmbedder::default();
    let refs = [
        "Worker w1 has no hard hat near the excavator.",
        "Rebar is scattered across the walkway.",
    ];
    let idf = IdfTable::from_texts(refs);
    let c = embed_tokens("The worker w1 is not wearing a hard hat.", &emb)?;
    let r = embed_tokens(refs[0], &emb)?;
    let plain = bertscore(&c, &r)?;
    let weighted = bertscore_idf(&c, &r, &idf)?;
    println!("hashing embedder F1 {:.4}, with idf {:.4}", plain.f1, weighted.f1);
    Ok(())
}
