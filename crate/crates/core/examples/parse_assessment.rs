//! Parsing free-form model replies into hazard labels and rationales,
//! lenient by default and strict on request.
//!
//! ```text
//! cargo run --example parse_assessment
//! ```

use hazguard::parser::SynonymTable;
use hazguard::{parse_assessment, Parser};

const REPLIES: &[(&str, &str)] = &[
    (
        "canonical",
        "Hazards: fall_hazard, ppe_non_compliance\nExplanation:\n-fall_hazard: Worker w1 is on the roof edge.\n-ppe_non_compliance: Worker w2 has no helmet.",
    ),
    (
        "html wrapped",
        "<p>Hazards: caught_between_hazard</p> <p>Explanation:</p> <ul> -caught_between_hazard: Worker w1 stands in the swing radius of ex1.</ul>",
    ),
    (
        "markdown and synonyms",
        "**Hazards:** Fall Hazards, PPE\n**Explanation:**\n* Fall Hazards: open edge on level 3.\n* PPE: no vest on w1.",
    ),
    ("no hazards", "Hazards: none"),
    (
        "label only in a bullet",
        "Hazards: fall_hazard\nExplanation:\n-fall_hazard: Open edge.\n-unsafe_environment: Rebar is scattered across the walkway.",
    ),
    ("no header", "-unsafe_environment: Rebar is scattered across the walkway."),
    ("garbage", "I cannot assess this image."),
];

fn main() {
    let strict = Parser::new(SynonymTable::empty(), true);
    for (name, text) in REPLIES {
        let a = parse_assessment(text);
        let s = strict.parse(text);
        let keys: Vec<_> = a.categories.iter().map(|k| k.key()).collect();
        println!("{name}: {keys:?}");
        for w in &a.parse_warnings {
            println!("  warning: {w}");
        }
        if s.categories != a.categories {
            println!(
                "  strict parse differs: {:?}",
                s.categories.iter().map(|k| k.key()).collect::<Vec<_>>()
            );
        }
    }
    println!("\nround trip:\n{}", parse_assessment(REPLIES[2].1).render());
}
