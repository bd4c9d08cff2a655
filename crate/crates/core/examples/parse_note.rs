//! Splits a free-text Assessment & Plan note into scored steps.
//!
//! cargo run --example parse_note [-- path/to/note.txt]

use anyhow::Context;
use clinic_prm::note::{parse_note, render_note, to_annotated_json, StepRole};

const SAMPLE: &str = "\
ASSESSMENT AND PLAN:
1. Left knee pain
Likely patellofemoral syndrome. Start ibuprofen 400 mg twice daily with food.
Order x-ray of the left knee.
2. Seasonal allergies
Continue loratadine 10 mg daily.
Follow-up instructions: Return to clinic in 4 weeks.";

fn main() -> anyhow::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).with_context(|| format!("reading {path}"))?,
        None => SAMPLE.to_string(),
    };
    let note = parse_note(&text)?;
    note.validate()?;

    for p in &note.problems {
        println!("problem {}: {}", p.number, p.description);
        for s in &p.steps {
            println!("  step {}: {}", s.number, s.content);
        }
    }
    let labels = note.labels();
    let count = |role| labels.iter().filter(|(r, _)| *r == role).count();
    println!(
        "\n{} scored positions: {} problems, {} sentences, {} problem completeness, {} note completeness, {} end-of-note",
        labels.len(),
        count(StepRole::Problem),
        count(StepRole::Step),
        count(StepRole::ProblemCompleteness),
        count(StepRole::NoteCompleteness),
        count(StepRole::EndOfNote),
    );

    println!("\nannotated form:\n{}", serde_json::to_string_pretty(&to_annotated_json(&note))?);
    println!("\nrendered:\n{}", render_note(&note));
    Ok(())
}
