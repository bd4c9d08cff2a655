//! Corrupts one toy note by hand and shows the derived step labels.
//!
//! cargo run --example corrupt_toy_case [-- seed]

use clinic_prm::corruption::{generate_toy_case, ErrorType, SampleBuilder};
use clinic_prm::note::{StepRole, StructuredNote};

fn show(note: &StructuredNote) {
    let mut labels = note.labels().into_iter();
    let mut next = || labels.next().map_or("?", |(_, l)| l.as_str());
    for p in &note.problems {
        println!("  [{}] {}. {}", next(), p.number, p.description);
        for s in &p.steps {
            println!("  [{}]    {}", next(), s.content);
        }
        println!("  [{}]    (problem completeness)", next());
    }
    println!("  [{}] (note completeness)", next());
    println!("  [{}] (end of note)", next());
}

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let case = generate_toy_case(seed);
    println!("dialogue: {}\n\ngold:", case.dialogue);
    show(&case.gold);

    let mut b = SampleBuilder::new(&case.case_id, &case.dialogue, case.gold.clone());
    // One hallucination from the case's pool, then drop a sentence elsewhere.
    let err = case
        .error_pool
        .iter()
        .find(|e| e.error_type == ErrorType::Hallucination && e.step_no.is_some())
        .ok_or_else(|| anyhow::anyhow!("no step-level hallucination in the pool"))?;
    b.apply_error(err)?;
    println!("\napplied {}: {:?} -> {:?}", err.error_type, err.original_content, err.new_content);
    let removable = case
        .gold
        .problems
        .iter()
        .find(|p| p.number != err.problem_no && p.steps.len() >= 2)
        .map(|p| (p.number, p.steps[0].number));
    if let Some((p, s)) = removable {
        b.remove_step(p, s)?;
        println!("removed problem {p} step {s}");
    }

    let sample = b.finish()?;
    println!("\nnegative ({:?}):", sample.kind);
    show(&sample.note);
    let minus = sample.note.labels().iter().filter(|(_, l)| l.is_minus()).count();
    let eon = sample.note.labels().iter().any(|(r, l)| *r == StepRole::EndOfNote && l.is_minus());
    println!("\n{minus} positions labeled \"-\"; end-of-note negative: {eon}");
    Ok(())
}
