//! Builds a step-labeled dataset from toy cases and prints its statistics.
//!
//! cargo run --example build_dataset [-- cases seed]

use clinic_prm::corruption::{build_dataset, generate_toy_cases, DatasetConfig, SampleKind};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cases: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let config = DatasetConfig {
        seed,
        ..DatasetConfig::default()
    };
    let (samples, summary) = build_dataset(&generate_toy_cases(seed, cases), &config)?;
    print!("{}", summary.to_table());

    let neg = samples.iter().find(|s| s.kind == SampleKind::Negative).expect("negatives");
    println!("\nfirst negative of {}:", neg.case_id);
    for e in &neg.applied_errors {
        println!("  {} at problem {} step {:?}: {}", e.error_type, e.problem_no, e.step_no, e.new_content);
    }
    for r in &neg.removed {
        println!("  removed {:?}: {}", r.level, r.removed_content);
    }
    println!("  {} paraphrased sentences", neg.paraphrase_count);
    Ok(())
}
