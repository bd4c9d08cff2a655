//! Ranks the candidates of one case with a noisy ground-truth scorer.
//!
//! cargo run --example best_of_n [-- noise]

use clinic_prm::corpus::Vocabulary;
use clinic_prm::corruption::{generate_toy_cases, DatasetConfig};
use clinic_prm::eval::{build_eval_set, score_cases};
use clinic_prm::model::OracleScorer;
use clinic_prm::scoring::{aggregate, best_of_n, orm_score, select_for_review, AggregationStrategy};

fn main() -> anyhow::Result<()> {
    let noise: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let set = build_eval_set(&generate_toy_cases(5, 1), 7, &DatasetConfig::default())?;
    let scorer = OracleScorer::noisy(noise, 5);
    let scores = score_cases(&set, &scorer, &Vocabulary::toy())?.remove(0);
    let case = &set[0];

    println!("case {} with {} candidates, gold at {}", case.case_id, scores.len(), case.target_index);
    println!("idx  steps  product(log)      orm  all-steps-positive");
    for (i, v) in scores.iter().enumerate() {
        println!(
            "{i:>3}  {:>5}  {:>12.3}  {:>7.3}  {}",
            v.len(),
            aggregate(v, AggregationStrategy::Product)?.value,
            orm_score(v)?.value,
            v.all_steps_positive()
        );
    }
    for s in AggregationStrategy::ALL {
        println!("{:>10}: picks {}", s.title(), best_of_n(&scores, s)?);
    }
    println!("for review: {}", select_for_review(&scores, AggregationStrategy::Product)?);
    Ok(())
}
