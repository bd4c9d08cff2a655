//! Temperatures of each case's top-k samples.
//!
//! Samples are simulated: hotter samples carry more corrupted steps, and a
//! noisy ground-truth scorer ranks them.
//!
//! cargo run --example temperature_histogram [-- top_k]

use clinic_prm::corruption::{build_case_samples, generate_toy_cases, DatasetConfig, SampleKind};
use clinic_prm::eval::temperature::{default_samples_per_bin, default_temperature_bins, temperature_histogram};
use clinic_prm::model::oracle_scores;
use clinic_prm::scoring::AggregationStrategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let top_k: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let bins = default_temperature_bins();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = Vec::new();
    for case in generate_toy_cases(2, 5) {
        let config = DatasetConfig {
            negatives_per_case: 12.0,
            ..DatasetConfig::default()
        };
        let samples = build_case_samples(&case, &config)?;
        let gold = samples.iter().find(|s| s.kind == SampleKind::Gold).expect("gold");
        let negatives: Vec<_> = samples.iter().filter(|s| s.kind == SampleKind::Negative).collect();
        let mut rows = Vec::new();
        for &t in &bins {
            // A tenth of the default schedule keeps the example quick.
            for _ in 0..default_samples_per_bin(t) / 10 {
                let note = if rng.random_bool((t / 2.0).min(1.0)) {
                    &negatives[rng.random_range(0..negatives.len())].note
                } else {
                    &gold.note
                };
                rows.push((t, oracle_scores(note, 0.1, rng.random())));
            }
        }
        cases.push(rows);
    }
    let hist = temperature_histogram(&cases, top_k, AggregationStrategy::Product, &bins)?;
    for b in hist {
        println!("{:>4.1}  {:>4}  {}", b.temperature, b.count, "#".repeat(b.count));
    }
    Ok(())
}
