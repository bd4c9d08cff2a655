//! Accuracy of all nine aggregation strategies on a toy verification set.
//!
//! cargo run --example strategy_sweep [-- noise cases]

use clinic_prm::corpus::Vocabulary;
use clinic_prm::corruption::{generate_toy_cases, DatasetConfig};
use clinic_prm::eval::{build_eval_set, strategy_sweep};
use clinic_prm::model::OracleScorer;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.3);
    let cases: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);

    let config = DatasetConfig {
        seed: 9,
        ..DatasetConfig::default()
    };
    let set = build_eval_set(&generate_toy_cases(config.seed, cases), 7, &config)?;
    let table = strategy_sweep(&set, &OracleScorer::noisy(noise, 9), &Vocabulary::toy())?;
    print!("{}", table.to_table());
    Ok(())
}
