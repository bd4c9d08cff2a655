//! The desk-scale experiment: train on 200 toy cases, select among 1 gold
//! and 7 corrupted notes on 50 held-out cases.
//!
//! cargo run --release --example end_to_end

use clinic_prm::corpus::{Corpus, MaskVariant, Vocabulary};
use clinic_prm::corruption::{build_dataset, generate_toy_cases, DatasetConfig};
use clinic_prm::eval::{build_eval_set, eval_cases, strategy_sweep};
use clinic_prm::model::{train_pairs, ModelConfig, OracleScorer, PrmScorer, ScoreNormalization, ToyPrm, TrainConfig};
use clinic_prm::scoring::AggregationStrategy;

fn main() -> anyhow::Result<()> {
    let config = DatasetConfig::default();
    let vocab = Vocabulary::toy();
    let cases = generate_toy_cases(config.seed, 250);
    let (train, held_out) = cases.split_at(200);
    let (samples, summary) = build_dataset(train, &config)?;
    print!("{}", summary.to_table());
    let eval = build_eval_set(held_out, 7, &config)?;

    let oracle = eval_cases(&eval, &OracleScorer::exact(), AggregationStrategy::Product, &vocab)?;
    println!("\nexact oracle accuracy {:.3}", oracle.accuracy);

    for mask in [MaskVariant::NotesOnly, MaskVariant::ScoreOnly] {
        let pairs = Corpus::build(&samples, &vocab, mask, false)?.training_pairs(mask)?;
        let mut model = ToyPrm::init(ModelConfig::toy(vocab.len()), 7)?;
        let untrained = PrmScorer::new(model.clone(), ScoreNormalization::Raw);
        let before = eval_cases(&eval, &untrained, AggregationStrategy::Product, &vocab)?.accuracy;
        let report = train_pairs(&mut model, &pairs, &TrainConfig::toy())?;
        let scorer = PrmScorer::new(model, ScoreNormalization::Raw);
        println!(
            "\n{mask}: untrained {before:.3}, trained in {:.0}s, final loss {:.4}",
            report.elapsed_secs,
            report.loss_trace.last().copied().unwrap_or(f64::NAN)
        );
        print!("{}", strategy_sweep(&eval, &scorer, &vocab)?.to_table());
    }
    Ok(())
}
