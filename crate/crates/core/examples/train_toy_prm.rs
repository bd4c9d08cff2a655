//! Trains the toy PRM and reports held-out Best-of-8 accuracy.
//!
//! cargo run --release --example train_toy_prm [-- steps mask]

use clinic_prm::corpus::{Corpus, MaskVariant, Vocabulary};
use clinic_prm::corruption::{build_dataset, generate_toy_cases, DatasetConfig};
use clinic_prm::eval::{build_eval_set, eval_cases};
use clinic_prm::model::{train_pairs, ModelConfig, PrmScorer, ScoreNormalization, ToyPrm, TrainConfig};
use clinic_prm::scoring::AggregationStrategy;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(400);
    let mask: MaskVariant = args
        .next()
        .map(|s| s.parse().map_err(anyhow::Error::msg))
        .transpose()?
        .unwrap_or(MaskVariant::NotesOnly);

    let config = DatasetConfig::default();
    let cases = generate_toy_cases(config.seed, 250);
    let (train, held_out) = cases.split_at(200);
    let (samples, _) = build_dataset(train, &config)?;
    let vocab = Vocabulary::toy();
    let corpus = Corpus::build(&samples, &vocab, mask, false)?;
    let pairs = corpus.training_pairs(mask)?;

    let mut model = ToyPrm::init(ModelConfig::toy(vocab.len()), 7)?;
    println!("{} records, {} parameters, {mask} mask", pairs.len(), model.parameter_count());
    let report = train_pairs(&mut model, &pairs, &TrainConfig { steps, ..TrainConfig::toy() })?;
    for (i, loss) in report.loss_trace.iter().enumerate().step_by((steps / 10).max(1)) {
        println!("step {i:>4}  loss {loss:.4}");
    }
    println!("trained in {:.1}s", report.elapsed_secs);

    let eval = build_eval_set(held_out, 7, &config)?;
    let scorer = PrmScorer::new(model, ScoreNormalization::Raw);
    let result = eval_cases(&eval, &scorer, AggregationStrategy::Product, &vocab)?;
    print!("{}", result.to_table());
    Ok(())
}
