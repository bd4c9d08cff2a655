//! Serializes a labeled sample into tokens and compares the four loss masks.
//!
//! cargo run --example corpus_masks

use clinic_prm::corpus::{build_loss_mask, make_vanilla_orm_corpus, mask_for_inference, serialize_sample, MaskVariant, Vocabulary};
use clinic_prm::corruption::{build_dataset, generate_toy_cases, DatasetConfig, SampleKind};

fn main() -> anyhow::Result<()> {
    let vocab = Vocabulary::toy();
    let (samples, _) = build_dataset(&generate_toy_cases(1, 2), &DatasetConfig::default())?;
    let sample = samples.iter().find(|s| s.kind == SampleKind::Negative).expect("negative sample");
    let stream = serialize_sample(sample, &vocab)?;

    println!("{} tokens, {} vocabulary symbols (hash {})", stream.len(), vocab.len(), &vocab.hash()[..12]);
    // d dialogue, b boundary, s step token, n note text, c score token
    println!("roles: {}", stream.role_codes());
    for v in MaskVariant::ALL {
        println!("{:>10}: {:>4} positions", v.name(), build_loss_mask(&stream, v).positions.len());
    }

    let labels = |s: &clinic_prm::corpus::TokenStream| s.score_labels().iter().map(|l| l.as_str()).collect::<String>();
    println!("\nscore tokens: {}", labels(&stream));
    println!("vanilla ORM:  {}", labels(&make_vanilla_orm_corpus(&stream)));
    println!("inference:    {}", labels(&mask_for_inference(&stream)));
    Ok(())
}
