//! Prompts sent to an external generator, answered here by the local
//! rule-based corruptor.
//!
//! cargo run --example generator_prompts

use clinic_prm::corruption::generator::{build_error_pool, build_paraphrase_pool, GeneratorRequest, GeneratorTask};
use clinic_prm::corruption::{generate_toy_case, ErrorType, LocalCorruptor};

fn main() -> anyhow::Result<()> {
    let case = generate_toy_case(11);
    let req = GeneratorRequest::new(GeneratorTask::Errors(ErrorType::FactualInaccuracy), &case.dialogue, &case.gold);
    println!("{}\n", req.prompt);

    let local = LocalCorruptor::new(11);
    for t in ErrorType::ALL {
        let pool = build_error_pool(&case.dialogue, &case.gold, t, &local)?;
        let first = &pool[0];
        println!("{t}: {} records, e.g. {:?} -> {:?}", pool.len(), first.original_content, first.new_content);
    }
    let para = build_paraphrase_pool(&case.dialogue, &case.gold, &local)?;
    println!("paraphrases: {}", para.len());
    Ok(())
}
