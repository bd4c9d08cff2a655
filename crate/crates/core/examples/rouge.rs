//! ROUGE-1, ROUGE-L and ROUGE-Lsum between two notes.
//!
//! cargo run --example rouge [-- candidate.txt reference.txt]

use clinic_prm::eval::rouge::rouge_scores;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (cand, reference) = match args.as_slice() {
        [c, r] => (std::fs::read_to_string(c)?, std::fs::read_to_string(r)?),
        _ => (
            "1. Left knee pain\nOrder x-ray of the left knee.\nStart ibuprofen 400 mg.".to_string(),
            "1. Left knee pain\nStart ibuprofen 400 mg twice daily.\nOrder an x-ray of the left knee.".to_string(),
        ),
    };
    let r = rouge_scores(&cand, &reference);
    for (name, s) in [("rouge1", r.rouge1), ("rougeL", r.rouge_l), ("rougeLsum", r.rouge_lsum)] {
        println!("{name:>9}  P {:.4}  R {:.4}  F {:.4}", s.precision, s.recall, s.fmeasure);
    }
    Ok(())
}
