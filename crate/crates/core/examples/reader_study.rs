//! A blinded two-arm reader study with simulated readers, persisted to disk.
//!
//! cargo run --example reader_study [-- study_dir]
//!
//! The same directory can be served with
//! `clinic-prm serve-study --study-dir <dir>`.

use std::collections::BTreeMap;

use clinic_prm::study::{Arm, Choice, Study, StudyCase, StudyConfig, Vote};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("clinic-prm-reader-study"));
    let dir = root.join("demo");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }

    let arms = ["prm-selected", "gold"];
    let config = StudyConfig {
        study_id: "demo".into(),
        arms: arms
            .iter()
            .map(|a| Arm {
                name: a.to_string(),
                metadata: serde_json::Value::Null,
            })
            .collect(),
        cases: (0..10)
            .map(|k| StudyCase {
                case_id: format!("case-{k}"),
                dialogue: format!("doctor: what brings you in today? (visit {k})"),
                notes: arms
                    .iter()
                    .map(|a| (a.to_string(), format!("1. Knee pain\nNote written by {a} for visit {k}.")))
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect(),
        readers: vec!["r1".into(), "r2".into(), "r3".into()],
        min_readers_per_comparison: 3,
    };
    let mut study = Study::create_in(&dir, config.clone(), 42)?;

    // Simulated readers prefer the first arm 60% of the time and tie 10%.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for reader in &config.readers {
        while study.pending(reader)? > 0 {
            let pair = study.next_pair(reader)?;
            let first_arm = if pair.note_left.contains(arms[0]) { 0 } else { 1 };
            let roll: f64 = rng.random();
            let preferred = if roll < 0.6 { 0 } else { 1 };
            let choice = if roll > 0.9 {
                Choice::Tie
            } else if preferred == first_arm {
                Choice::FirstShown
            } else {
                Choice::SecondShown
            };
            study.submit_vote(Vote {
                reader_id: reader.clone(),
                case_id: pair.case_id,
                pair_id: pair.pair_id,
                choice,
                comment: None,
                timestamp: None,
            })?;
        }
    }
    drop(study);

    let replayed = Study::open(&dir)?;
    print!("{}", replayed.win_rates(false)?.to_table());
    println!("vote log: {}", dir.join("votes.jsonl").display());
    Ok(())
}
