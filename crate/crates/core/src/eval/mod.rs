//! Case-level Best-of-N evaluation, strategy sweeps and auxiliary metrics.

pub mod rouge;
pub mod temperature;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{mask_for_inference, serialize_note, Vocabulary};
use crate::corruption::{build_case_samples, case_seed, Case, CorruptionError, DatasetConfig, SampleKind};
use crate::model::{ModelError, ScorerBackend, ScoringInput, StepScoreVector};
use crate::note::{parse_note, StructuredNote};
use crate::scoring::{best_of_n, AggregationStrategy, ScoringError};

pub use rouge::{rouge_scores, Rouge, RougeScore};
pub use temperature::{default_temperature_bins, temperature_histogram, TemperatureBin};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("case {case_id}: {message}")]
    Case { case_id: String, message: String },
    #[error("invalid eval case {case_id}: {message}")]
    InvalidCase { case_id: String, message: String },
    #[error("case {case} has {have} samples, top-{need} requested")]
    InsufficientSamples { case: usize, have: usize, need: usize },
    #[error("temperature {0} is not on the bin grid")]
    TemperatureOffGrid(f64),
    #[error("case {case_id} yields {available} negatives, {requested} requested")]
    TooFewNegatives { case_id: String, requested: usize, available: usize },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Verification,
    Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub dialogue: String,
    pub candidates: Vec<StructuredNote>,
    pub target_index: usize,
    pub task: TaskKind,
}

impl EvalCase {
    /// Candidates given as plain note text. Labels default to "+", so
    /// only model scorers are meaningful on such cases.
    pub fn from_texts(
        case_id: impl Into<String>,
        dialogue: impl Into<String>,
        texts: &[&str],
        target_index: usize,
        task: TaskKind,
    ) -> Result<Self, EvalError> {
        let case_id = case_id.into();
        let candidates = texts
            .iter()
            .map(|t| parse_note(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::InvalidCase {
                case_id: case_id.clone(),
                message: e.to_string(),
            })?;
        let c = EvalCase {
            case_id,
            dialogue: dialogue.into(),
            candidates,
            target_index,
            task,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |message: String| EvalError::InvalidCase {
            case_id: self.case_id.clone(),
            message,
        };
        if self.candidates.len() < 2 {
            return Err(bad(format!("{} candidates, at least 2 required", self.candidates.len())));
        }
        if self.target_index >= self.candidates.len() {
            return Err(bad(format!("target {} out of range", self.target_index)));
        }
        Ok(())
    }
}

/// One gold note plus `negatives` corrupted notes per case, in a seeded
/// random order.
pub fn build_eval_set(cases: &[Case], negatives: usize, config: &DatasetConfig) -> Result<Vec<EvalCase>, EvalError> {
    let config = DatasetConfig {
        negatives_per_case: negatives as f64,
        include_gold: true,
        ..config.clone()
    };
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let samples = build_case_samples(case, &config)?;
        let (gold, negs): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.kind == SampleKind::Gold);
        if negs.len() < negatives {
            return Err(EvalError::TooFewNegatives {
                case_id: case.case_id.clone(),
                requested: negatives,
                available: negs.len(),
            });
        }
        let mut notes: Vec<(bool, StructuredNote)> = gold
            .into_iter()
            .map(|s| (true, s.note))
            .chain(negs.into_iter().take(negatives).map(|s| (false, s.note)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed(config.seed ^ 0x5eed_e7a1, &case.case_id));
        notes.shuffle(&mut rng);
        let target_index = notes.iter().position(|(g, _)| *g).expect("gold included");
        out.push(EvalCase {
            case_id: case.case_id.clone(),
            dialogue: case.dialogue.clone(),
            candidates: notes.into_iter().map(|(_, n)| n).collect(),
            target_index,
            task: TaskKind::Verification,
        });
    }
    Ok(out)
}

/// Step scores for every candidate of every case.
pub fn score_cases(cases: &[EvalCase], scorer: &dyn ScorerBackend, vocab: &Vocabulary) -> Result<Vec<Vec<StepScoreVector>>, EvalError> {
    cases
        .iter()
        .map(|case| {
            let wrap = |message: String| EvalError::Case {
                case_id: case.case_id.clone(),
                message,
            };
            case.validate()?;
            case.candidates
                .iter()
                .map(|note| {
                    let stream = serialize_note(&case.dialogue, note, vocab).map_err(|e| wrap(e.to_string()))?;
                    let stream = mask_for_inference(&stream);
                    let input = ScoringInput {
                        case_id: &case.case_id,
                        note,
                        stream: &stream,
                    };
                    scorer.score(&input).map_err(|e: ModelError| wrap(e.to_string()))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub winner: usize,
    pub target: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub scorer: String,
    pub strategy: AggregationStrategy,
    pub accuracy: f64,
    pub outcomes: Vec<CaseOutcome>,
}

impl EvalReport {
    pub fn correct(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct).count()
    }

    pub fn to_table(&self) -> String {
        format!(
            "task      {}\nscorer    {}\nstrategy  {}\ncases     {}\ncorrect   {}\naccuracy  {:.4}\n",
            self.task,
            self.scorer,
            self.strategy,
            self.outcomes.len(),
            self.correct(),
            self.accuracy
        )
    }
}

/// Builds a report from precomputed scores. Outcomes are sorted by case id.
pub fn report_from_scores(
    task: &str,
    scorer: &str,
    cases: &[EvalCase],
    scores: &[Vec<StepScoreVector>],
    strategy: AggregationStrategy,
) -> Result<EvalReport, EvalError> {
    let mut outcomes = cases
        .iter()
        .zip(scores)
        .map(|(case, s)| {
            let winner = best_of_n(s, strategy).map_err(|e| EvalError::Case {
                case_id: case.case_id.clone(),
                message: e.to_string(),
            })?;
            Ok(CaseOutcome {
                case_id: case.case_id.clone(),
                winner,
                target: case.target_index,
                correct: winner == case.target_index,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    outcomes.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let accuracy = if outcomes.is_empty() {
        0.0
    } else {
        correct as f64 / outcomes.len() as f64
    };
    Ok(EvalReport {
        task: task.to_string(),
        scorer: scorer.to_string(),
        strategy,
        accuracy,
        outcomes,
    })
}

pub fn eval_cases(
    cases: &[EvalCase],
    scorer: &dyn ScorerBackend,
    strategy: AggregationStrategy,
    vocab: &Vocabulary,
) -> Result<EvalReport, EvalError> {
    let scores = score_cases(cases, scorer, vocab)?;
    report_from_scores(&task_name(cases), &scorer.name(), cases, &scores, strategy)
}

fn task_name(cases: &[EvalCase]) -> String {
    match cases.first().map(|c| c.task) {
        Some(TaskKind::Preference) => "preference".into(),
        _ => "verification".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub task: String,
    pub scorer: String,
    pub cases: usize,
    pub reports: Vec<EvalReport>,
}

impl SweepTable {
    pub fn accuracies(&self) -> Vec<(AggregationStrategy, f64)> {
        self.reports.iter().map(|r| (r.strategy, r.accuracy)).collect()
    }

    /// Percentages, one column per strategy.
    pub fn to_table(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for r in &self.reports {
            let w = r.strategy.title().len().max(6);
            let _ = write!(head, "{:>w$} ", r.strategy.title());
            let _ = write!(row, "{:>w$.1} ", 100.0 * r.accuracy);
        }
        format!("{}\n{}\n", head.trim_end(), row.trim_end())
    }
}

/// Scores every candidate once and evaluates all nine strategies.
pub fn strategy_sweep(cases: &[EvalCase], scorer: &dyn ScorerBackend, vocab: &Vocabulary) -> Result<SweepTable, EvalError> {
    let scores = score_cases(cases, scorer, vocab)?;
    let task = task_name(cases);
    let name = scorer.name();
    let reports = AggregationStrategy::ALL
        .into_iter()
        .map(|st| report_from_scores(&task, &name, cases, &scores, st))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        task,
        scorer: name,
        cases: cases.len(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::generate_toy_cases;
    use crate::model::OracleScorer;

    fn eval_set(n: usize) -> Vec<EvalCase> {
        build_eval_set(&generate_toy_cases(3, n), 7, &DatasetConfig::default()).unwrap()
    }

    #[test]
    fn eval_set_shape() {
        let set = eval_set(6);
        assert_eq!(set.len(), 6);
        for c in &set {
            assert_eq!(c.candidates.len(), 8);
            assert!(!c.candidates[c.target_index].has_negative_step());
            let negs = c.candidates.iter().filter(|n| n.has_negative_step()).count();
            assert_eq!(negs, 7);
        }
        let positions: std::collections::BTreeSet<usize> = eval_set(20).iter().map(|c| c.target_index).collect();
        assert!(positions.len() > 1, "gold position is shuffled");
    }

    #[test]
    fn oracle_and_inverted_oracle() {
        let set = eval_set(5);
        let v = Vocabulary::toy();
        let r = eval_cases(&set, &OracleScorer::exact(), AggregationStrategy::Product, &v).unwrap();
        assert_eq!(r.accuracy, 1.0);
        let r = eval_cases(&set, &OracleScorer::inverted(), AggregationStrategy::Product, &v).unwrap();
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn sweep_has_nine_columns() {
        let set = eval_set(3);
        let t = strategy_sweep(&set, &OracleScorer::exact(), &Vocabulary::toy()).unwrap();
        assert_eq!(t.reports.len(), 9);
        assert_eq!(t.to_table().lines().next().unwrap().split_whitespace().count(), 10, "Geo Mean is two words");
        // Median and max tie between gold and most negatives.
        for (st, acc) in t.accuracies() {
            if !matches!(st, AggregationStrategy::Max | AggregationStrategy::Median) {
                assert_eq!(acc, 1.0, "{st}");
            }
        }
    }

    #[test]
    fn invalid_cases_are_rejected() {
        let one = EvalCase::from_texts("c", "d", &["1. pain\n- rest."], 0, TaskKind::Preference);
        assert!(matches!(one, Err(EvalError::InvalidCase { .. })));
        let out_of_range = EvalCase::from_texts("c", "d", &["1. pain", "1. ache"], 2, TaskKind::Preference);
        assert!(matches!(out_of_range, Err(EvalError::InvalidCase { .. })));
    }
}
