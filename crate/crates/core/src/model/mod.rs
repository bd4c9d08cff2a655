//! Scorer backends: the trainable toy PRM and a label-reading oracle.

pub mod transformer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::TokenStream;
use crate::corruption::case_seed;
use crate::note::{render_note, ScoreLabel, StepRole, StructuredNote};

pub use transformer::{
    grad_check, train, train_pairs, ModelConfig, Optimizer, ToyPrm, TrainConfig, TrainReport, PROB_FLOOR,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stream of {length} tokens exceeds the context of {context}")]
    ContextOverflow { length: usize, context: usize },
    #[error("non-finite loss {loss} at step {step} ({detail})")]
    NonFiniteLoss { step: usize, loss: f64, detail: String },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("scorer input: {0}")]
    Input(String),
}

impl From<crate::corpus::CorpusError> for ModelError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        ModelError::Input(e.to_string())
    }
}

/// How p("+") is read from the output distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    /// Softmax mass of "+" over the whole vocabulary.
    #[default]
    Raw,
    /// p("+") / (p("+") + p("−")).
    TwoWay,
}

/// Per-step "+" probabilities in stream order, with the matching "−"
/// probabilities used by the review-selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScoreVector {
    pub scores: Vec<f64>,
    pub minus: Vec<f64>,
    pub roles: Vec<StepRole>,
}

impl StepScoreVector {
    /// Scores with "−" mass taken as the complement.
    pub fn from_plus(scores: Vec<f64>, roles: Vec<StepRole>) -> Self {
        let minus = scores.iter().map(|s| 1.0 - s).collect();
        StepScoreVector { scores, minus, roles }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// True when every step puts more mass on "+" than on "−".
    pub fn all_steps_positive(&self) -> bool {
        self.scores.iter().zip(&self.minus).all(|(p, m)| p > m)
    }
}

/// What a scorer sees for one candidate note.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub case_id: &'a str,
    /// Carries true labels when they are known; only the oracle reads them.
    pub note: &'a StructuredNote,
    /// Placeholder-masked stream.
    pub stream: &'a TokenStream,
}

pub trait ScorerBackend {
    fn name(&self) -> String;
    fn score(&self, input: &ScoringInput<'_>) -> Result<StepScoreVector, ModelError>;
}

pub struct PrmScorer {
    pub model: ToyPrm,
    pub normalization: ScoreNormalization,
    pub label: String,
}

impl PrmScorer {
    pub fn new(model: ToyPrm, normalization: ScoreNormalization) -> Self {
        PrmScorer {
            model,
            normalization,
            label: "toy-prm".into(),
        }
    }
}

impl ScorerBackend for PrmScorer {
    fn name(&self) -> String {
        format!("{} ({:?})", self.label, self.normalization)
    }

    fn score(&self, input: &ScoringInput<'_>) -> Result<StepScoreVector, ModelError> {
        self.model.forward_step_scores(input.stream, self.normalization)
    }
}

/// Ground-truth scores: "+" positions get `1 − |ε|`, "−" positions `|ε|`,
/// with ε drawn from N(0, noise) and results clamped to [0, 1].
pub fn oracle_scores(note: &StructuredNote, noise: f64, seed: u64) -> StepScoreVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise"));
    let (roles, scores): (Vec<StepRole>, Vec<f64>) = note
        .labels()
        .into_iter()
        .map(|(role, label)| {
            let eps = normal.as_ref().map_or(0.0, |n| n.sample(&mut rng)).abs();
            let s = match label {
                ScoreLabel::Minus => eps,
                _ => 1.0 - eps,
            };
            (role, s.clamp(0.0, 1.0))
        })
        .unzip();
    StepScoreVector::from_plus(scores, roles)
}

/// Reads the labels carried by the scoring input. With `inverted`, every
/// score is replaced by its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScorer {
    pub noise: f64,
    pub seed: u64,
    pub inverted: bool,
}

impl OracleScorer {
    pub fn exact() -> Self {
        OracleScorer {
            noise: 0.0,
            seed: 0,
            inverted: false,
        }
    }

    pub fn noisy(noise: f64, seed: u64) -> Self {
        OracleScorer {
            noise,
            seed,
            inverted: false,
        }
    }

    pub fn inverted() -> Self {
        OracleScorer {
            noise: 0.0,
            seed: 0,
            inverted: true,
        }
    }
}

impl ScorerBackend for OracleScorer {
    fn name(&self) -> String {
        let kind = if self.inverted { "inverted-oracle" } else { "oracle" };
        format!("{kind} (noise {})", self.noise)
    }

    fn score(&self, input: &ScoringInput<'_>) -> Result<StepScoreVector, ModelError> {
        let seed = case_seed(self.seed, &format!("{}\n{}", input.case_id, render_note(input.note)));
        let mut v = oracle_scores(input.note, self.noise, seed);
        if self.inverted {
            v = StepScoreVector::from_plus(v.scores.iter().map(|s| 1.0 - s).collect(), v.roles);
        }
        if v.len() != input.stream.score_positions().len() {
            return Err(ModelError::Input("note and stream disagree on the number of steps".into()));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::StructuredNote;

    fn note() -> StructuredNote {
        let mut n = StructuredNote::from_parts([("a", vec!["b".to_string(), "c".to_string()])]);
        n.problems[0].steps[1].label = ScoreLabel::Minus;
        n.sync_end_of_note();
        n
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let v = oracle_scores(&note(), 0.0, 1);
        assert_eq!(v.scores, vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(v.roles.len(), 6);
    }

    #[test]
    fn noisy_oracle_stays_in_range_and_is_seeded() {
        let a = oracle_scores(&note(), 0.3, 9);
        assert_eq!(a, oracle_scores(&note(), 0.3, 9));
        assert!(a.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
