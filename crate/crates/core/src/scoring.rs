//! Note-level aggregation of step scores, Best-of-N and review selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{StepScoreVector, PROB_FLOOR};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("cannot aggregate an empty score vector")]
    EmptyScores,
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    Product,
    Last,
    Min,
    Mean,
    Median,
    Max,
    GeoMean,
    Sum,
    Threshold,
}

/// Strict cutoff for [`AggregationStrategy::Threshold`].
pub const THRESHOLD: f64 = 0.5;

impl AggregationStrategy {
    /// Table column order.
    pub const ALL: [AggregationStrategy; 9] = [
        AggregationStrategy::Product,
        AggregationStrategy::Last,
        AggregationStrategy::Min,
        AggregationStrategy::Mean,
        AggregationStrategy::Median,
        AggregationStrategy::Max,
        AggregationStrategy::GeoMean,
        AggregationStrategy::Sum,
        AggregationStrategy::Threshold,
    ];

    /// Column heading.
    pub fn title(self) -> &'static str {
        match self {
            AggregationStrategy::Product => "Product",
            AggregationStrategy::Last => "Last",
            AggregationStrategy::Min => "Min",
            AggregationStrategy::Mean => "Mean",
            AggregationStrategy::Median => "Median",
            AggregationStrategy::Max => "Max",
            AggregationStrategy::GeoMean => "Geo Mean",
            AggregationStrategy::Sum => "Sum",
            AggregationStrategy::Threshold => "Threshold",
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for AggregationStrategy {
    type Err = ScoringError;

    /// Case-insensitive; spaces, hyphens and underscores are ignored, so
    /// "Geo Mean", "geo_mean" and "geomean" are the same strategy.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        AggregationStrategy::ALL
            .into_iter()
            .find(|st| st.title().replace(' ', "").to_lowercase() == key)
            .ok_or_else(|| ScoringError::UnknownStrategy(s.to_string()))
    }
}

/// A note-level score. Product scores are log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteScore {
    pub value: f64,
    pub strategy: AggregationStrategy,
}

impl NoteScore {
    /// Orders two scores of the same strategy; `None` across strategies
    /// or when either value is NaN.
    pub fn compare(&self, other: &NoteScore) -> Option<Ordering> {
        if self.strategy != other.strategy {
            return None;
        }
        self.value.partial_cmp(&other.value)
    }
}

fn clamped_ln(s: f64) -> f64 {
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()
}

/// Aggregates raw step scores. `Last` reads the final element, which is
/// the end-of-note position in a serialized note.
pub fn aggregate_values(scores: &[f64], strategy: AggregationStrategy) -> Result<NoteScore, ScoringError> {
    let n = scores.len();
    if n == 0 {
        return Err(ScoringError::EmptyScores);
    }
    let value = match strategy {
        AggregationStrategy::Product => scores.iter().map(|&s| clamped_ln(s)).sum(),
        AggregationStrategy::Last => scores[n - 1],
        AggregationStrategy::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        AggregationStrategy::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregationStrategy::Mean => scores.iter().sum::<f64>() / n as f64,
        AggregationStrategy::Median => {
            let mut v = scores.to_vec();
            v.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        }
        AggregationStrategy::GeoMean => (scores.iter().map(|&s| clamped_ln(s)).sum::<f64>() / n as f64).exp(),
        AggregationStrategy::Sum => scores.iter().sum(),
        AggregationStrategy::Threshold => scores.iter().filter(|&&s| s > THRESHOLD).count() as f64,
    };
    Ok(NoteScore { value, strategy })
}

pub fn aggregate(scores: &StepScoreVector, strategy: AggregationStrategy) -> Result<NoteScore, ScoringError> {
    aggregate_values(&scores.scores, strategy)
}

/// Outcome-level score: the end-of-note probability.
pub fn orm_score(scores: &StepScoreVector) -> Result<NoteScore, ScoringError> {
    aggregate(scores, AggregationStrategy::Last)
}

/// Index of the highest note score; the lowest index wins ties.
pub fn best_of_n_values<S: AsRef<[f64]>>(candidates: &[S], strategy: AggregationStrategy) -> Result<usize, ScoringError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let v = aggregate_values(c.as_ref(), strategy)?.value;
        match best {
            Some((_, b)) if v <= b || v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(ScoringError::NoCandidates)
}

pub fn best_of_n(candidates: &[StepScoreVector], strategy: AggregationStrategy) -> Result<usize, ScoringError> {
    let values: Vec<&[f64]> = candidates.iter().map(|c| c.scores.as_slice()).collect();
    best_of_n_values(&values, strategy)
}

/// Prefers candidates whose every step puts more mass on "+" than "−";
/// falls back to plain Best-of-N when none qualifies.
pub fn select_for_review(candidates: &[StepScoreVector], strategy: AggregationStrategy) -> Result<usize, ScoringError> {
    let passing: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].all_steps_positive()).collect();
    if passing.is_empty() {
        return best_of_n(candidates, strategy);
    }
    let pool: Vec<&[f64]> = passing.iter().map(|&i| candidates[i].scores.as_slice()).collect();
    Ok(passing[best_of_n_values(&pool, strategy)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::StepRole;
    use proptest::prelude::*;

    fn v(scores: &[f64]) -> StepScoreVector {
        StepScoreVector::from_plus(scores.to_vec(), vec![StepRole::Step; scores.len()])
    }

    fn agg(s: &[f64], st: AggregationStrategy) -> f64 {
        aggregate_values(s, st).unwrap().value
    }

    #[test]
    fn worked_values() {
        use AggregationStrategy::*;
        assert_eq!(agg(&[1.0, 1.0, 1.0], Product), 3.0 * (1.0 - PROB_FLOOR).ln());
        assert!((agg(&[0.5, 0.5], Product).exp() - 0.25).abs() < 1e-15);
        assert_eq!(agg(&[0.6, 0.4, 0.7], Threshold), 2.0);
        assert_eq!(agg(&[0.5, 0.5, 0.51], Threshold), 1.0);
        assert_eq!(agg(&[0.2, 0.8], Median), 0.5);
        assert_eq!(agg(&[0.9, 0.1, 0.4], Median), 0.4);
        assert!((agg(&[0.25, 1.0], GeoMean) - 0.5).abs() < 1e-12);
        assert!((agg(&[0.25, 0.5], Sum) - 0.75).abs() < 1e-15);
        assert_eq!(agg(&[0.3, 0.9, 0.2], Last), 0.2);
        assert_eq!(agg(&[0.0], Product), PROB_FLOOR.ln());
        assert_eq!(aggregate_values(&[], Mean), Err(ScoringError::EmptyScores));
    }

    #[test]
    fn names_parse_case_insensitively() {
        for st in AggregationStrategy::ALL {
            assert_eq!(st.title().parse::<AggregationStrategy>().unwrap(), st);
            assert_eq!(st.title().to_uppercase().parse::<AggregationStrategy>().unwrap(), st);
        }
        assert_eq!("geo_mean".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::GeoMean);
        assert!("mode".parse::<AggregationStrategy>().is_err());
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let c = [v(&[0.5]), v(&[0.9, 0.9]), v(&[0.2]), v(&[0.9, 0.9])];
        assert_eq!(best_of_n(&c, AggregationStrategy::Mean).unwrap(), 1);
        assert_eq!(best_of_n(&[], AggregationStrategy::Mean), Err(ScoringError::NoCandidates));
    }

    #[test]
    fn review_selection_prefers_all_positive_candidates() {
        // Candidate 0 has the larger product but one step below one half.
        let c = [v(&[0.99, 0.99, 0.45]), v(&[0.6, 0.6, 0.6])];
        assert_eq!(best_of_n(&c, AggregationStrategy::Product).unwrap(), 0);
        assert_eq!(select_for_review(&c, AggregationStrategy::Product).unwrap(), 1);
        let none = [v(&[0.4, 0.9]), v(&[0.3, 0.95])];
        assert_eq!(
            select_for_review(&none, AggregationStrategy::Product).unwrap(),
            best_of_n(&none, AggregationStrategy::Product).unwrap()
        );
        let all = [v(&[0.6, 0.7]), v(&[0.9, 0.8])];
        assert_eq!(select_for_review(&all, AggregationStrategy::Sum).unwrap(), 1);
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..=12)
    }

    proptest! {
        #[test]
        fn order_free_strategies_ignore_permutation(s in scores(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut p = s.clone();
            p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for st in AggregationStrategy::ALL {
                if st == AggregationStrategy::Last {
                    continue;
                }
                let (a, b) = (agg(&s, st), agg(&p, st));
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{st}: {a} vs {b}");
            }
        }

        #[test]
        fn last_ignores_permutation_of_earlier_steps(s in scores(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut p = s.clone();
            let n = p.len();
            p[..n - 1].shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(agg(&s, AggregationStrategy::Last), agg(&p, AggregationStrategy::Last));
            prop_assert_eq!(orm_score(&v(&s)).unwrap(), aggregate(&v(&s), AggregationStrategy::Last).unwrap());
        }

        #[test]
        fn raising_one_step_never_lowers_monotone_scores(s in scores(), i in any::<prop::sample::Index>(), bump in 0.0f64..=1.0) {
            let k = i.index(s.len());
            let mut raised = s.clone();
            raised[k] = (raised[k] + bump).min(1.0);
            use AggregationStrategy::*;
            for st in [Product, Min, Mean, GeoMean, Sum, Threshold] {
                prop_assert!(agg(&raised, st) >= agg(&s, st) - 1e-12, "{st}");
            }
        }

        #[test]
        fn best_of_n_is_an_argmax(c in prop::collection::vec(scores(), 1..8)) {
            for st in AggregationStrategy::ALL {
                let w = best_of_n_values(&c, st).unwrap();
                let vals: Vec<f64> = c.iter().map(|x| agg(x, st)).collect();
                prop_assert!(vals.iter().all(|&x| x <= vals[w]));
                prop_assert!(vals[..w].iter().all(|&x| x < vals[w]));
            }
        }
    }
}
