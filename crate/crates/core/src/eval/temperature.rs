//! Where the top-scoring samples of each case came from on the sampling
//! temperature grid.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::StepScoreVector;
use crate::scoring::{aggregate, AggregationStrategy};

const GRID_TOLERANCE: f64 = 1e-6;

/// 0.2 to 1.0 in steps of 0.2, then 1.1 to 2.0 in steps of 0.1.
pub fn default_temperature_bins() -> Vec<f64> {
    let coarse = (1..=5).map(|i| i as f64 * 0.2);
    let fine = (11..=20).map(|i| i as f64 / 10.0);
    coarse.chain(fine).collect()
}

/// Samples drawn per temperature in the default generation schedule:
/// 200 on the coarse grid and 100 on the fine grid, 2000 in total.
pub fn default_samples_per_bin(t: f64) -> usize {
    if t <= 1.0 + GRID_TOLERANCE {
        200
    } else {
        100
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureBin {
    pub temperature: f64,
    pub count: usize,
}

/// Histogram of the `top_k` highest-scoring samples per case over `bins`.
/// Each sample's temperature must lie on the grid.
pub fn temperature_histogram(
    cases: &[Vec<(f64, StepScoreVector)>],
    top_k: usize,
    strategy: AggregationStrategy,
    bins: &[f64],
) -> Result<Vec<TemperatureBin>, EvalError> {
    let mut out: Vec<TemperatureBin> = bins
        .iter()
        .map(|&temperature| TemperatureBin { temperature, count: 0 })
        .collect();
    for (case, samples) in cases.iter().enumerate() {
        if samples.len() < top_k {
            return Err(EvalError::InsufficientSamples {
                case,
                have: samples.len(),
                need: top_k,
            });
        }
        let mut scored = Vec::with_capacity(samples.len());
        for (i, (t, v)) in samples.iter().enumerate() {
            let bin = bins
                .iter()
                .position(|b| (b - t).abs() <= GRID_TOLERANCE)
                .ok_or(EvalError::TemperatureOffGrid(*t))?;
            scored.push((aggregate(v, strategy)?.value, i, bin));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, _, bin) in &scored[..top_k] {
            out[bin].count += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::StepRole;

    fn v(s: f64) -> StepScoreVector {
        StepScoreVector::from_plus(vec![s, s], vec![StepRole::Step; 2])
    }

    #[test]
    fn default_grid() {
        let b = default_temperature_bins();
        assert_eq!(b.len(), 15);
        assert!((b[0] - 0.2).abs() < 1e-12 && (b[14] - 2.0).abs() < 1e-12);
        assert_eq!(b.iter().map(|&t| default_samples_per_bin(t)).sum::<usize>(), 2000);
    }

    #[test]
    fn planted_winners_land_in_one_bin() {
        let bins = default_temperature_bins();
        let cases: Vec<Vec<(f64, StepScoreVector)>> = (0..40)
            .map(|c| {
                bins.iter()
                    .enumerate()
                    .flat_map(|(i, &t)| {
                        let s = if i == 3 { 0.9 } else { 0.1 + 0.001 * c as f64 };
                        (0..10).map(move |_| (t, v(s)))
                    })
                    .collect()
            })
            .collect();
        let h = temperature_histogram(&cases, 10, AggregationStrategy::Product, &bins).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 400);
        assert_eq!(h.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(h[3].count, 400);
    }

    #[test]
    fn short_cases_and_off_grid_temperatures_are_errors() {
        let bins = default_temperature_bins();
        let few = vec![vec![(0.2, v(0.5)); 3]];
        assert!(matches!(
            temperature_histogram(&few, 10, AggregationStrategy::Mean, &bins),
            Err(EvalError::InsufficientSamples { need: 10, have: 3, .. })
        ));
        let off = vec![vec![(0.3, v(0.5))]];
        assert!(matches!(
            temperature_histogram(&off, 1, AggregationStrategy::Mean, &bins),
            Err(EvalError::TemperatureOffGrid(_))
        ));
    }
}
