//! Nash-Sutcliffe efficiency, the evaluation metric for simulated discharge.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {simulated} simulated vs {observed} observed values")]
    LengthMismatch { simulated: usize, observed: usize },
    #[error("need at least 2 values to compute NSE, got {0}")]
    TooShort(usize),
    #[error("observed discharge is constant; NSE denominator is zero")]
    ConstantObservations,
}

/// Nash-Sutcliffe efficiency value, guaranteed finite and ≤ 1.
///
/// 1 is a perfect simulation, 0 is as good as predicting the observed mean,
/// negative values are worse than the observed mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NseValue(f64);

impl NseValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Nash-Sutcliffe efficiency of `simulated` against `observed` discharge,
/// both in physical units (mm/day):
///
/// `NSE = 1 − Σ(sim − obs)² / Σ(obs − mean(obs))²`
///
/// The sums run over the full sequence as one period.
pub fn nse(simulated: &[f64], observed: &[f64]) -> Result<NseValue, MetricError> {
    if simulated.len() != observed.len() {
        return Err(MetricError::LengthMismatch {
            simulated: simulated.len(),
            observed: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Err(MetricError::TooShort(observed.len()));
    }

    let mean_obs = observed.iter().sum::<f64>() / observed.len() as f64;
    let denominator: f64 = observed.iter().map(|&o| (o - mean_obs).powi(2)).sum();
    if denominator == 0.0 {
        return Err(MetricError::ConstantObservations);
    }

    let numerator: f64 = simulated
        .iter()
        .zip(observed)
        .map(|(&s, &o)| (s - o).powi(2))
        .sum();

    Ok(NseValue(1.0 - numerator / denominator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_simulation_is_exactly_one() {
        let obs = vec![0.3, 1.7, 4.2, 0.9];
        assert_eq!(nse(&obs, &obs).unwrap().value(), 1.0);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let obs = vec![1.0, 2.0, 3.0, 4.0];
        let mean = 2.5;
        let sim = vec![mean; 4];
        assert!(nse(&sim, &obs).unwrap().value().abs() < 1e-12);
    }

    #[test]
    fn hand_case_scores_minus_one() {
        // numerator (5-3)² = 4, denominator (1-2)² + (3-2)² = 2 → 1 - 2 = -1
        let nse = nse(&[1.0, 2.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((nse.value() - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_observations_rejected() {
        assert_eq!(
            nse(&[1.0, 2.0], &[3.0, 3.0]),
            Err(MetricError::ConstantObservations)
        );
    }

    #[test]
    fn length_mismatch_rejected() {
        assert_eq!(
            nse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch {
                simulated: 1,
                observed: 2
            })
        );
    }

    #[test]
    fn single_pair_rejected() {
        assert_eq!(nse(&[1.0], &[1.0]), Err(MetricError::TooShort(1)));
    }

    proptest! {
        #[test]
        fn never_exceeds_one(
            pairs in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..50)
        ) {
            let (sim, obs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(v) = nse(&sim, &obs) {
                prop_assert!(v.value() <= 1.0);
                // equality only for a perfect simulation
                if v.value() == 1.0 {
                    prop_assert!(sim.iter().zip(&obs).all(|(s, o)| s == o));
                }
            }
        }

        #[test]
        fn invariant_under_joint_permutation(
            pairs in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..30),
            seed in any::<u64>(),
        ) {
            let (sim, obs): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            prop_assume!(obs.iter().any(|&o| o != obs[0]));

            // deterministic permutation derived from the seed
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            let mut state = seed;
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let sim_p: Vec<f64> = order.iter().map(|&i| sim[i]).collect();
            let obs_p: Vec<f64> = order.iter().map(|&i| obs[i]).collect();

            let a = nse(&sim, &obs).unwrap().value();
            let b = nse(&sim_p, &obs_p).unwrap().value();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn constant_offset_to_unbiased_simulation_strictly_decreases(
            pairs in proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..30),
            offset in prop_oneof![-10.0..-0.01f64, 0.01..10.0f64],
        ) {
            // Σ(s+c−o)² = Σ(s−o)² + 2cΣ(s−o) + nc², so the penalty nc² is only
            // guaranteed to dominate when the simulation carries no bias;
            // recentre sim onto the observed mean before applying the offset.
            let (raw, obs): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            prop_assume!(obs.iter().any(|&o| o != obs[0]));
            let bias = raw.iter().sum::<f64>() / raw.len() as f64
                - obs.iter().sum::<f64>() / obs.len() as f64;
            let sim: Vec<f64> = raw.iter().map(|s| s - bias).collect();
            let shifted: Vec<f64> = sim.iter().map(|s| s + offset).collect();

            let base = nse(&sim, &obs).unwrap().value();
            let moved = nse(&shifted, &obs).unwrap().value();
            prop_assert!(moved < base);
        }
    }
}
