//! Integrated-gradients attribution of a scalar target neuron to the input
//! sequence.
//!
//! The attribution of input entry (t, i) is the right-endpoint Riemann
//! approximation of the path integral from a baseline x′ to the input x:
//!
//! ```text
//! IG_{t,i} = (x_{t,i} − x′_{t,i}) / m · Σ_{k=1..m} ∂F(x̃)/∂x̃_{t,i},
//!            x̃ = x′ + (k/m)(x − x′)
//! ```
//!
//! Inputs are attributed in normalized space, the model's native domain; the
//! default all-zeros baseline therefore means "climatological training-period
//! mean inputs" in physical units.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::InputWindow;
use crate::grad::{grad_wrt_inputs, AttributionTarget, GradError};
use crate::lstm::{forward, ModelParams};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Model(#[from] crate::lstm::ModelError),
    #[error("baseline shape {baseline:?} does not match input shape {input:?}")]
    BaselineShapeMismatch {
        baseline: (usize, usize),
        input: (usize, usize),
    },
    #[error("step count m must be at least 1")]
    ZeroSteps,
}

/// The reference input x′ the attribution path starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline(pub Array2<f64>);

impl Baseline {
    /// The all-zeros sequence in normalized space (the default).
    pub fn zeros(seq_len: usize, input_dim: usize) -> Self {
        Self(Array2::zeros((seq_len, input_dim)))
    }

    pub fn kind(&self) -> BaselineKind {
        if self.0.iter().all(|&v| v == 0.0) {
            BaselineKind::Zeros
        } else {
            BaselineKind::Custom
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Zeros,
    Custom,
}

/// Integrated-gradients values for one input window and one target neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    /// seq_len × input_dim attribution values.
    pub values: Array2<f64>,
    pub target: AttributionTarget,
    pub baseline: BaselineKind,
    /// Number of Riemann steps used.
    pub m: usize,
    /// |Σ IG − (F(x) − F(x′))| at construction time.
    pub completeness_residual: f64,
}

impl AttributionMatrix {
    /// Signed per-timestep attribution, summed across the input variables.
    pub fn per_step_sums(&self) -> Vec<f64> {
        self.values.rows().into_iter().map(|r| r.sum()).collect()
    }
}

/// Integrated gradients for an arbitrary differentiable scalar target,
/// supplied as a gradient closure plus a value closure. The m gradient
/// evaluations run in parallel; the sum is folded in ascending k for
/// reproducibility.
pub fn integrated_gradients_fn<G, V>(
    x: &Array2<f64>,
    baseline: &Baseline,
    target: AttributionTarget,
    m: usize,
    grad_fn: G,
    value_fn: V,
) -> Result<AttributionMatrix, AttributionError>
where
    G: Fn(&Array2<f64>) -> Result<Array2<f64>, GradError> + Sync,
    V: Fn(&Array2<f64>) -> Result<f64, GradError>,
{
    if m == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    if baseline.0.dim() != x.dim() {
        return Err(AttributionError::BaselineShapeMismatch {
            baseline: baseline.0.dim(),
            input: x.dim(),
        });
    }

    let delta = x - &baseline.0;
    let grads: Result<Vec<Array2<f64>>, GradError> = (1..=m)
        .into_par_iter()
        .map(|k| {
            let alpha = k as f64 / m as f64;
            let scaled = &baseline.0 + &(alpha * &delta);
            grad_fn(&scaled)
        })
        .collect();
    let grads = grads?;

    let mut grad_sum = Array2::zeros(x.raw_dim());
    for g in &grads {
        grad_sum += g;
    }
    let values = delta * grad_sum / m as f64;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AttributionError::Grad(GradError::NonFiniteGradient));
    }

    let delta_f = value_fn(x)? - value_fn(&baseline.0)?;
    let completeness_residual = (values.sum() - delta_f).abs();

    Ok(AttributionMatrix {
        values,
        target,
        baseline: baseline.kind(),
        m,
        completeness_residual,
    })
}

/// Integrated gradients of the LSTM output neuron or a final-timestep memory
/// cell, with gradients from the BPTT engine.
pub fn integrated_gradients(
    params: &ModelParams,
    x: &Array2<f64>,
    baseline: &Baseline,
    target: AttributionTarget,
    m: usize,
) -> Result<AttributionMatrix, AttributionError> {
    target.check(params.hidden())?;
    integrated_gradients_fn(
        x,
        baseline,
        target,
        m,
        |scaled| grad_wrt_inputs(params, scaled, target),
        |inputs| Ok(target.value(&forward(inputs, params)?)),
    )
}

/// Recomputes the completeness residual |Σ IG − (F(x) − F(x′))| of an
/// attribution from fresh forward passes.
pub fn completeness_residual(
    attr: &AttributionMatrix,
    params: &ModelParams,
    x: &Array2<f64>,
    baseline: &Baseline,
    target: AttributionTarget,
) -> Result<f64, AttributionError> {
    let f_x = target.value(&forward(x, params)?);
    let f_base = target.value(&forward(&baseline.0, params)?);
    Ok((attr.values.sum() - (f_x - f_base)).abs())
}

/// Attribution CSV: `t,date,precip,srad,tmin,tmax,vp`, one row per timestep,
/// t running 1..=seq_len with its calendar date.
pub fn attribution_to_csv(attr: &AttributionMatrix, window: &InputWindow) -> String {
    let mut out = String::from("t,date,precip,srad,tmin,tmax,vp\n");
    for (t, row) in attr.values.rows().into_iter().enumerate() {
        out.push_str(&format!("{},{}", t + 1, window.date_of_row(t)));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::init_params;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::distr::{Distribution, Uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(lo, hi).unwrap();
        Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
    }

    /// IG of a linear target F(x) = Σ w ⊙ x via the generic path.
    fn linear_ig(w: &Array2<f64>, x: &Array2<f64>, m: usize) -> AttributionMatrix {
        integrated_gradients_fn(
            x,
            &Baseline::zeros(x.nrows(), x.ncols()),
            AttributionTarget::Output,
            m,
            |_| Ok(w.clone()),
            |p| Ok((w * p).sum()),
        )
        .unwrap()
    }

    #[test]
    fn linear_target_is_exact_for_any_step_count() {
        let w = random_matrix(1, 12, 5, -2.0, 2.0);
        let x = random_matrix(2, 12, 5, -3.0, 3.0);
        let expected = &w * &x;
        for m in [1usize, 10, 1000] {
            let attr = linear_ig(&w, &x, m);
            for (a, e) in attr.values.iter().zip(expected.iter()) {
                assert!((a - e).abs() <= 1e-12, "m={m}: {a} vs {e}");
            }
            assert!(attr.completeness_residual <= 1e-12);
        }
    }

    #[test]
    fn quadratic_scalar_matches_closed_form() {
        // F(x) = x², x = 1, x′ = 0, m = 1000:
        // IG = (1/m) Σ 2k/m = 2·(m(m+1)/2)/m² = 1.001
        let x = Array2::from_elem((1, 1), 1.0);
        let attr = integrated_gradients_fn(
            &x,
            &Baseline::zeros(1, 1),
            AttributionTarget::Output,
            1000,
            |p| Ok(2.0 * p),
            |p| Ok(p[[0, 0]] * p[[0, 0]]),
        )
        .unwrap();
        assert!((attr.values[[0, 0]] - 1.001).abs() < 1e-12);
        // residual is exactly the overshoot of the right-endpoint rule
        assert!((attr.completeness_residual - 0.001).abs() < 1e-12);
    }

    #[test]
    fn input_equal_to_baseline_attributes_nothing() {
        let params = init_params(3, 5, 6);
        let baseline = Baseline::zeros(30, 5);
        let attr = integrated_gradients(
            &params,
            &baseline.0.clone(),
            &baseline,
            AttributionTarget::Output,
            10,
        )
        .unwrap();
        assert!(attr.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_matching_entries_are_exactly_zero() {
        let params = init_params(4, 5, 6);
        let mut x = random_matrix(5, 25, 5, -1.0, 1.0);
        // zero out a scattering of entries; zero baseline ⇒ x − x′ = 0 there
        for t in (0..25).step_by(3) {
            x[[t, 1]] = 0.0;
            x[[t, 4]] = 0.0;
        }
        let attr = integrated_gradients(
            &params,
            &x,
            &Baseline::zeros(25, 5),
            AttributionTarget::Output,
            50,
        )
        .unwrap();
        for t in (0..25).step_by(3) {
            assert_eq!(attr.values[[t, 1]], 0.0);
            assert_eq!(attr.values[[t, 4]], 0.0);
        }
    }

    #[test]
    fn lstm_wrapper_equals_generic_path() {
        let params = init_params(6, 5, 6);
        let x = random_matrix(7, 20, 5, -1.5, 1.5);
        let baseline = Baseline::zeros(20, 5);
        let target = AttributionTarget::Cell(2);
        let a = integrated_gradients(&params, &x, &baseline, target, 37).unwrap();
        let b = integrated_gradients_fn(
            &x,
            &baseline,
            target,
            37,
            |scaled| crate::grad::grad_wrt_inputs(&params, scaled, target),
            |inputs| Ok(target.value(&crate::lstm::forward(inputs, &params).unwrap())),
        )
        .unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn residual_shrinks_with_more_steps_on_smooth_models() {
        for seed in 0..4u64 {
            let params = init_params(seed, 5, 8);
            let x = random_matrix(seed ^ 0xf00d, 30, 5, -1.5, 1.5);
            let baseline = Baseline::zeros(30, 5);
            let residual = |m: usize| {
                integrated_gradients(&params, &x, &baseline, AttributionTarget::Output, m)
                    .unwrap()
                    .completeness_residual
            };
            let (r10, r100, r1000) = (residual(10), residual(100), residual(1000));
            assert!(r100 <= r10 + 1e-9, "seed {seed}: {r100} vs {r10}");
            assert!(r1000 <= r100 + 1e-9, "seed {seed}: {r1000} vs {r100}");
        }
    }

    #[test]
    fn recomputed_residual_matches_stored() {
        let params = init_params(9, 5, 6);
        let x = random_matrix(10, 15, 5, -1.0, 1.0);
        let baseline = Baseline::zeros(15, 5);
        let target = AttributionTarget::Output;
        let attr = integrated_gradients(&params, &x, &baseline, target, 100).unwrap();
        let recomputed = completeness_residual(&attr, &params, &x, &baseline, target).unwrap();
        assert!((attr.completeness_residual - recomputed).abs() < 1e-14);
    }

    #[test]
    fn zero_steps_rejected() {
        let params = init_params(0, 5, 4);
        let x = random_matrix(0, 5, 5, -1.0, 1.0);
        assert!(matches!(
            integrated_gradients(&params, &x, &Baseline::zeros(5, 5), AttributionTarget::Output, 0),
            Err(AttributionError::ZeroSteps)
        ));
    }

    #[test]
    fn mismatched_baseline_rejected() {
        let params = init_params(0, 5, 4);
        let x = random_matrix(0, 5, 5, -1.0, 1.0);
        assert!(matches!(
            integrated_gradients(&params, &x, &Baseline::zeros(6, 5), AttributionTarget::Output, 5),
            Err(AttributionError::BaselineShapeMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_exactness_property(seed in any::<u64>(), m in 1usize..64) {
            let w = random_matrix(seed, 6, 5, -2.0, 2.0);
            let x = random_matrix(seed ^ 1, 6, 5, -2.0, 2.0);
            let attr = linear_ig(&w, &x, m);
            let expected = &w * &x;
            for (a, e) in attr.values.iter().zip(expected.iter()) {
                prop_assert!((a - e).abs() <= 1e-12);
            }
        }
    }
}
