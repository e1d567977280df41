//! Exact reverse-mode gradients through the unrolled sequence (BPTT).
//!
//! Two scalar target families are supported: the dense-head output `y` and a
//! single memory cell `c_j` at the final timestep. Gradients are taken with
//! respect to every input entry (for attribution) and with respect to every
//! parameter (for training), by explicit reverse accumulation over the cached
//! [`ForwardTrace`] — no autodiff tape, the shapes are small and fixed.

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Sample;
use crate::lstm::{forward, ForwardTrace, GateParams, ModelError, ModelParams, ParamGradient};

#[derive(Debug, Error)]
pub enum GradError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("cell index {index} out of range for {hidden} hidden units")]
    CellIndexOutOfRange { index: usize, hidden: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// The scalar neuron a gradient or attribution refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributionTarget {
    /// The dense-head output.
    Output,
    /// Memory cell `j` at the final timestep.
    Cell(usize),
}

impl std::fmt::Display for AttributionTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttributionTarget::Output => write!(f, "output"),
            AttributionTarget::Cell(j) => write!(f, "cell{j}"),
        }
    }
}

impl AttributionTarget {
    pub fn check(&self, hidden: usize) -> Result<(), GradError> {
        if let AttributionTarget::Cell(j) = self {
            if *j >= hidden {
                return Err(GradError::CellIndexOutOfRange {
                    index: *j,
                    hidden,
                });
            }
        }
        Ok(())
    }

    /// Reads the target's value off a forward trace.
    pub fn value(&self, trace: &ForwardTrace) -> f64 {
        match self {
            AttributionTarget::Output => trace.prediction,
            AttributionTarget::Cell(j) => trace.cell[[trace.seq_len() - 1, *j]],
        }
    }
}

/// Scratch buffers reused across the backward loop.
struct Backward<'a> {
    params: &'a ModelParams,
    trace: &'a ForwardTrace,
    dh: Array1<f64>,
    dc: Array1<f64>,
    da_i: Array1<f64>,
    da_f: Array1<f64>,
    da_g: Array1<f64>,
    da_o: Array1<f64>,
    dh_prev: Array1<f64>,
}

impl<'a> Backward<'a> {
    fn new(params: &'a ModelParams, trace: &'a ForwardTrace) -> Self {
        let h = params.hidden();
        Self {
            params,
            trace,
            dh: Array1::zeros(h),
            dc: Array1::zeros(h),
            da_i: Array1::zeros(h),
            da_f: Array1::zeros(h),
            da_g: Array1::zeros(h),
            da_o: Array1::zeros(h),
            dh_prev: Array1::zeros(h),
        }
    }

    /// Reverse sweep. `seed` scales the target gradient (1 for plain
    /// derivatives, dL/dy for loss gradients). Returns input gradients
    /// and/or accumulates parameter gradients, as requested.
    fn run(
        &mut self,
        target: AttributionTarget,
        seed: f64,
        mut input_grads: Option<&mut Array2<f64>>,
        mut param_grads: Option<&mut ParamGradient>,
    ) {
        let seq_len = self.trace.seq_len();
        let hidden = self.params.hidden();
        let last = seq_len - 1;

        self.dh.fill(0.0);
        self.dc.fill(0.0);
        match target {
            AttributionTarget::Output => {
                // y = w_d · h_T + b_d
                self.dh.scaled_add(seed, &self.params.dense_w);
                if let Some(pg) = param_grads.as_deref_mut() {
                    pg.dense_w.scaled_add(seed, &self.trace.hidden.row(last));
                    pg.dense_b += seed;
                }
            }
            AttributionTarget::Cell(j) => {
                self.dc[j] = seed;
            }
        }

        for t in (0..seq_len).rev() {
            let i = self.trace.gate_i.row(t);
            let f = self.trace.gate_f.row(t);
            let g = self.trace.gate_g.row(t);
            let o = self.trace.gate_o.row(t);
            let c = self.trace.cell.row(t);

            for k in 0..hidden {
                let tanh_c = c[k].tanh();
                // h_t = o ⊙ tanh(c_t)
                self.da_o[k] = self.dh[k] * tanh_c * o[k] * (1.0 - o[k]);
                self.dc[k] += self.dh[k] * o[k] * (1.0 - tanh_c * tanh_c);
                // c_t = f ⊙ c_{t−1} + i ⊙ g
                let c_prev = if t == 0 { 0.0 } else { self.trace.cell[[t - 1, k]] };
                self.da_f[k] = self.dc[k] * c_prev * f[k] * (1.0 - f[k]);
                self.da_i[k] = self.dc[k] * g[k] * i[k] * (1.0 - i[k]);
                self.da_g[k] = self.dc[k] * i[k] * (1.0 - g[k] * g[k]);
            }

            let gate_das = [
                (&self.params.input_gate, &self.da_i),
                (&self.params.forget_gate, &self.da_f),
                (&self.params.cell_gate, &self.da_g),
                (&self.params.output_gate, &self.da_o),
            ];

            if let Some(ig) = input_grads.as_deref_mut() {
                let mut row = ig.row_mut(t);
                for (gate, da) in gate_das {
                    general_mat_vec_mul(1.0, &gate.w.t(), da, 1.0, &mut row);
                }
            }

            self.dh_prev.fill(0.0);
            for (gate, da) in gate_das {
                general_mat_vec_mul(1.0, &gate.u.t(), da, 1.0, &mut self.dh_prev);
            }

            if let Some(pg) = param_grads.as_deref_mut() {
                let x = self.trace.inputs.row(t);
                let h_prev = if t == 0 {
                    None
                } else {
                    Some(self.trace.hidden.row(t - 1))
                };
                let grad_gates: [(&mut GateParams, &Array1<f64>); 4] = [
                    (&mut pg.input_gate, &self.da_i),
                    (&mut pg.forget_gate, &self.da_f),
                    (&mut pg.cell_gate, &self.da_g),
                    (&mut pg.output_gate, &self.da_o),
                ];
                for (gate, da) in grad_gates {
                    for (j, &a) in da.iter().enumerate() {
                        gate.w.row_mut(j).scaled_add(a, &x);
                        if let Some(hp) = h_prev {
                            gate.u.row_mut(j).scaled_add(a, &hp);
                        }
                        gate.b[j] += a;
                    }
                }
            }

            std::mem::swap(&mut self.dh, &mut self.dh_prev);
            // dc_{t−1} = dc_t ⊙ f_t
            for k in 0..hidden {
                self.dc[k] *= f[k];
            }
        }
    }
}

/// Exact derivative of the target scalar with respect to every input entry,
/// as a seq_len × input_dim matrix.
pub fn grad_wrt_inputs(
    params: &ModelParams,
    inputs: &Array2<f64>,
    target: AttributionTarget,
) -> Result<Array2<f64>, GradError> {
    target.check(params.hidden())?;
    let trace = forward(inputs, params)?;
    grad_wrt_inputs_traced(params, &trace, target)
}

/// Same as [`grad_wrt_inputs`] but reuses a forward trace, also returning
/// nothing new; the target value can be read from the trace.
pub fn grad_wrt_inputs_traced(
    params: &ModelParams,
    trace: &ForwardTrace,
    target: AttributionTarget,
) -> Result<Array2<f64>, GradError> {
    target.check(params.hidden())?;
    let mut grads = Array2::zeros(trace.inputs.raw_dim());
    Backward::new(params, trace).run(target, 1.0, Some(&mut grads), None);
    if grads.iter().any(|v| !v.is_finite()) {
        return Err(GradError::NonFiniteGradient);
    }
    Ok(grads)
}

/// Mean squared error over a batch.
pub fn batch_mse(params: &ModelParams, samples: &[Sample]) -> Result<f64, GradError> {
    if samples.is_empty() {
        return Err(GradError::EmptyBatch);
    }
    let se: Result<Vec<f64>, ModelError> = samples
        .par_iter()
        .map(|s| forward(s.inputs(), params).map(|t| (t.prediction - s.target).powi(2)))
        .collect();
    Ok(se?.iter().sum::<f64>() / samples.len() as f64)
}

/// Loss and parameter gradient of batch-mean squared error. Per-sample
/// passes run in parallel; the reduction folds in ascending sample order so
/// results are bit-reproducible.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    samples: &[Sample],
) -> Result<(f64, ParamGradient), GradError> {
    if samples.is_empty() {
        return Err(GradError::EmptyBatch);
    }
    let per_sample: Result<Vec<(f64, ParamGradient)>, GradError> = samples
        .par_iter()
        .map(|s| sample_loss_and_grad(params, s))
        .collect();
    let per_sample = per_sample?;

    let scale = 1.0 / samples.len() as f64;
    let mut grad = ModelParams::zeros(params.input_dim(), params.hidden());
    let mut loss = 0.0;
    for (sq_err, g) in &per_sample {
        loss += sq_err * scale;
        grad.scaled_add_assign(scale, g);
    }
    if !loss.is_finite() || !grad.is_finite() {
        return Err(GradError::NonFiniteGradient);
    }
    Ok((loss, grad))
}

/// Squared error and its parameter gradient for one sample.
fn sample_loss_and_grad(
    params: &ModelParams,
    sample: &Sample,
) -> Result<(f64, ParamGradient), GradError> {
    let trace = forward(sample.inputs(), params)?;
    let residual = trace.prediction - sample.target;
    let mut grad = ModelParams::zeros(params.input_dim(), params.hidden());
    Backward::new(params, &trace).run(
        AttributionTarget::Output,
        2.0 * residual,
        None,
        Some(&mut grad),
    );
    Ok((residual * residual, grad))
}

/// Gradient of batch-mean squared error with respect to every parameter.
pub fn grad_wrt_params(
    params: &ModelParams,
    samples: &[Sample],
) -> Result<ParamGradient, GradError> {
    batch_loss_and_grad(params, samples).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InputWindow;
    use crate::lstm::init_params;
    use chrono::NaiveDate;
    use ndarray::Array2;
    use rand::distr::{Distribution, Uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_inputs(seed: u64, seq_len: usize, input_dim: usize) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-2.0, 2.0).unwrap();
        Array2::from_shape_fn((seq_len, input_dim), |_| dist.sample(&mut rng))
    }

    fn sample_from(inputs: Array2<f64>, target: f64) -> Sample {
        Sample {
            window: InputWindow {
                inputs,
                prediction_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            },
            target,
        }
    }

    /// Independent oracle: the target value via a plain forward pass.
    fn target_value(params: &ModelParams, inputs: &Array2<f64>, target: AttributionTarget) -> f64 {
        target.value(&forward(inputs, params).unwrap())
    }

    /// Independent oracle: central finite differences over every input entry.
    fn fd_input_grad(
        params: &ModelParams,
        inputs: &Array2<f64>,
        target: AttributionTarget,
        eps: f64,
    ) -> Array2<f64> {
        let mut grad = Array2::zeros(inputs.raw_dim());
        let mut probe = inputs.clone();
        for idx in 0..inputs.len() {
            let (t, i) = (idx / inputs.ncols(), idx % inputs.ncols());
            let orig = probe[[t, i]];
            probe[[t, i]] = orig + eps;
            let plus = target_value(params, &probe, target);
            probe[[t, i]] = orig - eps;
            let minus = target_value(params, &probe, target);
            probe[[t, i]] = orig;
            grad[[t, i]] = (plus - minus) / (2.0 * eps);
        }
        grad
    }

    /// Independent oracle: central finite differences over every parameter.
    fn fd_param_grad(params: &ModelParams, samples: &[Sample], eps: f64) -> Vec<f64> {
        let flat = params.flatten();
        let (d, h) = (params.input_dim(), params.hidden());
        (0..flat.len())
            .map(|k| {
                let mut probe = flat.clone();
                probe[k] = flat[k] + eps;
                let plus = batch_mse(&ModelParams::from_flat(d, h, &probe), samples).unwrap();
                probe[k] = flat[k] - eps;
                let minus = batch_mse(&ModelParams::from_flat(d, h, &probe), samples).unwrap();
                (plus - minus) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(a: f64, b: f64, rel: f64, abs_floor: f64, context: &str) {
        let tol = abs_floor.max(rel * a.abs().max(b.abs()));
        assert!(
            (a - b).abs() <= tol,
            "{context}: {a} vs {b} (diff {}, tol {tol})",
            (a - b).abs()
        );
    }

    #[test]
    fn zero_params_give_zero_input_gradient() {
        let params = ModelParams::zeros(5, 10);
        let grads =
            grad_wrt_inputs(&params, &random_inputs(0, 40, 5), AttributionTarget::Output).unwrap();
        assert!(grads.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradients_match_finite_differences_for_output_target() {
        for seed in 0..5u64 {
            let params = init_params(seed, 5, 6);
            let inputs = random_inputs(seed ^ 0x5eed, 20, 5);
            let exact = grad_wrt_inputs(&params, &inputs, AttributionTarget::Output).unwrap();
            let approx = fd_input_grad(&params, &inputs, AttributionTarget::Output, 1e-5);
            for (idx, (a, b)) in exact.iter().zip(approx.iter()).enumerate() {
                assert_close(*a, *b, 1e-5, 1e-8, &format!("seed {seed} entry {idx}"));
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences_for_cell_target() {
        for seed in 0..5u64 {
            let params = init_params(seed.wrapping_add(100), 5, 6);
            let inputs = random_inputs(seed ^ 0xce11, 20, 5);
            let j = (seed as usize) % 6;
            let target = AttributionTarget::Cell(j);
            let exact = grad_wrt_inputs(&params, &inputs, target).unwrap();
            let approx = fd_input_grad(&params, &inputs, target, 1e-5);
            for (idx, (a, b)) in exact.iter().zip(approx.iter()).enumerate() {
                assert_close(*a, *b, 1e-5, 1e-8, &format!("seed {seed} cell {j} entry {idx}"));
            }
        }
    }

    #[test]
    fn perfect_predictions_give_zero_param_gradient() {
        // zero params predict 0 for any input; make the targets 0 too
        let params = ModelParams::zeros(5, 4);
        let samples: Vec<Sample> = (0..3)
            .map(|k| sample_from(random_inputs(k, 15, 5), 0.0))
            .collect();
        let grad = grad_wrt_params(&params, &samples).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn param_gradients_match_finite_differences_on_tiny_model() {
        let params = init_params(7, 5, 2);
        let samples: Vec<Sample> = (0..3)
            .map(|k| sample_from(random_inputs(200 + k, 10, 5), 0.3 * k as f64 - 0.2))
            .collect();
        let (_, exact) = batch_loss_and_grad(&params, &samples).unwrap();
        let approx = fd_param_grad(&params, &samples, 1e-5);
        for (idx, (a, b)) in exact.flatten().iter().zip(approx.iter()).enumerate() {
            assert_close(*a, *b, 1e-5, 1e-8, &format!("param {idx}"));
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let params = init_params(31, 5, 4);
        let samples: Vec<Sample> = (0..4)
            .map(|k| sample_from(random_inputs(300 + k, 12, 5), 0.1 * k as f64))
            .collect();
        let batch = grad_wrt_params(&params, &samples).unwrap();

        let mut mean = ModelParams::zeros(5, 4);
        for s in &samples {
            let single = grad_wrt_params(&params, std::slice::from_ref(s)).unwrap();
            mean.scaled_add_assign(1.0 / samples.len() as f64, &single);
        }
        for (a, b) in batch.iter().zip(mean.iter()) {
            assert_close(*a, *b, 1e-12, 1e-15, "batch vs mean");
        }
    }

    #[test]
    fn gradient_locality_with_shut_forget_gates() {
        // U = 0 removes hidden-state recurrence; forget bias −100 kills the
        // cell path, so only the final step can influence the output.
        let mut params = init_params(5, 5, 6);
        for gate in [
            &mut params.input_gate,
            &mut params.forget_gate,
            &mut params.cell_gate,
            &mut params.output_gate,
        ] {
            gate.u.fill(0.0);
        }
        params.forget_gate.b.fill(-100.0);
        let inputs = random_inputs(77, 30, 5);
        let grads = grad_wrt_inputs(&params, &inputs, AttributionTarget::Output).unwrap();
        for t in 0..29 {
            assert!(
                grads.row(t).iter().all(|v| v.abs() < 1e-12),
                "row {t} should be dead"
            );
        }
        assert!(grads.row(29).iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn cell_index_out_of_range_is_rejected() {
        let params = init_params(0, 5, 10);
        let err = grad_wrt_inputs(&params, &random_inputs(0, 5, 5), AttributionTarget::Cell(10));
        assert!(matches!(
            err,
            Err(GradError::CellIndexOutOfRange { index: 10, hidden: 10 })
        ));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let params = init_params(0, 5, 2);
        assert!(matches!(
            grad_wrt_params(&params, &[]),
            Err(GradError::EmptyBatch)
        ));
    }
}
