//! RMSprop training of mean squared error with validation-based model
//! selection: per-epoch shuffled mini-batches, global-norm gradient clipping,
//! and the parameters of the best-validation epoch as the final model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{NormStats, Sample};
use crate::grad::{batch_loss_and_grad, GradError};
use crate::lstm::{forward, init_params, ModelError, ModelParams, ParamGradient};
use crate::metrics::{nse, MetricError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss became non-finite")]
    Diverged { epoch: usize },
    #[error("empty {0} sample set")]
    EmptySampleSet(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("validation NSE: {0}")]
    Metric(#[from] MetricError),
}

/// Training hyperparameters. Defaults follow the reference protocol
/// (50 epochs, RMSprop at 1e-2); batching, clipping and the RMSprop
/// decay/epsilon are artifact defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub gradient_clip_norm: f64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-2,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-7,
            batch_size: 256,
            seed: 0,
            gradient_clip_norm: 1.0,
            hidden: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(TrainError::InvalidConfig(
                "rmsprop_decay must lie in (0, 1)".into(),
            ));
        }
        if self.batch_size < 1 || self.hidden < 1 {
            return Err(TrainError::InvalidConfig(
                "batch_size and hidden must be ≥ 1".into(),
            ));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(TrainError::InvalidConfig(
                "gradient_clip_norm must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Moving average of squared gradients, flat over all parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub v: Vec<f64>,
}

impl RmspropState {
    pub fn zeros(param_count: usize) -> Self {
        Self {
            v: vec![0.0; param_count],
        }
    }
}

/// Mean of squared differences.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64, TrainError> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(TrainError::InvalidConfig(format!(
            "mse needs equal nonzero lengths, got {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// One RMSprop update on flat parameter/gradient/state slices:
/// clip the gradient to `gradient_clip_norm` (global L2 norm), then
/// `v ← decay·v + (1−decay)·g²` and `θ ← θ − lr·g/(√v + ε)` elementwise.
pub fn rmsprop_update_flat(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut [f64],
    config: &TrainConfig,
) {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(theta.len(), state.len());

    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let clip_scale = if norm > config.gradient_clip_norm {
        config.gradient_clip_norm / norm
    } else {
        1.0
    };

    for k in 0..theta.len() {
        let g = grad[k] * clip_scale;
        state[k] = config.rmsprop_decay * state[k] + (1.0 - config.rmsprop_decay) * g * g;
        theta[k] -= config.learning_rate * g / (state[k].sqrt() + config.rmsprop_epsilon);
    }
}

/// Functional RMSprop step over model parameters.
pub fn rmsprop_step(
    params: &ModelParams,
    grads: &ParamGradient,
    state: &RmspropState,
    config: &TrainConfig,
) -> (ModelParams, RmspropState) {
    let mut theta = params.flatten();
    let grad = grads.flatten();
    let mut v = state.v.clone();
    rmsprop_update_flat(&mut theta, &grad, &mut v, config);
    (
        ModelParams::from_flat(params.input_dim(), params.hidden(), &theta),
        RmspropState { v },
    )
}

/// Record of one epoch: mean training loss over the epoch's mini-batches and
/// the validation NSE of the parameters at the epoch's end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_nse: f64,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Index of the epoch with the highest validation NSE.
    pub selected_epoch: usize,
    /// Parameters from the selected epoch.
    pub params: ModelParams,
}

/// Normalized predictions for a set of samples, in sample order.
pub fn predict_batch(params: &ModelParams, samples: &[Sample]) -> Result<Vec<f64>, ModelError> {
    samples
        .par_iter()
        .map(|s| forward(s.inputs(), params).map(|t| t.prediction))
        .collect()
}

/// Validation NSE in physical units: predictions and targets are both
/// denormalized before Nash-Sutcliffe efficiency is computed.
pub fn validation_nse(
    params: &ModelParams,
    samples: &[Sample],
    stats: &NormStats,
) -> Result<f64, TrainError> {
    let simulated: Vec<f64> = predict_batch(params, samples)?
        .into_iter()
        .map(|z| stats.denormalize_discharge(z))
        .collect();
    let observed: Vec<f64> = samples
        .iter()
        .map(|s| stats.denormalize_discharge(s.target))
        .collect();
    Ok(nse(&simulated, &observed)?.value())
}

/// Per-epoch checkpoint callback; receives (epoch index, parameters).
pub type EpochHook<'a> = dyn FnMut(usize, &ModelParams) + 'a;

/// Trains from a fresh seeded initialization. Sample order is reshuffled
/// every epoch from one seeded generator, so a config and sample set fix the
/// entire run bit-for-bit.
pub fn train(
    train_samples: &[Sample],
    val_samples: &[Sample],
    stats: &NormStats,
    config: &TrainConfig,
    mut epoch_hook: Option<&mut EpochHook<'_>>,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train_samples.is_empty() {
        return Err(TrainError::EmptySampleSet("training"));
    }
    if val_samples.is_empty() {
        return Err(TrainError::EmptySampleSet("validation"));
    }

    let input_dim = train_samples[0].inputs().ncols();
    let mut params = init_params(config.seed, input_dim, config.hidden);
    let mut state = RmspropState::zeros(params.param_count());
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, ModelParams, f64)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch_indices in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = batch_indices
                .iter()
                .map(|&k| train_samples[k].clone())
                .collect();
            let (loss, grad) = batch_loss_and_grad(&params, &batch)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;

            let (next_params, next_state) = rmsprop_step(&params, &grad, &state, config);
            params = next_params;
            state = next_state;
        }
        epoch_loss /= train_samples.len() as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }

        let val = validation_nse(&params, val_samples, stats)?;
        records.push(EpochRecord {
            train_loss: epoch_loss,
            val_nse: val,
        });
        if let Some(hook) = epoch_hook.as_deref_mut() {
            hook(epoch, &params);
        }
        let improved = best.as_ref().map_or(true, |(_, _, b)| val > *b);
        if improved {
            best = Some((epoch, params.clone(), val));
        }
    }

    let (selected_epoch, selected_params, _) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        epochs: records,
        selected_epoch,
        params: selected_params,
    })
}

/// Writes the per-epoch report as `epoch,train_loss,val_nse` CSV.
pub fn report_to_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,val_nse\n");
    for (k, r) in report.epochs.iter().enumerate() {
        let marker = if k == report.selected_epoch { "*" } else { "" };
        out.push_str(&format!("{k}{marker},{},{}\n", r.train_loss, r.val_nse));
    }
    out
}

/// Per-sample inputs for evaluation output: date, observed and simulated
/// discharge in physical units.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub date: chrono::NaiveDate,
    pub observed: f64,
    pub simulated: f64,
}

/// Runs the model over samples and denormalizes both sides.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    stats: &NormStats,
) -> Result<(f64, Vec<EvalRow>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySampleSet("evaluation"));
    }
    let predictions = predict_batch(params, samples)?;
    let rows: Vec<EvalRow> = samples
        .iter()
        .zip(&predictions)
        .map(|(s, &z)| EvalRow {
            date: s.prediction_date(),
            observed: stats.denormalize_discharge(s.target),
            simulated: stats.denormalize_discharge(z),
        })
        .collect();
    let sim: Vec<f64> = rows.iter().map(|r| r.simulated).collect();
    let obs: Vec<f64> = rows.iter().map(|r| r.observed).collect();
    let score = nse(&sim, &obs)?.value();
    Ok((score, rows))
}
