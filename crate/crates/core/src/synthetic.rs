//! Deterministic toy catchment and constructed-weight models, the oracles the
//! interpretability experiments are verified against.
//!
//! The catchment is a degree-day snow store feeding a single linear soil
//! reservoir: precipitation falls as snow on freezing days, melt follows
//! above-zero maximum temperature, the soil store drains to discharge at a
//! fixed recession rate and loses a fixed fraction to evapotranspiration;
//! radiation sublimates snow directly. Water is conserved exactly, and the
//! true storage series double as proxy states for correlation analysis.

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    DischargeRecord, DischargeSeries, ForcingRecord, ForcingSeries, ProxyStateSeries,
};
use crate::lstm::ModelParams;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid toy catchment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Parameters of the toy catchment generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCatchmentConfig {
    pub seed: u64,
    pub n_days: usize,
    pub start_date: NaiveDate,
    /// Snowmelt per degree of above-zero daily maximum temperature, mm/°C/day.
    pub degree_day_factor: f64,
    /// Fraction of the soil store leaving as discharge per day, in (0, 1).
    pub soil_recession: f64,
    /// Fraction of the soil store lost to evapotranspiration per day.
    pub et_fraction: f64,
    /// Snow lost to sublimation per unit radiation, mm per (W/m²)/day.
    pub sublimation_factor: f64,
    /// Base probability of a wet day.
    pub wet_probability: f64,
    /// Mean precipitation on wet days (exponential), mm.
    pub precip_mean: f64,
    /// Seasonal modulation of the wet probability; positive makes winters wetter.
    pub precip_seasonality: f64,
    /// Annual mean of the daily minimum temperature, °C.
    pub tmin_mean: f64,
    /// Seasonal amplitude of the daily minimum temperature, °C.
    pub tmin_amplitude: f64,
    /// Day of year at which tmin is coldest.
    pub temp_phase_day: f64,
    /// Day-to-day temperature noise, °C.
    pub temp_noise_std: f64,
    /// Baseline tmax − tmin gap, °C.
    pub diurnal_range: f64,
    /// Soil store at the start, mm.
    pub initial_soil: f64,
}

impl Default for ToyCatchmentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_days: 20 * 365,
            start_date: NaiveDate::from_ymd_opt(1980, 1, 1).unwrap(),
            degree_day_factor: 3.5,
            soil_recession: 0.08,
            et_fraction: 0.012,
            sublimation_factor: 0.002,
            wet_probability: 0.5,
            precip_mean: 5.0,
            precip_seasonality: 0.35,
            tmin_mean: -1.0,
            tmin_amplitude: 9.0,
            temp_phase_day: 15.0,
            temp_noise_std: 2.5,
            diurnal_range: 7.0,
            initial_soil: 30.0,
        }
    }
}

impl ToyCatchmentConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: &str| Err(SyntheticError::InvalidConfig(msg.to_string()));
        if self.n_days < 730 {
            return bad("n_days must be at least 730");
        }
        if !(self.soil_recession > 0.0 && self.soil_recession < 1.0) {
            return bad("soil_recession must lie in (0, 1)");
        }
        if !(self.degree_day_factor > 0.0) {
            return bad("degree_day_factor must be positive");
        }
        if self.et_fraction < 0.0 || self.soil_recession + self.et_fraction >= 1.0 {
            return bad("et_fraction must be ≥ 0 with recession + et_fraction < 1");
        }
        if !(0.0..=1.0).contains(&self.wet_probability) {
            return bad("wet_probability must lie in [0, 1]");
        }
        if !(self.precip_mean > 0.0) {
            return bad("precip_mean must be positive");
        }
        if self.temp_noise_std < 0.0
            || self.diurnal_range < 0.0
            || self.initial_soil < 0.0
            || self.sublimation_factor < 0.0
            || self.tmin_amplitude < 0.0
        {
            return bad("noise, diurnal range, amplitude, initial soil and sublimation must be ≥ 0");
        }
        Ok(())
    }
}

/// Everything the generator produced: the five forcings, the discharge, and
/// the true internal stores per day.
#[derive(Debug, Clone)]
pub struct ToyTrace {
    pub forcings: ForcingSeries,
    pub discharge: DischargeSeries,
    /// Snow store at the end of each day, mm.
    pub snow: Vec<f64>,
    /// Soil store at the end of each day, mm.
    pub soil: Vec<f64>,
    /// Evapotranspiration plus sublimation per day, mm.
    pub atmospheric_loss: Vec<f64>,
    pub initial_soil: f64,
}

/// Water-balance summary of a trace: total in, total out, relative error.
#[derive(Debug, Clone, Copy)]
pub struct WaterBalance {
    pub total_in: f64,
    pub total_out: f64,
    pub relative_error: f64,
}

impl ToyTrace {
    /// The true stores as a proxy-state series named `snow` and `soil`.
    pub fn proxy_states(&self) -> ProxyStateSeries {
        let n = self.snow.len();
        let mut values = Array2::zeros((n, 2));
        for k in 0..n {
            values[[k, 0]] = self.snow[k];
            values[[k, 1]] = self.soil[k];
        }
        ProxyStateSeries::new(
            self.forcings.records()[0].date,
            vec!["snow".to_string(), "soil".to_string()],
            values,
            "<toy catchment>",
        )
        .expect("generated states are valid")
    }

    /// Checks Σ precip + initial stores = Σ discharge + Σ losses + final stores.
    pub fn water_balance(&self) -> WaterBalance {
        let precip: f64 = self.forcings.records().iter().map(|r| r.precip).sum();
        let discharge: f64 = self.discharge.records().iter().map(|r| r.discharge).sum();
        let losses: f64 = self.atmospheric_loss.iter().sum();
        let total_in = precip + self.initial_soil;
        let total_out = discharge + losses + self.snow.last().unwrap() + self.soil.last().unwrap();
        WaterBalance {
            total_in,
            total_out,
            relative_error: (total_in - total_out).abs() / total_in.max(1.0),
        }
    }
}

/// Seasonal factor in [−1, 1], +1 at the coldest day of the year.
fn season(day_index: usize, start: NaiveDate, phase_day: f64) -> f64 {
    use chrono::Datelike;
    let date = start + Days::new(day_index as u64);
    let doy = date.ordinal() as f64;
    ((doy - phase_day) * std::f64::consts::TAU / 365.25).cos()
}

/// Runs the daily loop. Identical configs produce bit-identical traces.
pub fn generate(config: &ToyCatchmentConfig) -> Result<ToyTrace, SyntheticError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let precip_dist = Exp::new(1.0 / config.precip_mean).expect("positive precip mean");
    let temp_noise = Normal::new(0.0, config.temp_noise_std.max(1e-12)).expect("valid noise");
    let srad_noise = Normal::new(0.0, 18.0).expect("valid noise");
    let vp_noise = Normal::new(0.0, 25.0).expect("valid noise");

    let mut forcings = Vec::with_capacity(config.n_days);
    let mut discharge = Vec::with_capacity(config.n_days);
    let mut snow_series = Vec::with_capacity(config.n_days);
    let mut soil_series = Vec::with_capacity(config.n_days);
    let mut losses = Vec::with_capacity(config.n_days);

    let mut snow = 0.0f64;
    let mut soil = config.initial_soil;

    for day in 0..config.n_days {
        let date = config.start_date + Days::new(day as u64);
        let s = season(day, config.start_date, config.temp_phase_day);

        // fixed draw order per day keeps the stream aligned across configs
        let wet_draw: f64 = rand::Rng::random(&mut rng);
        let amount = precip_dist.sample(&mut rng);
        let tmin_eps = temp_noise.sample(&mut rng);
        let gap_eps = temp_noise.sample(&mut rng);
        let srad_eps = srad_noise.sample(&mut rng);
        let vp_eps = vp_noise.sample(&mut rng);

        let wet_prob =
            (config.wet_probability * (1.0 + config.precip_seasonality * s)).clamp(0.0, 1.0);
        let wet = wet_draw < wet_prob;
        let precip = if wet { amount } else { 0.0 };

        let tmin = config.tmin_mean - config.tmin_amplitude * s + tmin_eps;
        let tmax = tmin + (config.diurnal_range + 0.5 * gap_eps).max(0.0);
        // radiation: bright summers, dim winters, cloudy on wet days
        let clear_sky = 200.0 - 130.0 * s;
        let srad = ((if wet { 0.55 } else { 1.0 }) * clear_sky + srad_eps).max(5.0);
        // vapor pressure tracks temperature
        let vp = (600.0 + 28.0 * (tmin - config.tmin_mean) + vp_eps).max(50.0);

        let (rain, snowfall) = if tmin < 0.0 { (0.0, precip) } else { (precip, 0.0) };
        snow += snowfall;
        let sublimation = (config.sublimation_factor * srad).min(snow);
        snow -= sublimation;
        let melt = (config.degree_day_factor * tmax.max(0.0)).min(snow);
        snow -= melt;

        soil += rain + melt;
        let q = config.soil_recession * soil;
        let et = config.et_fraction * soil;
        soil -= q + et;

        forcings.push(ForcingRecord {
            date,
            precip,
            srad,
            tmin,
            tmax,
            vp,
        });
        discharge.push(DischargeRecord { date, discharge: q });
        snow_series.push(snow);
        soil_series.push(soil);
        losses.push(et + sublimation);
    }

    Ok(ToyTrace {
        forcings: ForcingSeries::new(forcings, "<toy catchment>")?,
        discharge: DischargeSeries::new(discharge, "<toy catchment>")?,
        snow: snow_series,
        soil: soil_series,
        atmospheric_loss: losses,
        initial_soil: config.initial_soil,
    })
}

/// Mean of the trailing `k` values at each position (window truncated at the
/// start of the series). Each window is summed afresh, so a value outside the
/// window can never bleed rounding error into it.
pub fn trailing_mean(values: &[f64], k: usize) -> Vec<f64> {
    assert!(k >= 1, "window must be at least 1 day");
    (0..values.len())
        .map(|d| {
            let lo = (d + 1).saturating_sub(k);
            values[lo..=d].iter().sum::<f64>() / (d - lo + 1) as f64
        })
        .collect()
}

/// A regression task whose true dependence horizon is exactly `k` days: the
/// target is the mean precipitation of the trailing `k` days over a warm
/// (snow-free) toy climate.
pub fn linear_teacher_task(
    seed: u64,
    n_days: usize,
    k: usize,
) -> Result<(ForcingSeries, DischargeSeries), SyntheticError> {
    if k > 365 {
        return Err(SyntheticError::InvalidConfig(
            "teacher horizon k must be at most 365".to_string(),
        ));
    }
    // warm, steadily wet climate: no snow path, and a light precipitation
    // tail keeps normalized inputs in a moderate range
    let config = ToyCatchmentConfig {
        seed,
        n_days,
        tmin_mean: 10.0,
        tmin_amplitude: 5.0,
        wet_probability: 0.95,
        precip_mean: 4.0,
        precip_seasonality: 0.1,
        ..ToyCatchmentConfig::default()
    };
    let trace = generate(&config)?;
    let precip: Vec<f64> = trace.forcings.records().iter().map(|r| r.precip).collect();
    let target = trailing_mean(&precip, k);
    let records = trace
        .forcings
        .records()
        .iter()
        .zip(target)
        .map(|(r, q)| DischargeRecord {
            date: r.date,
            discharge: q,
        })
        .collect();
    Ok((
        trace.forcings,
        DischargeSeries::new(records, "<teacher task>")?,
    ))
}

// ---------------------------------------------------------------------------
// Constructed-weight models (analysis oracles)
// ---------------------------------------------------------------------------

/// A model whose input gates are saturated shut: the cell never charges, the
/// prediction is the dense bias, and no input can influence anything.
pub fn input_blind_model(input_dim: usize, hidden: usize, output_bias: f64) -> ModelParams {
    let mut params = ModelParams::zeros(input_dim, hidden);
    params.input_gate.b.fill(-100.0);
    params.forget_gate.b.fill(100.0);
    params.output_gate.b.fill(100.0);
    params.dense_b = output_bias;
    params
}

/// A model whose memory decays by a fixed factor per day, tuned so influence
/// from more than `k` days back falls below 1e-6 of the recent scale: the
/// forget gate is pinned at φ = (1e-6)^(1/k), the cell charges from the
/// precipitation channel only, and no recurrent weights exist.
pub fn k_day_memory_model(input_dim: usize, hidden: usize, k: usize) -> ModelParams {
    assert!(k >= 1);
    let phi = 1e-6f64.powf(1.0 / k as f64);
    let logit = (phi / (1.0 - phi)).ln();

    let mut params = ModelParams::zeros(input_dim, hidden);
    params.forget_gate.b.fill(logit);
    params.input_gate.b.fill(2.0);
    params.output_gate.b.fill(2.0);
    params.cell_gate.w[[0, 0]] = 0.5;
    params.dense_w[0] = 1.0;
    params
}

/// A cell that accumulates the precipitation signal while the minimum
/// temperature sits below `freeze_z` (the freezing point in normalized
/// units), with a small positive radiation term whose attribution therefore
/// opposes precipitation's in dim winters. Cell 0 carries the store; the
/// dense head reads it through a mildly decaying memory.
pub fn cold_gated_accumulator(input_dim: usize, hidden: usize, freeze_z: f64) -> ModelParams {
    assert!(input_dim >= 5, "needs the 5 standard forcing channels");
    let mut params = ModelParams::zeros(input_dim, hidden);
    // input gate opens when normalized tmin < freeze_z
    params.input_gate.w[[0, 2]] = -6.0;
    params.input_gate.b[0] = 6.0 * freeze_z;
    // long but finite memory
    params.forget_gate.b[0] = 4.0;
    // cell input: precipitation-dominated, radiation entering with a tenth of
    // the weight; positive offset keeps the signal positive on dry days
    params.cell_gate.w[[0, 0]] = 1.0;
    params.cell_gate.w[[0, 1]] = 0.1;
    params.cell_gate.b[0] = 0.6;
    params.output_gate.b[0] = 4.0;
    params.dense_w[0] = 1.0;
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{grad_wrt_inputs, AttributionTarget};
    use crate::lstm::forward;

    #[test]
    fn zero_precipitation_decays_geometrically() {
        let config = ToyCatchmentConfig {
            wet_probability: 0.0,
            n_days: 800,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();
        assert!(trace.snow.iter().all(|&s| s == 0.0));
        let ratio = 1.0 - config.soil_recession - config.et_fraction;
        let q = trace.discharge.values();
        assert!((q[0] - config.soil_recession * config.initial_soil).abs() < 1e-12);
        for t in 1..q.len() {
            if q[t - 1] > 1e-300 {
                assert!((q[t] / q[t - 1] - ratio).abs() < 1e-9, "day {t}");
            }
        }
    }

    #[test]
    fn permanent_frost_accumulates_snow_monotonically() {
        let config = ToyCatchmentConfig {
            wet_probability: 1.0,
            precip_seasonality: 0.0,
            tmin_mean: -5.0,
            tmin_amplitude: 0.0,
            temp_noise_std: 0.0,
            diurnal_range: 3.0, // tmax = −2 °C, never melts
            sublimation_factor: 0.0,
            n_days: 800,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();
        for t in 1..trace.snow.len() {
            assert!(trace.snow[t] > trace.snow[t - 1], "day {t}");
        }
        // all precipitation is locked in the snowpack: discharge is the pure
        // recession of the initial soil store
        let ratio = 1.0 - config.soil_recession - config.et_fraction;
        let q = trace.discharge.values();
        let mut expected = config.soil_recession * config.initial_soil;
        for (t, &qt) in q.iter().enumerate() {
            assert!((qt - expected).abs() < 1e-9, "day {t}: {qt} vs {expected}");
            expected *= ratio;
        }
    }

    #[test]
    fn water_balance_closes_for_many_seeds() {
        for seed in 0..6u64 {
            let config = ToyCatchmentConfig {
                seed,
                n_days: 3 * 365,
                ..ToyCatchmentConfig::default()
            };
            let balance = generate(&config).unwrap().water_balance();
            assert!(
                balance.relative_error < 1e-10,
                "seed {seed}: {balance:?}"
            );
        }
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let config = ToyCatchmentConfig::default();
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.forcings, b.forcings);
        assert_eq!(a.discharge, b.discharge);
        assert_eq!(a.snow, b.snow);
    }

    #[test]
    fn csv_emission_reparses_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let config = ToyCatchmentConfig {
            n_days: 900,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();

        let f = dir.path().join("forcings.csv");
        let q = dir.path().join("discharge.csv");
        let s = dir.path().join("states.csv");
        crate::data::write_forcings_csv(&trace.forcings, &f).unwrap();
        crate::data::write_discharge_csv(&trace.discharge, &q).unwrap();
        crate::data::write_proxy_states_csv(&trace.proxy_states(), &s).unwrap();

        assert_eq!(crate::data::parse_forcings(&f).unwrap(), trace.forcings);
        assert_eq!(crate::data::parse_discharge(&q).unwrap(), trace.discharge);
        assert_eq!(
            crate::data::parse_proxy_states(&s).unwrap(),
            trace.proxy_states()
        );
    }

    #[test]
    fn teacher_k1_target_equals_daily_precip() {
        let (forcings, discharge) = linear_teacher_task(3, 900, 1).unwrap();
        for (f, q) in forcings.records().iter().zip(discharge.records()) {
            assert_eq!(f.precip, q.discharge);
        }
    }

    #[test]
    fn trailing_mean_horizon_is_exact() {
        let mut values: Vec<f64> = (0..200).map(|k| (k % 13) as f64).collect();
        let base = trailing_mean(&values, 30);
        values[50] += 100.0; // perturb one day
        let perturbed = trailing_mean(&values, 30);
        for d in 0..200 {
            if (50..50 + 30).contains(&d) {
                assert_ne!(base[d], perturbed[d], "day {d} should feel the spike");
            } else {
                assert_eq!(base[d], perturbed[d], "day {d} must not");
            }
        }
    }

    #[test]
    fn input_blind_model_ignores_everything() {
        let params = input_blind_model(5, 10, 0.4);
        let config = ToyCatchmentConfig {
            n_days: 800,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();
        let stats = crate::data::compute_norm_stats(
            &trace.forcings,
            &trace.discharge,
            trace.forcings.range(),
        )
        .unwrap();
        let windows = crate::data::make_windows(&trace.forcings, &stats, 120).unwrap();
        let out = forward(&windows[0].inputs, &params).unwrap();
        assert!((out.prediction - 0.4).abs() < 1e-12);
        let grads =
            grad_wrt_inputs(&params, &windows[0].inputs, AttributionTarget::Output).unwrap();
        assert!(grads.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn k_day_memory_model_has_bounded_horizon() {
        let k = 30;
        let params = k_day_memory_model(5, 10, k);
        let config = ToyCatchmentConfig {
            n_days: 800,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();
        let stats = crate::data::compute_norm_stats(
            &trace.forcings,
            &trace.discharge,
            trace.forcings.range(),
        )
        .unwrap();
        let windows = crate::data::make_windows(&trace.forcings, &stats, 120).unwrap();
        let grads =
            grad_wrt_inputs(&params, &windows[0].inputs, AttributionTarget::Output).unwrap();
        let t_last = 119;
        let recent_scale = grads.row(t_last)[0].abs();
        assert!(recent_scale > 1e-6, "the final day must matter");
        for t in 0..=(t_last - k - 2) {
            for v in grads.row(t) {
                assert!(
                    v.abs() < 1e-6 * recent_scale,
                    "influence at {} days back should be dead",
                    t_last - t
                );
            }
        }
    }
}
