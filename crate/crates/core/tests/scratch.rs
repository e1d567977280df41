//! Temporary calibration experiments. Deleted before release.

use hydrolstm::analysis::{cell_state_correlations, inspect_cell, tsoi_series, TsoiConfig};
use hydrolstm::data::{build_split_samples, make_windows, SplitSpec};
use hydrolstm::synthetic::{generate, linear_teacher_task, ToyCatchmentConfig};
use hydrolstm::train::{evaluate, train, TrainConfig};

/// RMSprop from given parameters, optionally averaging the parameter vector
/// over the trailing `avg_tail` epochs to cancel optimizer jitter. Public
/// training primitives only.
fn run_sgd(
    start: &hydrolstm::lstm::ModelParams,
    samples: &[hydrolstm::data::Sample],
    config: &TrainConfig,
    epochs: usize,
    avg_tail: usize,
) -> hydrolstm::lstm::ModelParams {
    use hydrolstm::grad::batch_loss_and_grad;
    use hydrolstm::train::{rmsprop_step, RmspropState};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut params = start.clone();
    let mut state = RmspropState::zeros(params.param_count());
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(config.seed ^ 0x00f1_7e57);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut avg = vec![0.0f64; params.param_count()];
    let mut avg_n = 0usize;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<hydrolstm::data::Sample> =
                chunk.iter().map(|&k| samples[k].clone()).collect();
            let (_, grad) = batch_loss_and_grad(&params, &batch).unwrap();
            let (next, next_state) = rmsprop_step(&params, &grad, &state, config);
            params = next;
            state = next_state;
            if epochs - epoch <= avg_tail {
                for (a, p) in avg.iter_mut().zip(params.flatten()) {
                    *a += p;
                }
                avg_n += 1;
            }
        }
    }
    if avg_n > 0 {
        let scaled: Vec<f64> = avg.iter().map(|a| a / avg_n as f64).collect();
        params = hydrolstm::lstm::ModelParams::from_flat(
            start.input_dim(),
            start.hidden(),
            &scaled,
        );
    }
    params
}

#[test]
#[ignore]
fn teacher_task_calibration() {
    let epochs: usize = std::env::var("EPOCHS").map_or(60, |v| v.parse().unwrap());
    let epochs2: usize = std::env::var("EPOCHS2").map_or(120, |v| v.parse().unwrap());
    let lr2: f64 = std::env::var("LR2").map_or(2e-4, |v| v.parse().unwrap());
    for seed in [0u64, 1] {
        let (forcings, discharge) = linear_teacher_task(seed, 2920, 30).unwrap();
        let split = SplitSpec {
            train_years: 5,
            val_fraction: 0.25,
        };
        let (stats, samples, _) = build_split_samples(&forcings, &discharge, &split, 120).unwrap();
        let t0 = std::time::Instant::now();
        let phase1 = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 64,
            seed,
            ..TrainConfig::default()
        };
        let init = hydrolstm::lstm::init_params(seed, 5, 10);
        let shaped = run_sgd(&init, &samples.train, &phase1, epochs, 0);
        let phase2 = TrainConfig {
            learning_rate: lr2,
            batch_size: 64,
            seed,
            ..TrainConfig::default()
        };
        let avg_tail: usize = std::env::var("AVG").map_or(40, |v| v.parse().unwrap());
        let tuned = run_sgd(&shaped, &samples.train, &phase2, epochs2, avg_tail);
        let report = hydrolstm::train::TrainReport {
            params: tuned,
            epochs: vec![],
            selected_epoch: 0,
        };
        let train_time = t0.elapsed();
        let (nse, _) = evaluate(&report.params, &samples.test, &stats).unwrap();

        let windows: Vec<_> = samples.test.iter().map(|s| s.window.clone()).collect();
        let t1 = std::time::Instant::now();
        let results = tsoi_series(
            &report.params,
            &windows,
            &TsoiConfig {
                threshold: 2e-3,
                m: 300,
            },
        )
        .unwrap();
        let tsoi_time = t1.elapsed();
        let mut tsois: Vec<usize> = results.iter().map(|r| r.tsoi).collect();
        tsois.sort_unstable();
        let median = tsois[tsois.len() / 2];
        let q10 = tsois[tsois.len() / 10];
        let q90 = tsois[9 * tsois.len() / 10];
        println!(
            "teacher seed {seed} (e{epochs}+{epochs2} lr2 {lr2}): NSE {nse:.4}, median TSOI {median} \
             (q10 {q10}, q90 {q90}), train {train_time:.1?}, tsoi {tsoi_time:.1?}",


        // leakage profile: per-step |Δ attribution sum| far before the horizon
        use hydrolstm::attribution::{integrated_gradients, Baseline};
        use hydrolstm::grad::AttributionTarget;
        let mut early = Vec::new();
        let mut late = Vec::new();
        for w in windows.iter().step_by(windows.len() / 24) {
            let attr = integrated_gradients(
                &report.params,
                &w.inputs,
                &Baseline::zeros(120, 5),
                AttributionTarget::Output,
                300,
            )
            .unwrap();
            let sums = attr.per_step_sums();
            let diffs: Vec<f64> = (1..120).map(|t| (sums[t] - sums[t - 1]).abs()).collect();
            early.push(diffs[..60].iter().cloned().fold(0.0f64, f64::max));
            late.push(diffs[85..].iter().cloned().fold(0.0f64, f64::max));
        }
        early.sort_by(|a, b| a.partial_cmp(b).unwrap());
        late.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "  leakage max|Δs| steps<60: median {:.2e} / p90 {:.2e}; in-horizon median {:.2e}",
            early[early.len() / 2],
            early[9 * early.len() / 10],
            late[late.len() / 2]
        );
    }
}

#[test]
#[ignore]
fn snow_catchment_calibration() {
    for seed in [0u64, 1, 2] {
        let config = ToyCatchmentConfig {
            seed,
            n_days: 12 * 365,
            ..ToyCatchmentConfig::default()
        };
        let trace = generate(&config).unwrap();
        let split = SplitSpec {
            train_years: 6,
            val_fraction: 0.25,
        };
        let (stats, samples, ranges) =
            build_split_samples(&trace.forcings, &trace.discharge, &split, 365).unwrap();
        let train_config = TrainConfig {
            epochs: 30,
            seed,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let report = train(&samples.train, &samples.val, &stats, &train_config, None).unwrap();
        let train_time = t0.elapsed();
        let (nse, _) = evaluate(&report.params, &samples.test, &stats).unwrap();

        let windows: Vec<_> = samples.test.iter().map(|s| s.window.clone()).collect();
        let proxy = trace.proxy_states();
        let corr = cell_state_correlations(&report.params, &windows, &proxy).unwrap();
        // snow is state 0
        let mut best_cell = 0;
        let mut best_rho = 0.0f64;
        for cell in 0..10 {
            let rho = corr.mean_rho[[cell, 0]];
            if rho.abs() > best_rho.abs() {
                best_rho = rho;
                best_cell = cell;
            }
        }
        println!(
            "snow seed {seed}: NSE {nse:.4}, best snow cell {best_cell} rho {best_rho:.3}, \
             soil best {:.3}, sel epoch {}, train {train_time:.1?}, test range {}",
            (0..10)
                .map(|c| corr.mean_rho[[c, 1]])
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a }),
            report.selected_epoch,
            ranges.2
        );

        // sign test on a late-winter window
        let window = windows
            .iter()
            .filter(|w| {
                let doy = chrono::Datelike::ordinal(&w.prediction_date);
                (75..=105).contains(&doy)
            })
            .last()
            .unwrap();
        let inspection = inspect_cell(&report.params, window, best_cell, &stats, 300).unwrap();
        let mut freeze_days = 0;
        let mut opposite = 0;
        let mut sum_p = 0.0;
        let mut sum_r = 0.0;
        for t in 0..window.seq_len() {
            if inspection.temperatures[[t, 0]] < 0.0 {
                freeze_days += 1;
                let p = inspection.attribution.values[[t, 0]];
                let r = inspection.attribution.values[[t, 1]];
                sum_p += p;
                sum_r += r;
                if p * r < 0.0 {
                    opposite += 1;
                }
            }
        }
        println!(
            "  sign test: {freeze_days} freezing days, {opposite} opposite-signed, \
             sum precip {sum_p:.4}, sum srad {sum_r:.4}"
        );
    }
}
