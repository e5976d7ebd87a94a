//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use nrt_core::analysis::spearman;
use nrt_core::eval::{ablation, evaluate_cohort, metrics_from_predictions, nested_cv, CvConfig};
use nrt_core::event::{
    ChannelKind, EventLog, IbiEntry, IbiSeries, PhysioChannel, ScreenState, Timestamp, MILLIS_PER_DAY,
    MILLIS_PER_MINUTE,
};
use nrt_core::features::{Family, FeatureTable};
use nrt_core::labeling::CategoryMap;
use nrt_core::models::{
    fit_bayesian_ridge, fit_gbr, fit_ols, fit_random_forest, gbr_training_curve, BayesPriors, Learned, Matrix,
    RegressorKind, RegressorParams, RegressorSpec, TrainedModel,
};
use nrt_core::physio::{
    decompose_eda, hrv_freq_features, hrv_time_features, regline_features, stat_features, triangular_index,
    TRIANGULAR_BIN_MS,
};
use nrt_core::pipeline::{build_table, ExtractConfig};
use nrt_core::run::{run, Command, RunConfig};
use nrt_core::synth::{
    calibrate, generate, measure_cohort, zipf_exponent_for_coverage, zipf_weights, CalibrationTargets,
    GeneratorConfig, GroundTruth, PromptKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- 1

fn random_channel(rng: &mut ChaCha8Rng, rate_hz: f64, seconds: f64) -> PhysioChannel {
    let n = (seconds * rate_hz) as usize;
    let mut level = rng.random_range(0.5..5.0);
    let samples = (0..n)
        .map(|_| {
            level += rng.random_range(-0.05..0.05);
            level
        })
        .collect();
    PhysioChannel {
        kind: ChannelKind::Eda,
        start: Timestamp {
            utc_millis: 1_600_000_000_000,
            tz_offset_minutes: 0,
        },
        rate_hz,
        samples,
    }
}

fn random_ibi(rng: &mut ChaCha8Rng, seconds: f64) -> IbiSeries {
    let mut t = rng.random_range(0.0..2.0);
    let mut entries = Vec::new();
    let mut base = rng.random_range(0.6..1.1);
    while t < seconds {
        base = (base + rng.random_range(-0.03..0.03f64)).clamp(0.35, 1.6);
        // occasional dropped beats leave gaps in the series
        let interval = base + rng.random_range(-0.06..0.06);
        t += interval * if rng.random::<f64>() < 0.05 { 3.0 } else { 1.0 };
        entries.push(IbiEntry {
            offset_seconds: (t * 1e6).round() / 1e6,
            interval_seconds: interval,
        });
    }
    IbiSeries {
        start: Timestamp {
            utc_millis: 1_600_000_000_000,
            tz_offset_minutes: 0,
        },
        entries,
    }
}

fn feature_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tol = 1e-9;
    let mut checked = [0usize; 4];
    for w in 0..1000 {
        let rate = [1.0, 4.0, 32.0, 64.0][w % 4];
        let ch = random_channel(&mut rng, rate, 1800.0);
        let ibi = random_ibi(&mut rng, 1800.0);
        let t_start = ch.start.utc_millis;
        let end = t_start + rng.random_range(0..1_900_000);
        let dur = rng.random_range(1_000..900_000);

        // channel: membership by brute-force time comparison
        let want: Vec<f64> = (0..ch.samples.len())
            .filter(|&i| {
                let t = t_start as f64 + i as f64 * 1000.0 / rate;
                t >= (end - dur) as f64 && t < end as f64
            })
            .map(|i| ch.samples[i])
            .collect();
        let win = ch.window(end, dur);
        ensure(win.samples == want.as_slice(), || format!("window {w}: channel slice differs"))?;
        if !want.is_empty() {
            let s = stat_features(win.samples).map_err(|e| e.to_string())?;
            let (m, v, lo, hi, rms) = naive_stats(&want);
            ensure(
                close(s.mean, m, tol)
                    && close(s.var, v, tol)
                    && close(s.std, v.sqrt(), tol)
                    && s.min == lo
                    && s.max == hi
                    && close(s.rms, rms, tol),
                || format!("window {w}: stats {s:?} vs ({m}, {v}, {lo}, {hi}, {rms})"),
            )?;
            checked[0] += 1;
        }
        if want.len() >= 2 {
            let pts: Vec<(f64, f64)> = want.iter().enumerate().map(|(i, &y)| (i as f64 / rate, y)).collect();
            let f = regline_features(&win.timed_samples()).map_err(|e| e.to_string())?;
            let (slope, intercept) = naive_line(&pts);
            ensure(
                close(f.f_slope, slope.abs(), tol)
                    && close(f.f_sqrt_slope, slope.abs().sqrt(), tol)
                    && close(f.f_intercept1, intercept.abs().sqrt(), tol)
                    && close(f.f_intercept2, intercept.abs().powf(1.5), tol),
                || format!("window {w}: regline {f:?} vs slope {slope} intercept {intercept}"),
            )?;
            checked[1] += 1;
        }

        let nn: Vec<f64> = ibi
            .entries
            .iter()
            .filter(|e| {
                let t = t_start + (e.offset_seconds * 1000.0).round() as i64;
                t >= end - dur && t < end
            })
            .map(|e| e.interval_seconds * 1000.0)
            .collect();
        let got_nn = ibi.window(end, dur).intervals_ms();
        ensure(got_nn == nn, || format!("window {w}: ibi slice differs"))?;
        if nn.len() >= 3 {
            let f = hrv_time_features(&got_nn).map_err(|e| e.to_string())?;
            let o = naive_hrv(&nn);
            ensure(
                f.nni_50 == o.nni_50
                    && f.nni_20 == o.nni_20
                    && close(f.pnni_50, o.pnni_50, tol)
                    && close(f.pnni_20, o.pnni_20, tol)
                    && close(f.sdsd, o.sdsd, tol)
                    && close(f.range_nni, o.range_nni, tol)
                    && close(f.rmssd, o.rmssd, tol)
                    && close(f.sdnn, o.sdnn, tol)
                    && close(f.mean_nni, o.mean_nni, tol)
                    && close(f.cvsd, o.cvsd, tol)
                    && close(f.cvnni, o.cvnni, tol),
                || format!("window {w}: hrv {f:?} vs {o:?}"),
            )?;
            checked[2] += 1;
        } else {
            ensure(hrv_time_features(&got_nn).is_err(), || format!("window {w}: short hrv accepted"))?;
        }
        if nn.len() >= 20 {
            let got = triangular_index(&got_nn).map_err(|e| e.to_string())?;
            let want = naive_triangular(&nn, TRIANGULAR_BIN_MS);
            ensure(got == want, || format!("window {w}: triangular {got} vs {want}"))?;
            checked[3] += 1;
        }
    }
    ensure(checked.iter().all(|&c| c >= 300), || format!("too few usable windows: {checked:?}"))?;
    within(t0.elapsed(), 30)?;
    Ok(format!(
        "stats {} / regline {} / hrv {} / triangular {} windows, {:.2} s",
        checked[0],
        checked[1],
        checked[2],
        checked[3],
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn eda_reconstruction() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(32..4000);
        let mut level = rng.random_range(0.1..20.0);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                level += rng.random_range(-0.2..0.2);
                level
            })
            .collect();
        let d = decompose_eda(&x, 4.0).map_err(|e| e.to_string())?;
        for i in 0..n {
            worst = worst.max((d.scl[i] + d.scr[i] - x[i]).abs());
        }
    }
    ensure(worst < 1e-9, || format!("reconstruction error {worst:e}"))?;

    let mut min_corr = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(240..2400);
        let base = rng.random_range(0.5..10.0);
        let slope = rng.random_range(0.002..0.05) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let ramp: Vec<f64> = (0..n).map(|i| base + slope * i as f64 / 4.0).collect();
        let mut x = ramp.clone();
        let spike = rng.random_range(n / 4..3 * n / 4);
        x[spike] += rng.random_range(0.2..1.0);
        let d = decompose_eda(&x, 4.0).map_err(|e| e.to_string())?;
        min_corr = min_corr.min(pearson(&d.scl, &ramp));
        ensure(d.scr[spike] > 0.5 * (x[spike] - ramp[spike]), || "spike not phasic".into())?;
    }
    ensure(min_corr > 0.99, || format!("tonic correlation {min_corr}"))?;
    within(t0.elapsed(), 10)?;
    Ok(format!(
        "max error {worst:.1e}, min tonic correlation {min_corr:.5}, {:.2} s",
        t0.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 3

fn tone(freq: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut times, mut nn) = (Vec::new(), Vec::new());
    let mut t = 0.0;
    while t < 300.0 {
        let v = 900.0 + 50.0 * (2.0 * PI * freq * t).sin();
        t += v / 1000.0;
        times.push(t);
        nn.push(v);
    }
    (times, nn)
}

fn spectral_sanity() -> Outcome {
    let t0 = Instant::now();
    let (t, nn) = tone(0.1);
    let low = hrv_freq_features(&t, &nn).map_err(|e| e.to_string())?;
    let lf_share = low.lf / (low.vlf + low.lf + low.hf);
    let (t, nn) = tone(0.3);
    let high = hrv_freq_features(&t, &nn).map_err(|e| e.to_string())?;
    let hf_share = high.hf / (high.vlf + high.lf + high.hf);
    ensure(lf_share > 0.8, || format!("0.1 Hz tone: LF share {lf_share}"))?;
    ensure(hf_share > 0.8, || format!("0.3 Hz tone: HF share {hf_share}"))?;
    within(t0.elapsed(), 10)?;
    Ok(format!("LF share {lf_share:.4}, HF share {hf_share:.4}"))
}

// ---------------------------------------------------------------- 4

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn model_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (n, d) = (200, 5);
    let x = random_matrix(&mut rng, n, d);
    let beta = [1.5, -2.0, 0.25, 0.0, 3.0];
    let b0 = -0.7;
    let y: Vec<f64> = (0..n)
        .map(|i| b0 + x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let ols = fit_ols(&x, &y);
    let coef_err = ols
        .coef
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a - b).abs())
        .fold((ols.intercept - b0).abs(), f64::max);
    ensure(coef_err < 1e-6, || format!("OLS coefficient error {coef_err:e}"))?;

    let noisy: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let ols = fit_ols(&x, &noisy);
    let br = fit_bayesian_ridge(&x, &noisy, BayesPriors::uniform(1e-6));
    let br_gap = (0..n)
        .map(|i| (ols.predict_row(x.row(i)) - br.linear.predict_row(x.row(i))).abs())
        .fold(0.0, f64::max);
    ensure(br_gap < 1e-2, || format!("Bayesian ridge vs OLS gap {br_gap}"))?;

    let target: Vec<f64> = (0..n)
        .map(|i| (x.get(i, 0) * 2.0).sin() + x.get(i, 1).powi(2) * 0.3 + rng.random_range(-0.2..0.2))
        .collect();
    let gbr = fit_gbr(&x, &target, 80, 0.1, 3);
    let curve = gbr_training_curve(&gbr, &x, &target);
    ensure(curve.windows(2).all(|w| w[1] <= w[0] + 1e-12), || "GBR training loss increased".into())?;

    let forest = fit_random_forest(&x, &target, 50, 2, 9);
    let (lo, hi) = target
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let probe = Matrix::new(500, d, (0..500 * d).map(|_| rng.random_range(-50.0..50.0)).collect()).unwrap();
    let out_of_range = (0..500)
        .map(|i| forest.predict_row(probe.row(i)))
        .filter(|p| *p < lo || *p > hi)
        .count();
    ensure(out_of_range == 0, || format!("{out_of_range} forest predictions outside label range"))?;

    let constant = |kind| -> Result<f64, String> {
        let m = TrainedModel::fit(&RegressorSpec::new(kind, 0), &x, &target, (0..n).collect())
            .map_err(|e| e.to_string())?;
        match m.learned {
            Learned::Constant { value } => Ok(value),
            _ => Err("baseline is not constant".into()),
        }
    };
    let mean_c = constant(RegressorParams::MeanBaseline)?;
    let median_c = constant(RegressorParams::MedianBaseline)?;
    let sweep = constant_sweep(&target, 4000);
    let best_rmse = sweep.iter().map(|&c| root_mean_sq(&target, c)).fold(f64::INFINITY, f64::min);
    let best_mae = sweep.iter().map(|&c| mean_abs(&target, c)).fold(f64::INFINITY, f64::min);
    ensure(root_mean_sq(&target, mean_c) <= best_rmse + 1e-12, || "mean baseline is not RMSE-optimal".into())?;
    ensure(mean_abs(&target, median_c) <= best_mae + 1e-12, || "median baseline is not MAE-optimal".into())?;
    Ok(format!("OLS error {coef_err:.1e}, BR gap {br_gap:.1e}, {} GBR rounds monotone", curve.len()))
}

// ---------------------------------------------------------------- 5

fn cv_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (n, d) = (120, 12);
    let mut x = random_matrix(&mut rng, n, d);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
    for (i, &v) in y.iter().enumerate() {
        x.row_mut(i)[7] = v;
    }
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let cfg = CvConfig {
        seed: 5,
        record_provenance: true,
        ..CvConfig::default()
    };
    let kinds = [RegressorKind::MeanBaseline, RegressorKind::Ols, RegressorKind::Gbr];
    let res = nested_cv("p", &x, &y, &names, &kinds, &cfg).map_err(|e| e.to_string())?;

    let mut seen = vec![0usize; n];
    for f in &res.fold_plan.outer {
        for &i in &f.split.test {
            seen[i] += 1;
        }
    }
    ensure(seen.iter().all(|&c| c == 1), || "outer test folds do not partition the rows".into())?;

    ensure(!res.provenance.is_empty(), || "no provenance recorded".into())?;
    for rec in &res.provenance {
        let fold = &res.fold_plan.outer[rec.outer_fold];
        let allowed = match rec.inner_fold {
            None => &fold.split.train,
            Some(k) => &fold.inner[k].train,
        };
        ensure(rec.fit_rows.iter().all(|r| allowed.contains(r)), || {
            format!("fit rows of fold {}/{:?} leave the train split", rec.outer_fold, rec.inner_fold)
        })?;
    }

    for r in &res.results {
        let (mae, _) = metrics_from_predictions(&r.predictions).map_err(|e| e.to_string())?;
        ensure((mae - r.mae).abs() < 1e-12, || format!("{:?}: MAE recompute differs", r.regressor))?;
    }
    let ols = res.results.iter().find(|r| r.regressor == RegressorKind::Ols).unwrap();
    ensure(ols.mae < 0.05, || format!("leak feature MAE {}", ols.mae))?;
    Ok(format!("{} fitted models audited, leak MAE {:.2e}", res.provenance.len(), ols.mae))
}

// ---------------------------------------------------------------- shared cohort

struct Cohort {
    cfg: GeneratorConfig,
    logs: Vec<EventLog>,
    truth: GroundTruth,
    calibrate_s: f64,
    generate_s: f64,
}

fn cohort() -> &'static Cohort {
    static COHORT: OnceLock<Cohort> = OnceLock::new();
    COHORT.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = calibrate(&GeneratorConfig::default(), &CalibrationTargets::default()).expect("calibration");
        let calibrate_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (logs, truth) = generate(&cfg).expect("generation");
        Cohort {
            cfg,
            logs,
            truth,
            calibrate_s,
            generate_s: t1.elapsed().as_secs_f64(),
        }
    })
}

fn single_job<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

// ---------------------------------------------------------------- 6

fn end_to_end() -> Outcome {
    let t0 = Instant::now();
    let c = single_job(cohort);
    let table = single_job(|| build_table(&c.logs, &ExtractConfig::default(), &CategoryMap::default()))
        .map_err(|e| e.to_string())?;
    let per_participant = c.logs.iter().map(|l| l.notifications.len()).sum::<usize>() / c.logs.len();

    let v = table.column_index("valence").unwrap();
    let mood = table.mask_index("mood").unwrap();
    let (val, resp): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter(|r| !r.masks[mood])
        .map(|r| (r.values[v], r.target))
        .unzip();
    let (rho, p) = spearman(&val, &resp).map_err(|e| e.to_string())?;
    ensure(rho < 0.0 && p < 0.05, || format!("valence rho {rho} p {p}"))?;

    let cv = CvConfig::default();
    let kinds = RegressorKind::ALL;
    let res = single_job(|| evaluate_cohort(&table, &[Family::Mobile], &|_| true, &kinds, &cv))
        .map_err(|e| e.to_string())?;
    let mean_mae = res
        .aggregate
        .iter()
        .find(|a| a.regressor == RegressorKind::MeanBaseline)
        .unwrap()
        .mae;
    for a in res.aggregate.iter().filter(|a| !a.regressor.is_baseline()) {
        ensure(a.mae <= 0.95 * mean_mae, || {
            format!("{:?} MAE {:.4} vs mean baseline {:.4}", a.regressor, a.mae, mean_mae)
        })?;
    }
    let worst = res
        .aggregate
        .iter()
        .filter(|a| !a.regressor.is_baseline())
        .map(|a| a.mae / mean_mae)
        .fold(0.0, f64::max);

    let ab = single_job(|| ablation(&table, Family::Esm, &kinds, &cv)).map_err(|e| e.to_string())?;
    for (w, wo) in ab.with.iter().zip(&ab.without) {
        if w.regressor.is_baseline() {
            continue;
        }
        ensure(w.mae < wo.mae, || {
            format!("ESM ablation {:?}: with {:.4} without {:.4}", w.regressor, w.mae, wo.mae)
        })?;
    }
    let elapsed = t0.elapsed();
    within(elapsed, 300)?;

    // same seed, same cohort and table
    let (again, _) = generate(&c.cfg).map_err(|e| e.to_string())?;
    ensure(again == c.logs, || "regenerated cohort differs".into())?;
    let first = table.participants().into_iter().take(2).collect::<Vec<_>>();
    let sub = FeatureTable {
        rows: table.rows.iter().filter(|r| first.contains(&r.participant)).cloned().collect(),
        ..table.clone()
    };
    let a = single_job(|| evaluate_cohort(&sub, &[Family::Mobile], &|_| true, &kinds, &cv));
    let b = evaluate_cohort(&sub, &[Family::Mobile], &|_| true, &kinds, &cv);
    ensure(a.ok() == b.ok(), || "evaluation differs between runs".into())?;

    Ok(format!(
        "{} participants, ~{per_participant} notifications each, rho {rho:.4} (p {p:.1e}), worst MAE ratio {worst:.3}, \
         {:.0} s (calibrate {:.0} s, generate {:.0} s)",
        c.logs.len(),
        elapsed.as_secs_f64(),
        c.calibrate_s,
        c.generate_s
    ))
}

// ---------------------------------------------------------------- 7

fn cdf_calibration() -> Outcome {
    let targets = CalibrationTargets::default();
    let c = cohort();
    let m = measure_cohort(&c.cfg);
    for (got, want) in m.cdf.iter().zip(&targets.cdf) {
        ensure((got - want).abs() <= 0.02, || format!("CDF {:?} vs {:?}", m.cdf, targets.cdf))?;
    }
    ensure((m.top10_coverage - 0.943).abs() <= 0.02, || format!("coverage {}", m.top10_coverage))?;

    // a different coverage target is reachable through the popularity exponent
    let n = c.cfg.apps.count;
    let e = zipf_exponent_for_coverage(n, 10, 0.80).map_err(|e| e.to_string())?;
    let w = zipf_weights(n, e);
    let cov = w[..10].iter().sum::<f64>() / w.iter().sum::<f64>();
    ensure((cov - 0.80).abs() < 1e-6, || format!("coverage target 0.80 gave {cov}"))?;
    Ok(format!(
        "CDF {:.4}/{:.4}/{:.4}, top-10 coverage {:.4}",
        m.cdf[0], m.cdf[1], m.cdf[2], m.top10_coverage
    ))
}

// ---------------------------------------------------------------- 8

fn scheduler_conformance() -> Outcome {
    let c = cohort();
    let esm = &c.cfg.esm;
    ensure(c.cfg.days >= 30, || format!("only {} days simulated", c.cfg.days))?;
    let end = c.cfg.study_end_utc_ms();
    let (mut prompts_total, mut answers_total) = (0usize, 0usize);
    for (log, truth) in c.logs.iter().zip(&c.truth.participants) {
        let offset = i64::from(c.cfg.tz_offset_min) * MILLIS_PER_MINUTE;
        let local_min = |t: i64| (t + offset).rem_euclid(MILLIS_PER_DAY) / MILLIS_PER_MINUTE;
        let screen: Vec<(bool, i64)> = log
            .screen_events
            .iter()
            .map(|e| (e.state == ScreenState::On, e.at.utc_millis))
            .collect();
        let sessions = screen_sessions(&screen, end);
        let times: Vec<i64> = truth.prompts.iter().map(|p| p.at_utc_ms).collect();
        let trigger = esm.trigger_min * MILLIS_PER_MINUTE;
        let gap = esm.min_gap_min * MILLIS_PER_MINUTE;
        for (i, p) in truth.prompts.iter().enumerate() {
            let m = local_min(p.at_utc_ms);
            ensure((7 * 60..22 * 60).contains(&m), || format!("{}: prompt at local minute {m}", log.participant))?;
            if i > 0 {
                ensure(p.at_utc_ms - times[i - 1] >= 30 * MILLIS_PER_MINUTE, || {
                    format!("{}: prompts closer than 30 min", log.participant)
                })?;
            }
            if p.kind == PromptKind::Event {
                // continuous use for the full trigger time just before the prompt
                let justified = sessions
                    .iter()
                    .any(|&(s, e)| p.at_utc_ms - s == trigger && e > p.at_utc_ms);
                ensure(justified, || format!("{}: unjustified event prompt", log.participant))?;
            }
        }
        // every eligible trigger was either taken or suppressed by an earlier prompt
        for &(s, e) in &sessions {
            let t = s + trigger;
            if e - s <= trigger || !(7 * 60..22 * 60).contains(&local_min(t)) {
                continue;
            }
            let covered = times.iter().any(|&p| p <= t && t - p < gap);
            ensure(covered, || format!("{}: missed trigger at {t}", log.participant))?;
        }
        prompts_total += truth.prompts.len();
        answers_total += log.esm_responses.len();
    }
    let rate = answers_total as f64 / prompts_total as f64;
    ensure((rate - 0.2837).abs() <= 0.03, || format!("answer rate {rate}"))?;
    Ok(format!("{prompts_total} prompts over {} days, answer rate {:.4}", c.cfg.days, rate))
}

// ---------------------------------------------------------------- 9

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("data");
    let config = |out: &str, jobs: usize| {
        let text = format!(
            "seed = 11\njobs = {jobs}\n[paths]\ninput_dir = {:?}\noutput_dir = {:?}\n[synth]\nn_participants = 4\ndays = 8\n",
            input.to_string_lossy(),
            dir.path().join(out).to_string_lossy()
        );
        RunConfig::from_toml_str(&text, &[]).map_err(|e| e.to_string())
    };
    run(Command::Simulate, &config("sim", 1)?).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (out, jobs) in [("a", 1), ("b", 8), ("c", 1)] {
        let run_dir = run(Command::All, &config(out, jobs)?).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for f in ["report.json", "report.csv", "importance.csv", "ablation.csv", "evaluation.json", "analysis.json"] {
            files.push(std::fs::read(run_dir.join(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        reports.push(files);
    }
    ensure(reports[0] == reports[1], || "jobs=1 and jobs=8 reports differ".into())?;
    ensure(reports[0] == reports[2], || "repeated jobs=1 reports differ".into())?;
    Ok(format!("{} bytes of report output identical across 3 runs", reports[0].iter().map(Vec::len).sum::<usize>()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("feature oracles", feature_oracles),
        ("EDA reconstruction", eda_reconstruction),
        ("spectral sanity", spectral_sanity),
        ("model correctness", model_correctness),
        ("CV integrity", cv_integrity),
        ("end-to-end planted effect", end_to_end),
        ("CDF calibration", cdf_calibration),
        ("scheduler conformance", scheduler_conformance),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let line = match outcome {
            Ok(detail) => format!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("criterion {} {name}: FAIL ({why})", i + 1)
            }
        };
        // straight to the process stderr so the summary shows without --nocapture
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
