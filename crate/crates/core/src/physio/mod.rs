//! Wristband features over the window preceding a notification.

mod eda;
mod hrv;
mod regline;
mod spectral;
mod stats;

pub use eda::{decompose_eda, smoothing_length, EdaDecomposition, EDA_CUTOFF_HZ, EDA_MIN_SECONDS};
pub use hrv::{
    hrv_time_features, triangular_index, HrvTimeFeatures, MIN_TIME_INTERVALS,
    MIN_TRIANGULAR_INTERVALS, TRIANGULAR_BIN_MS,
};
pub use regline::{regline_features, RegLineFeatures};
pub use spectral::{
    hrv_freq_features, resample_linear, welch, HrvFrequencyFeatures, Psd, HF_BAND, LF_BAND,
    MIN_FREQ_INTERVALS, MIN_SPAN_SECONDS, RESAMPLE_HZ, SEGMENT_SECONDS, VLF_BAND,
};
pub use stats::{stat_features, StatFeatures};

use serde::{Deserialize, Serialize};

use crate::event::{ChannelKind, PhysioRecording, Timestamp};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PhysioError {
    #[error("empty window")]
    EmptyWindow,
    #[error("window has fewer than two distinct sample times")]
    DegenerateWindow,
    #[error("window too short")]
    WindowTooShort,
    #[error("too few inter-beat intervals")]
    TooFewIntervals,
    #[error("no high-frequency power; lf/hf undefined")]
    ZeroHfPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysioConfig {
    pub window_s: f64,
    pub include_acc: bool,
    /// Fraction of the nominal sample count a channel window must contain.
    pub min_coverage: f64,
}

impl Default for PhysioConfig {
    fn default() -> Self {
        Self {
            window_s: 300.0,
            include_acc: false,
            min_coverage: 0.5,
        }
    }
}

const STAT_SUFFIXES: [&str; 5] = ["mean", "var", "std", "min", "max"];
const REGLINE_SUFFIXES: [&str; 4] = ["slope", "sqrt_slope", "intercept1", "intercept2"];
const HRV_TIME_NAMES: [&str; 8] = [
    "nni_50", "pnni_50", "nni_20", "pnni_20", "sdsd", "range_nni", "cvsd", "cvnni",
];

fn stat_names(ch: &str, unit: &'static str, var_unit: &'static str) -> Vec<(String, &'static str)> {
    STAT_SUFFIXES
        .iter()
        .map(|s| (format!("{ch}_{s}"), if *s == "var" { var_unit } else { unit }))
        .collect()
}

fn regline_names(ch: &str, unit: &'static str) -> Vec<(String, &'static str)> {
    let units = [unit, "sqrt(|slope|)", "sqrt(|intercept|)", "|intercept|^1.5"];
    REGLINE_SUFFIXES
        .iter()
        .zip(units)
        .map(|(s, u)| (format!("{ch}_{s}"), u))
        .collect()
}

/// Feature names (with units) of each group, in emission order.
fn group_layout(include_acc: bool) -> Vec<(&'static str, Vec<(String, &'static str)>)> {
    let mut eda = stat_names("EDA", "uS", "uS^2");
    eda.extend(regline_names("EDA", "uS/s"));
    let mut decomp = stat_names("SCL", "uS", "uS^2");
    decomp.extend(regline_names("SCL", "uS/s"));
    decomp.extend(stat_names("SCR", "uS", "uS^2"));
    let mut hr = stat_names("HR", "bpm", "bpm^2");
    hr.push(("HR_rms".into(), "bpm"));
    hr.extend(regline_names("HR", "bpm/s"));
    let mut st = stat_names("ST", "degC", "degC^2");
    st.extend(regline_names("ST", "degC/s"));
    let mut hrv_time: Vec<(String, &'static str)> = vec![
        ("IBI_mean".into(), "ms"),
        ("IBI_var".into(), "ms^2"),
        ("IBI_std".into(), "ms"),
    ];
    let units = ["count", "percent", "count", "percent", "ms", "ms", "ratio", "ratio"];
    hrv_time.extend(HRV_TIME_NAMES.iter().zip(units).map(|(n, u)| (n.to_string(), u)));
    let mut groups = vec![
        ("eda", eda),
        ("eda_decomp", decomp),
        ("bvp", stat_names("BVP", "a.u.", "a.u.^2")),
        ("hr", hr),
        ("st", st),
        ("hrv_time", hrv_time),
        (
            "hrv_freq",
            vec![("vlf".into(), "ms^2"), ("lf".into(), "ms^2"), ("hf".into(), "ms^2")],
        ),
        ("lf_hf_ratio", vec![("lf_hf_ratio".into(), "ratio")]),
        ("triangular", vec![("triangular_index".into(), "ratio")]),
    ];
    if include_acc {
        let mut acc = Vec::new();
        for ch in ["ACC_X", "ACC_Y", "ACC_Z"] {
            acc.extend(stat_names(ch, "1/64 g", "(1/64 g)^2"));
        }
        groups.push(("acc", acc));
    }
    groups
}

/// `(name, group, unit)` for every physiological feature.
pub fn physio_manifest(include_acc: bool) -> Vec<(String, &'static str, &'static str)> {
    group_layout(include_acc)
        .into_iter()
        .flat_map(|(group, names)| names.into_iter().map(move |(n, u)| (n, group, u)))
        .collect()
}

fn stat_values(s: &StatFeatures) -> [f64; 5] {
    [s.mean, s.var, s.std, s.min, s.max]
}

fn regline_values(r: &RegLineFeatures) -> [f64; 4] {
    [r.f_slope, r.f_sqrt_slope, r.f_intercept1, r.f_intercept2]
}

/// Window samples of a channel, if enough of them are present.
fn channel_window(
    rec: &PhysioRecording,
    kind: ChannelKind,
    end_ms: i64,
    cfg: &PhysioConfig,
) -> Option<Vec<(f64, f64)>> {
    let ch = rec.channels.get(&kind)?;
    let w = ch.window(end_ms, (cfg.window_s * 1000.0).round() as i64);
    let expected = cfg.window_s * ch.rate_hz;
    if w.samples.len() < 2 || (w.samples.len() as f64) < cfg.min_coverage * expected {
        return None;
    }
    Some(w.timed_samples())
}

fn ys(points: &[(f64, f64)]) -> Vec<f64> {
    points.iter().map(|p| p.1).collect()
}

fn stats_and_line(points: &[(f64, f64)]) -> Option<Vec<f64>> {
    let s = stat_features(&ys(points)).ok()?;
    let r = regline_features(points).ok()?;
    let mut out = stat_values(&s).to_vec();
    out.extend(regline_values(&r));
    Some(out)
}

fn group_values(
    group: &str,
    rec: &PhysioRecording,
    end_ms: i64,
    cfg: &PhysioConfig,
) -> Option<Vec<f64>> {
    let window = |kind| channel_window(rec, kind, end_ms, cfg);
    match group {
        "eda" => stats_and_line(&window(ChannelKind::Eda)?),
        "eda_decomp" => {
            let pts = window(ChannelKind::Eda)?;
            let rate = rec.channels[&ChannelKind::Eda].rate_hz;
            let d = decompose_eda(&ys(&pts), rate).ok()?;
            let scl: Vec<(f64, f64)> = pts.iter().zip(&d.scl).map(|(p, &v)| (p.0, v)).collect();
            let mut out = stats_and_line(&scl)?;
            out.extend(stat_values(&stat_features(&d.scr).ok()?));
            Some(out)
        }
        "bvp" => Some(stat_values(&stat_features(&ys(&window(ChannelKind::Bvp)?)).ok()?).to_vec()),
        "hr" => {
            let pts = window(ChannelKind::Hr)?;
            let s = stat_features(&ys(&pts)).ok()?;
            let r = regline_features(&pts).ok()?;
            let mut out = stat_values(&s).to_vec();
            out.push(s.rms);
            out.extend(regline_values(&r));
            Some(out)
        }
        "st" => stats_and_line(&window(ChannelKind::St)?),
        "acc" => {
            let mut out = Vec::new();
            for kind in [ChannelKind::AccX, ChannelKind::AccY, ChannelKind::AccZ] {
                out.extend(stat_values(&stat_features(&ys(&window(kind)?)).ok()?));
            }
            Some(out)
        }
        _ => {
            let ibi = rec.ibi.as_ref()?;
            let w = ibi.window(end_ms, (cfg.window_s * 1000.0).round() as i64);
            let nn = w.intervals_ms();
            match group {
                "hrv_time" => {
                    let s = stat_features(&nn).ok()?;
                    let t = hrv_time_features(&nn).ok()?;
                    Some(vec![
                        s.mean,
                        s.var,
                        s.std,
                        t.nni_50 as f64,
                        t.pnni_50,
                        t.nni_20 as f64,
                        t.pnni_20,
                        t.sdsd,
                        t.range_nni,
                        t.cvsd,
                        t.cvnni,
                    ])
                }
                "hrv_freq" | "lf_hf_ratio" => {
                    let times: Vec<f64> = w.entries.iter().map(|e| e.offset_seconds).collect();
                    let f = hrv_freq_features(&times, &nn).ok()?;
                    if group == "hrv_freq" {
                        Some(vec![f.vlf, f.lf, f.hf])
                    } else {
                        Some(vec![f.lf_hf_ratio().ok()?])
                    }
                }
                "triangular" => Some(vec![triangular_index(&nn).ok()?]),
                _ => None,
            }
        }
    }
}

/// Physiological features over `[arrival - window_s, arrival)`. Groups whose
/// channel is absent or too sparse are masked.
pub fn physio_feature_vector(
    rec: &PhysioRecording,
    arrival: Timestamp,
    cfg: &PhysioConfig,
) -> FeatureVector {
    let mut v = FeatureVector::new();
    for (group, names) in group_layout(cfg.include_acc) {
        match group_values(group, rec, arrival.utc_millis, cfg) {
            Some(values) => {
                debug_assert_eq!(values.len(), names.len());
                for ((name, _), value) in names.into_iter().zip(values) {
                    v.push(name, group, value);
                }
            }
            None => {
                for (name, _) in names {
                    v.push_masked(name, group);
                }
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{IbiEntry, IbiSeries, PhysioChannel};

    fn channel(kind: ChannelKind, rate: f64, seconds: f64, f: impl Fn(f64) -> f64) -> PhysioChannel {
        let n = (rate * seconds) as usize;
        PhysioChannel {
            kind,
            start: Timestamp::utc(0),
            rate_hz: rate,
            samples: (0..n).map(|i| f(i as f64 / rate)).collect(),
        }
    }

    fn full_recording() -> PhysioRecording {
        let mut rec = PhysioRecording::default();
        let secs = 900.0;
        for (kind, rate) in [
            (ChannelKind::Eda, 4.0),
            (ChannelKind::Bvp, 64.0),
            (ChannelKind::Hr, 1.0),
            (ChannelKind::St, 4.0),
        ] {
            rec.channels.insert(
                kind,
                channel(kind, rate, secs, |t| 2.0 + (t / 7.0).sin() + 0.001 * t),
            );
        }
        let mut t = 0.0;
        let mut entries = Vec::new();
        while t < secs {
            let v = 0.9 + 0.05 * (2.0 * std::f64::consts::PI * 0.25 * t).sin();
            t += v;
            entries.push(IbiEntry {
                offset_seconds: t,
                interval_seconds: v,
            });
        }
        rec.ibi = Some(IbiSeries {
            start: Timestamp::utc(0),
            entries,
        });
        rec
    }

    #[test]
    fn manifest_sizes() {
        assert_eq!(physio_manifest(false).len(), 63);
        assert_eq!(physio_manifest(true).len(), 78);
    }

    #[test]
    fn no_data_masks_everything() {
        let v = physio_feature_vector(
            &PhysioRecording::default(),
            Timestamp::utc(600_000),
            &PhysioConfig::default(),
        );
        assert_eq!(v.len(), 63);
        assert!(v.entries.iter().all(|e| e.masked && e.value == 0.0));
    }

    #[test]
    fn full_recording_unmasked() {
        let v = physio_feature_vector(
            &full_recording(),
            Timestamp::utc(600_000),
            &PhysioConfig::default(),
        );
        let names: Vec<String> = physio_manifest(false).into_iter().map(|m| m.0).collect();
        assert_eq!(v.names().collect::<Vec<_>>(), names);
        let masked: Vec<&str> = v
            .entries
            .iter()
            .filter(|e| e.masked)
            .map(|e| e.name.as_str())
            .collect();
        assert!(masked.is_empty(), "{masked:?}");
    }

    #[test]
    fn missing_ibi_masks_only_hrv() {
        let mut rec = full_recording();
        rec.ibi = None;
        let v = physio_feature_vector(&rec, Timestamp::utc(600_000), &PhysioConfig::default());
        assert!(v.get("EDA_mean").is_some());
        assert!(v.group_masked("hrv_time"));
        assert!(v.group_masked("hrv_freq"));
        assert!(v.group_masked("triangular"));
    }

    #[test]
    fn sparse_channel_is_masked() {
        let rec = full_recording();
        // Only 60 s of data precede this arrival.
        let v = physio_feature_vector(&rec, Timestamp::utc(60_000), &PhysioConfig::default());
        assert!(v.group_masked("eda"));
        assert!(v.group_masked("hrv_freq"));
    }
}
