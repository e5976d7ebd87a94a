//! Wristband signal synthesis for one wear session. Arousal raises the
//! tonic EDA level, the SCR rate and the heart rate.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::event::{ChannelKind, IbiEntry, IbiSeries, PhysioChannel, PhysioRecording, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysioSynthConfig {
    /// Share of participants who wear the wristband.
    pub wear_fraction: f64,
    /// Study day (0-based) of the single wear session.
    pub wear_day: usize,
    pub wear_start_min: i64,
    pub wear_hours: f64,
    pub eda_tonic: f64,
    pub eda_arousal: f64,
    pub scr_per_min: f64,
    /// Relative SCR rate increase per arousal point above 3.
    pub scr_arousal: f64,
    pub hr_baseline: f64,
    pub hr_arousal: f64,
    pub beat_drop_probability: f64,
}

impl Default for PhysioSynthConfig {
    fn default() -> Self {
        Self {
            wear_fraction: 2.0 / 3.0,
            wear_day: 1,
            wear_start_min: 9 * 60,
            wear_hours: 10.0,
            eda_tonic: 2.0,
            eda_arousal: 0.4,
            scr_per_min: 2.0,
            scr_arousal: 0.5,
            hr_baseline: 70.0,
            hr_arousal: 5.0,
            beat_drop_probability: 0.03,
        }
    }
}

pub const EDA_HZ: f64 = 4.0;
pub const BVP_HZ: f64 = 64.0;
pub const HR_HZ: f64 = 1.0;
pub const ST_HZ: f64 = 4.0;
pub const ACC_HZ: f64 = 32.0;

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

fn channel(kind: ChannelKind, start: Timestamp, rate_hz: f64, samples: Vec<f64>) -> PhysioChannel {
    PhysioChannel {
        kind,
        start,
        rate_hz,
        samples,
    }
}

/// Skin conductance response kernel (rise 0.75 s, decay 4 s), peak near 1.
pub fn scr_kernel(t: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        ((-t / 4.0).exp() - (-t / 0.75).exp()) / 0.6
    }
}

/// Samples every channel for `seconds` starting at `start`; `arousal(t_s)`
/// gives the latent arousal `t_s` seconds into the session.
pub fn synthesize<R: Rng>(
    cfg: &PhysioSynthConfig,
    start: Timestamp,
    seconds: f64,
    arousal: &dyn Fn(f64) -> f64,
    rng: &mut R,
) -> PhysioRecording {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    // EDA: slow drifting tonic level plus sparse SCR kernels.
    let n_eda = (seconds * EDA_HZ) as usize;
    let mut eda = vec![0.0; n_eda];
    let mut drift = 0.0;
    for (i, v) in eda.iter_mut().enumerate() {
        let t = i as f64 / EDA_HZ;
        drift = 0.999 * drift + 0.004 * unit.sample(rng);
        *v = cfg.eda_tonic + cfg.eda_arousal * (arousal(t) - 3.0) + drift;
    }
    let amp = LogNormal::new(0.3f64.ln(), 0.5).expect("valid lognormal");
    let kernel_len = (30.0 * EDA_HZ) as usize;
    let mut t = 0.0;
    while t < seconds {
        let rate = cfg.scr_per_min / 60.0 * (1.0 + cfg.scr_arousal * (arousal(t) - 3.0)).max(0.1);
        t += -(1.0 - rng.random::<f64>()).ln() / rate;
        let a = amp.sample(rng);
        let first = (t * EDA_HZ).ceil() as usize;
        for i in first..(first + kernel_len).min(n_eda) {
            eda[i] += a * scr_kernel(i as f64 / EDA_HZ - t);
        }
    }
    let eda: Vec<f64> = eda
        .into_iter()
        .map(|v| round_to((v + 0.005 * unit.sample(rng)).max(0.01), 4))
        .collect();

    // Heart rate at 1 Hz drives both the BVP phase and the beat sequence.
    let n_hr = seconds as usize;
    let mut hr_drift = 0.0;
    let hr: Vec<f64> = (0..n_hr)
        .map(|i| {
            hr_drift = 0.99 * hr_drift + 0.3 * unit.sample(rng);
            (cfg.hr_baseline + cfg.hr_arousal * (arousal(i as f64) - 3.0) + hr_drift).clamp(40.0, 180.0)
        })
        .collect();
    let hr_at = |t: f64| hr[(t as usize).min(n_hr.saturating_sub(1))];

    let mut entries = Vec::new();
    let mut beat = 0.0;
    loop {
        let base = 60.0 / hr_at(beat);
        let modulation = 1.0
            + 0.04 * (2.0 * std::f64::consts::PI * 0.1 * beat).sin()
            + 0.03 * (2.0 * std::f64::consts::PI * 0.25 * beat).sin();
        let interval = (base * modulation + 0.01 * unit.sample(rng)).clamp(0.3, 2.0);
        beat += interval;
        if beat >= seconds {
            break;
        }
        if rng.random::<f64>() >= cfg.beat_drop_probability {
            entries.push(IbiEntry {
                offset_seconds: round_to(beat, 6),
                interval_seconds: round_to(interval, 6),
            });
        }
    }

    let n_bvp = (seconds * BVP_HZ) as usize;
    let mut phase = 0.0;
    let bvp: Vec<f64> = (0..n_bvp)
        .map(|i| {
            phase += hr_at(i as f64 / BVP_HZ) / 60.0 / BVP_HZ;
            round_to(50.0 * (2.0 * std::f64::consts::PI * phase).sin() + 3.0 * unit.sample(rng), 2)
        })
        .collect();

    let n_st = (seconds * ST_HZ) as usize;
    let st: Vec<f64> = (0..n_st)
        .map(|i| {
            let t = i as f64 / ST_HZ;
            round_to(33.0 + 0.4 * (t / 1800.0).sin() + 0.02 * unit.sample(rng), 2)
        })
        .collect();

    let n_acc = (seconds * ACC_HZ) as usize;
    let mut axes = [Vec::with_capacity(n_acc), Vec::with_capacity(n_acc), Vec::with_capacity(n_acc)];
    for _ in 0..n_acc {
        axes[0].push((2.0 * unit.sample(rng)).round());
        axes[1].push((2.0 * unit.sample(rng)).round());
        axes[2].push((64.0 + 2.0 * unit.sample(rng)).round());
    }
    let [ax, ay, az] = axes;

    let mut channels = BTreeMap::new();
    for c in [
        channel(ChannelKind::Eda, start, EDA_HZ, eda),
        channel(ChannelKind::Bvp, start, BVP_HZ, bvp),
        channel(ChannelKind::Hr, start, HR_HZ, hr.into_iter().map(|v| round_to(v, 2)).collect()),
        channel(ChannelKind::St, start, ST_HZ, st),
        channel(ChannelKind::AccX, start, ACC_HZ, ax),
        channel(ChannelKind::AccY, start, ACC_HZ, ay),
        channel(ChannelKind::AccZ, start, ACC_HZ, az),
    ] {
        channels.insert(c.kind, c);
    }
    PhysioRecording {
        channels,
        ibi: Some(IbiSeries { start, entries }),
        ibi_dropped: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channel_lengths_and_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rec = synthesize(&PhysioSynthConfig::default(), Timestamp::utc(1_580_000_000_000), 600.0, &|_| 3.0, &mut rng);
        assert_eq!(rec.channels[&ChannelKind::Eda].samples.len(), 2400);
        assert_eq!(rec.channels[&ChannelKind::Bvp].samples.len(), 38_400);
        assert_eq!(rec.channels[&ChannelKind::AccZ].samples.len(), 19_200);
        let ibi = rec.ibi.unwrap();
        assert!(ibi.entries.len() > 500);
        assert!(ibi.entries.windows(2).all(|w| w[0].offset_seconds < w[1].offset_seconds));
        assert!(ibi.entries.iter().all(|e| e.interval_seconds > 0.25 && e.interval_seconds < 3.0));
        assert!(rec.channels[&ChannelKind::Eda].samples.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn arousal_raises_heart_rate_and_eda() {
        let cfg = PhysioSynthConfig::default();
        let start = Timestamp::utc(1_580_000_000_000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let low = synthesize(&cfg, start, 900.0, &|_| 1.5, &mut ChaCha8Rng::seed_from_u64(5));
        let high = synthesize(&cfg, start, 900.0, &|_| 4.5, &mut ChaCha8Rng::seed_from_u64(5));
        for kind in [ChannelKind::Hr, ChannelKind::Eda] {
            assert!(mean(&high.channels[&kind].samples) > mean(&low.channels[&kind].samples));
        }
    }
}
