//! Synthetic participant cohorts: phone usage, notifications, ESM prompts
//! and answers, wristband signals, and response times drawn from a planted
//! log-linear model whose coefficients are kept as ground truth.
//!
//! Every participant draws from independent seeded streams, so one
//! participant's data does not depend on the cohort size, and the
//! intercept/noise scale of the response model can be changed without
//! disturbing any other draw (calibration relies on this).

mod calibrate;
mod physio;
pub mod scheduler;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::event::{
    pluscode, write_event_log, Activity, ActivityEvent, AppForegroundEvent, ContactRelation,
    EsmResponse, EventError, EventLog, Interruptibility, LocationEvent, NotificationEvent,
    ParticipantId, PhysioRecording, Relation, ScreenEvent, ScreenState, SocialRole, Timestamp,
    MILLIS_PER_DAY, MILLIS_PER_MINUTE,
};
use crate::labeling::CategoryMap;

pub use calibrate::{
    calibrate, measure_cohort, pooled_top_k_cdf, zipf_exponent_for_coverage, CalibrationTargets,
    CohortMeasurement, TARGET_CDF, TARGET_TOP10_COVERAGE,
};
pub use physio::{scr_kernel, synthesize as synthesize_physio, PhysioSynthConfig};
pub use scheduler::{schedule_prompts, EsmConfig, Prompt, PromptKind};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub count: usize,
    /// Zipf exponent of notification popularity over app ranks.
    pub popularity_exponent: f64,
    /// 1-based popularity ranks held by communication apps.
    pub communication_ranks: Vec<usize>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            count: 30,
            popularity_exponent: 1.8283,
            communication_ranks: vec![1, 2, 3, 5, 6, 8],
        }
    }
}

/// Per-hour rates for the midnight, morning, afternoon and evening buckets.
pub type BucketRates = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UsageConfig {
    pub sessions_per_hour: BucketRates,
    pub session_median_s: f64,
    pub session_sigma: f64,
    /// Mean seconds between foreground switches inside a session.
    pub switch_every_s: f64,
    /// Chance that a background foreground event opens a notifying app.
    pub notifying_app_share: f64,
    pub response_session_median_s: f64,
    /// Session rate is scaled by `exp(-busy_session_effect * busyness)`.
    pub busy_session_effect: f64,
}

impl Default for UsageConfig {
    fn default() -> Self {
        Self {
            sessions_per_hour: [0.2, 2.0, 2.0, 2.5],
            session_median_s: 150.0,
            session_sigma: 1.1,
            switch_every_s: 60.0,
            notifying_app_share: 0.0,
            response_session_median_s: 45.0,
            busy_session_effect: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoodConfig {
    pub step_min: i64,
    /// AR(1) coefficient per step.
    pub persistence: f64,
    pub stationary_sd: f64,
    pub valence_means: BucketRates,
    pub arousal_means: BucketRates,
    /// Spread of per-participant mean shifts.
    pub participant_sd: f64,
    /// Noise added before rounding an answer to the 1..5 scale.
    pub report_noise: f64,
}

impl Default for MoodConfig {
    fn default() -> Self {
        Self {
            step_min: 15,
            persistence: 0.97,
            stationary_sd: 0.8,
            valence_means: [2.9, 3.4, 3.4, 3.7],
            arousal_means: [2.3, 2.9, 3.0, 2.7],
            participant_sd: 0.25,
            report_noise: 0.3,
        }
    }
}

/// `log10(response seconds)` = intercept + participant shift + app effect
/// + betas . (valence - 3, arousal - 3, screen_on, time bucket) + sigma * N(0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseModel {
    pub intercept: f64,
    pub sigma: f64,
    pub beta_valence: f64,
    pub beta_arousal: f64,
    pub beta_screen_on: f64,
    pub beta_time: BucketRates,
    pub app_effect_sd: f64,
    /// Added to the app effect of every app outside the communication category.
    pub non_communication_effect: f64,
    pub participant_sd: f64,
    /// Planned responses later than this are dropped (never opened).
    pub max_days: f64,
    /// Share of the noise variance common to one app's notifications on one
    /// local day (days on which an app is largely ignored).
    pub app_day_share: f64,
    /// Day-to-day AR(1) coefficient of that shared component.
    pub app_day_persistence: f64,
    /// Share of the noise variance taken by the participant's latent
    /// busyness, which is common to all apps and drifts over hours.
    pub busy_share: f64,
    /// AR(1) coefficient of busyness per mood step.
    pub busy_persistence: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self {
            intercept: 2.3583,
            sigma: 3.2952,
            beta_valence: -0.45,
            beta_arousal: -0.15,
            beta_screen_on: -0.9,
            beta_time: [0.8, 0.0, 0.0, 0.15],
            app_effect_sd: 0.25,
            non_communication_effect: 6.0,
            participant_sd: 0.4,
            max_days: 7.0,
            app_day_share: 0.1,
            app_day_persistence: 0.7,
            busy_share: 0.7,
            busy_persistence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub days: usize,
    /// First local midnight of the study, in UTC milliseconds.
    pub start_utc_ms: i64,
    pub tz_offset_min: i32,
    pub apps: AppConfig,
    pub notifications_per_hour: BucketRates,
    pub usage: UsageConfig,
    pub esm: EsmConfig,
    pub mood: MoodConfig,
    pub response: ResponseModel,
    pub physio: PhysioSynthConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_participants: 18,
            days: 30,
            // 2020-01-27 00:00 at UTC+1
            start_utc_ms: 1_580_079_600_000,
            tz_offset_min: 60,
            apps: AppConfig::default(),
            notifications_per_hour: [0.4, 3.8, 3.8, 3.2],
            usage: UsageConfig::default(),
            esm: EsmConfig::default(),
            mood: MoodConfig::default(),
            response: ResponseModel::default(),
            physio: PhysioSynthConfig::default(),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(msg.to_string()))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = |r: &BucketRates| r.iter().all(|v| v.is_finite() && *v > 0.0);
        check(self.n_participants >= 1, "n_participants must be at least 1")?;
        check(self.days >= 1, "days must be at least 1")?;
        check(self.start_utc_ms >= 0, "start_utc_ms must be non-negative")?;
        check((-840..=840).contains(&self.tz_offset_min), "tz_offset_min out of range")?;
        check(self.apps.count >= 1, "apps.count must be at least 1")?;
        check(self.apps.popularity_exponent >= 0.0, "apps.popularity_exponent must be non-negative")?;
        check(
            self.apps
                .communication_ranks
                .iter()
                .all(|&r| r >= 1 && r <= self.apps.count),
            "apps.communication_ranks must lie in 1..=apps.count",
        )?;
        check(positive(&self.notifications_per_hour), "notification rates must be > 0")?;
        check(positive(&self.usage.sessions_per_hour), "session rates must be > 0")?;
        check(
            self.usage.session_median_s > 0.0
                && self.usage.session_sigma > 0.0
                && self.usage.switch_every_s > 0.0
                && self.usage.response_session_median_s > 0.0,
            "usage durations must be > 0",
        )?;
        check(
            (0.0..=1.0).contains(&self.usage.notifying_app_share),
            "usage.notifying_app_share must be in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.esm.answer_probability),
            "esm.answer_probability must be in [0, 1]",
        )?;
        check(
            self.esm.period_min > 0
                && self.esm.trigger_min > 0
                && self.esm.min_gap_min >= 0
                && self.esm.answer_delay_max_s >= 0,
            "esm durations must be positive",
        )?;
        check(
            0 <= self.esm.window_start_min
                && self.esm.window_start_min < self.esm.window_end_min
                && self.esm.window_end_min <= 24 * 60,
            "esm window must satisfy 0 <= start < end <= 1440",
        )?;
        check(self.mood.step_min > 0, "mood.step_min must be > 0")?;
        check(
            (0.0..1.0).contains(&self.mood.persistence.abs()),
            "mood.persistence must be in (-1, 1)",
        )?;
        check(
            self.mood.stationary_sd >= 0.0 && self.mood.participant_sd >= 0.0 && self.mood.report_noise >= 0.0,
            "mood spreads must be non-negative",
        )?;
        check(
            self.response.sigma.is_finite() && self.response.sigma > 0.0,
            "response.sigma must be > 0",
        )?;
        check(self.response.max_days > 0.0, "response.max_days must be > 0")?;
        check(
            (0.0..=1.0).contains(&self.response.app_day_share),
            "response.app_day_share must be in [0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.response.app_day_persistence.abs())
                && (0.0..1.0).contains(&self.response.busy_persistence.abs()),
            "response persistences must be in (-1, 1)",
        )?;
        check(
            self.response.busy_share >= 0.0
                && self.response.app_day_share + self.response.busy_share <= 1.0,
            "response.busy_share + response.app_day_share must be in [0, 1]",
        )?;
        check(
            self.response.app_effect_sd >= 0.0 && self.response.participant_sd >= 0.0,
            "response spreads must be non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&self.physio.wear_fraction),
            "physio.wear_fraction must be in [0, 1]",
        )?;
        check(self.physio.wear_hours > 0.0, "physio.wear_hours must be > 0")?;
        Ok(())
    }

    pub fn study_end_utc_ms(&self) -> i64 {
        self.start_utc_ms + self.days as i64 * MILLIS_PER_DAY
    }

    pub fn participant_id(&self, index: usize) -> ParticipantId {
        ParticipantId(format!("P{:02}", index + 1))
    }

    /// Whether participant `index` wears the wristband: spreads
    /// `wear_fraction * n` wearers evenly over the cohort.
    pub fn wears_physio(&self, index: usize) -> bool {
        let f = self.physio.wear_fraction;
        ((index + 1) as f64 * f).floor() > (index as f64 * f).floor()
    }
}

const STREAM_APPS: u64 = 1;
const STREAM_MOOD: u64 = 2;
const STREAM_USAGE: u64 = 3;
const STREAM_NOTIFICATIONS: u64 = 4;
const STREAM_RESPONSE_NOISE: u64 = 5;
const STREAM_CONTEXT: u64 = 6;
const STREAM_ESM: u64 = 7;
const STREAM_PHYSIO: u64 = 8;
const STREAM_RESPONSE_SESSIONS: u64 = 9;
const STREAM_PLACES: u64 = 10;
const STREAM_APP_DAY_NOISE: u64 = 11;
const STREAM_BUSY: u64 = 12;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, participant: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(participant as u64)) ^ stream))
}

/// Apps opened in the background that never post notifications.
const USAGE_ONLY_APPS: [&str; 5] = [
    "com.android.chrome",
    "com.google.android.apps.photos",
    "com.android.camera2",
    "com.android.settings",
    "com.google.android.apps.nexuslauncher",
];

fn bucket_of(cfg: &GeneratorConfig, utc_ms: i64) -> usize {
    let local = utc_ms + i64::from(cfg.tz_offset_min) * MILLIS_PER_MINUTE;
    (local.rem_euclid(MILLIS_PER_DAY) / (6 * 60 * MILLIS_PER_MINUTE)) as usize
}

fn day_of(cfg: &GeneratorConfig, utc_ms: i64) -> usize {
    (((utc_ms - cfg.start_utc_ms) / MILLIS_PER_DAY).max(0) as usize).min(cfg.days - 1)
}

/// Zipf weights `r^-s` for ranks `1..=n`.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

/// Latent mood on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodPath {
    pub start_utc_ms: i64,
    pub step_ms: i64,
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    /// Standard normal busyness on the same grid.
    pub busy: Vec<f64>,
}

impl MoodPath {
    pub fn at(&self, utc_ms: i64) -> (f64, f64) {
        let i = ((utc_ms - self.start_utc_ms).max(0) / self.step_ms) as usize;
        let i = i.min(self.valence.len() - 1);
        (self.valence[i], self.arousal[i])
    }

    pub fn busy_at(&self, utc_ms: i64) -> f64 {
        let i = ((utc_ms - self.start_utc_ms).max(0) / self.step_ms) as usize;
        self.busy[i.min(self.busy.len() - 1)]
    }
}

fn mood_path(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, busy_rng: &mut ChaCha8Rng) -> MoodPath {
    let m = &cfg.mood;
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let shift_v = m.participant_sd * unit.sample(rng);
    let shift_a = m.participant_sd * unit.sample(rng);
    let step_ms = m.step_min * MILLIS_PER_MINUTE;
    let n = (cfg.days as i64 * MILLIS_PER_DAY / step_ms).max(1) as usize;
    let innovation = m.stationary_sd * (1.0 - m.persistence * m.persistence).sqrt();
    let mut valence = Vec::with_capacity(n);
    let mut arousal = Vec::with_capacity(n);
    let (mut dv, mut da) = (m.stationary_sd * unit.sample(rng), m.stationary_sd * unit.sample(rng));
    for k in 0..n {
        let b = bucket_of(cfg, cfg.start_utc_ms + k as i64 * step_ms);
        if k > 0 {
            dv = m.persistence * dv + innovation * unit.sample(rng);
            da = m.persistence * da + innovation * unit.sample(rng);
        }
        valence.push(m.valence_means[b] + shift_v + dv);
        arousal.push(m.arousal_means[b] + shift_a + da);
    }
    let phi = cfg.response.busy_persistence;
    let mut b = unit.sample(busy_rng);
    let busy = (0..n)
        .map(|k| {
            if k > 0 {
                b = phi * b + (1.0 - phi * phi).sqrt() * unit.sample(busy_rng);
            }
            b
        })
        .collect();
    MoodPath {
        start_utc_ms: cfg.start_utc_ms,
        step_ms,
        valence,
        arousal,
        busy,
    }
}

fn likert(latent: f64) -> u8 {
    latent.round().clamp(1.0, 5.0) as u8
}

/// Piecewise-constant Poisson process over hourly slots; `scale(t)` scales
/// the bucket rate of the slot starting at `t`.
fn poisson_times(
    cfg: &GeneratorConfig,
    rates: &BucketRates,
    scale: &dyn Fn(i64) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<i64> {
    let hour = 60 * MILLIS_PER_MINUTE;
    let mut out = Vec::new();
    for h in 0..cfg.days as i64 * 24 {
        let t0 = cfg.start_utc_ms + h * hour;
        let rate = rates[bucket_of(cfg, t0)] * scale(t0);
        let count = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
        for _ in 0..count {
            out.push(t0 + rng.random_range(0..hour));
        }
    }
    out.sort_unstable();
    out
}

/// Merges overlapping or touching `[start, end)` intervals.
pub fn merge_intervals(mut intervals: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    intervals.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn covered(intervals: &[(i64, i64)], t: i64) -> bool {
    let i = intervals.partition_point(|iv| iv.0 <= t);
    i > 0 && t < intervals[i - 1].1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftNotification {
    pub arrival_utc_ms: i64,
    pub app: usize,
    pub content_length: u32,
    pub contact: Option<usize>,
    pub valence: f64,
    pub arousal: f64,
    pub screen_on: bool,
    pub bucket: usize,
    /// Standard normal response noise.
    pub noise: f64,
}

/// Everything about a participant that does not depend on the response
/// model's intercept or noise scale.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub index: usize,
    pub participant: ParticipantId,
    pub apps: Vec<String>,
    pub app_effects: Vec<f64>,
    pub participant_shift: f64,
    pub mood: MoodPath,
    /// Background use sessions, merged.
    pub sessions: Vec<(i64, i64)>,
    pub background_opens: Vec<(i64, String)>,
    pub notifications: Vec<DraftNotification>,
}

fn participant_apps(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<String> {
    let categories = CategoryMap::default();
    let mut comm: Vec<String> = Vec::new();
    let mut other: Vec<String> = Vec::new();
    for (app, cat) in categories.apps() {
        if cat == "communication" {
            comm.push(app.to_string());
        } else {
            other.push(app.to_string());
        }
    }
    comm.shuffle(rng);
    other.shuffle(rng);
    let mut comm = comm.into_iter();
    let mut other = other.into_iter();
    let mut extra = 0;
    let comm_ranks: BTreeSet<usize> = cfg.apps.communication_ranks.iter().copied().collect();
    (1..=cfg.apps.count)
        .map(|rank| {
            let pick = if comm_ranks.contains(&rank) {
                comm.next()
            } else {
                other.next()
            };
            pick.unwrap_or_else(|| {
                extra += 1;
                format!("org.example.app{extra:02}")
            })
        })
        .collect()
}

pub fn skeleton(cfg: &GeneratorConfig, index: usize) -> Skeleton {
    let unit = Normal::new(0.0, 1.0).expect("valid normal");

    let mut rng = stream(cfg.seed, index, STREAM_APPS);
    let apps = participant_apps(cfg, &mut rng);
    let categories = CategoryMap::default();
    let app_effects: Vec<f64> = apps
        .iter()
        .map(|a| {
            let shift = if categories.category_of(a) == "communication" {
                0.0
            } else {
                cfg.response.non_communication_effect
            };
            shift + cfg.response.app_effect_sd * unit.sample(&mut rng)
        })
        .collect();
    let participant_shift = cfg.response.participant_sd * unit.sample(&mut rng);
    let popularity = WeightedIndex::new(zipf_weights(apps.len(), cfg.apps.popularity_exponent))
        .expect("positive weights");

    let mood = mood_path(
        cfg,
        &mut stream(cfg.seed, index, STREAM_MOOD),
        &mut stream(cfg.seed, index, STREAM_BUSY),
    );

    let mut rng = stream(cfg.seed, index, STREAM_USAGE);
    let duration = LogNormal::new(cfg.usage.session_median_s.ln(), cfg.usage.session_sigma)
        .expect("valid lognormal");
    let end = cfg.study_end_utc_ms();
    let mut raw_sessions = Vec::new();
    let mut background_opens = Vec::new();
    let busy_scale = |t: i64| (-cfg.usage.busy_session_effect * mood.busy_at(t)).exp();
    for start in poisson_times(cfg, &cfg.usage.sessions_per_hour, &busy_scale, &mut rng) {
        let stop = (start + (duration.sample(&mut rng) * 1000.0) as i64 + 1000).min(end);
        raw_sessions.push((start, stop));
        let mut t = start;
        while t < stop {
            let app = if rng.random::<f64>() < cfg.usage.notifying_app_share {
                apps[popularity.sample(&mut rng)].clone()
            } else {
                USAGE_ONLY_APPS[rng.random_range(0..USAGE_ONLY_APPS.len())].to_string()
            };
            background_opens.push((t, app));
            t += (-(1.0 - rng.random::<f64>()).ln() * cfg.usage.switch_every_s * 1000.0) as i64 + 1000;
        }
    }
    let sessions = merge_intervals(raw_sessions);
    background_opens.sort();

    let mut rng = stream(cfg.seed, index, STREAM_NOTIFICATIONS);
    let length = LogNormal::new(40f64.ln(), 0.8).expect("valid lognormal");
    let mut noise_rng = stream(cfg.seed, index, STREAM_RESPONSE_NOISE);
    let mut day_rng = stream(cfg.seed, index, STREAM_APP_DAY_NOISE);
    let phi = cfg.response.app_day_persistence;
    let mut app_day: Vec<Vec<f64>> = vec![apps.iter().map(|_| unit.sample(&mut day_rng)).collect()];
    for d in 1..cfg.days {
        let row = app_day[d - 1]
            .iter()
            .map(|prev| phi * prev + (1.0 - phi * phi).sqrt() * unit.sample(&mut day_rng))
            .collect();
        app_day.push(row);
    }
    let shared = cfg.response.app_day_share.sqrt();
    let busy = cfg.response.busy_share.sqrt();
    let own = (1.0 - cfg.response.app_day_share - cfg.response.busy_share).max(0.0).sqrt();
    let notifications = poisson_times(cfg, &cfg.notifications_per_hour, &|_| 1.0, &mut rng)
        .into_iter()
        .map(|arrival| {
            let app = popularity.sample(&mut rng);
            let is_comm = categories.category_of(&apps[app]) == "communication";
            let contact = (is_comm && rng.random::<f64>() < 0.8).then(|| rng.random_range(0..CONTACTS));
            let (valence, arousal) = mood.at(arrival);
            DraftNotification {
                arrival_utc_ms: arrival,
                app,
                content_length: length.sample(&mut rng).round().min(4000.0) as u32,
                contact,
                valence,
                arousal,
                screen_on: covered(&sessions, arrival),
                bucket: bucket_of(cfg, arrival),
                noise: busy * mood.busy_at(arrival)
                    + shared * app_day[day_of(cfg, arrival)][app]
                    + own * unit.sample(&mut noise_rng),
            }
        })
        .collect();

    Skeleton {
        index,
        participant: cfg.participant_id(index),
        apps,
        app_effects,
        participant_shift,
        mood,
        sessions,
        background_opens,
        notifications,
    }
}

const CONTACTS: usize = 25;

pub(crate) fn planned_latency_ms(
    intercept: f64,
    sigma: f64,
    max_days: f64,
    systematic: f64,
    noise: f64,
    arrival_utc_ms: i64,
    study_end_utc_ms: i64,
) -> Option<i64> {
    let log10_s = intercept + systematic + sigma * noise;
    let ms = (10f64.powf(log10_s).max(1.0) * 1000.0).round();
    (ms <= max_days * MILLIS_PER_DAY as f64 && arrival_utc_ms + (ms as i64) < study_end_utc_ms)
        .then_some(ms as i64)
}

impl Skeleton {
    /// Planted `log10(seconds)` without intercept and noise.
    pub fn systematic(&self, model: &ResponseModel, n: &DraftNotification) -> f64 {
        self.participant_shift
            + self.app_effects[n.app]
            + model.beta_valence * (n.valence - 3.0)
            + model.beta_arousal * (n.arousal - 3.0)
            + if n.screen_on { model.beta_screen_on } else { 0.0 }
            + model.beta_time[n.bucket]
    }

    /// Planned latency in ms per notification; `None` when the app is never
    /// opened for it (beyond the cap or after the study ends).
    pub fn latencies(&self, cfg: &GeneratorConfig) -> Vec<Option<i64>> {
        let model = &cfg.response;
        let end = cfg.study_end_utc_ms();
        self.notifications
            .iter()
            .map(|n| {
                planned_latency_ms(
                    model.intercept,
                    model.sigma,
                    model.max_days,
                    self.systematic(model, n),
                    n.noise,
                    n.arrival_utc_ms,
                    end,
                )
            })
            .collect()
    }

    /// Notifications and foreground events only: enough to label.
    pub fn label_log(&self, cfg: &GeneratorConfig, latencies: &[Option<i64>]) -> EventLog {
        let mut log = EventLog::empty(self.participant.clone());
        let ts = |ms: i64| Timestamp {
            utc_millis: ms,
            tz_offset_minutes: cfg.tz_offset_min,
        };
        for (i, (n, lat)) in self.notifications.iter().zip(latencies).enumerate() {
            let app = &self.apps[n.app];
            log.notifications.push(NotificationEvent {
                id: format!("{}-n{:05}", self.participant, i),
                app_package: app.clone(),
                arrival: ts(n.arrival_utc_ms),
                content_length: n.content_length,
                contact_hash: n.contact.map(|c| contact_hash(self.index, c)),
                removed_at: lat.map(|l| ts(n.arrival_utc_ms + l)),
            });
            if let Some(l) = lat {
                log.app_events.push(AppForegroundEvent {
                    app_package: app.clone(),
                    app_name: app_name(app),
                    at: ts(n.arrival_utc_ms + l),
                });
            }
        }
        for (t, app) in &self.background_opens {
            log.app_events.push(AppForegroundEvent {
                app_package: app.clone(),
                app_name: app_name(app),
                at: ts(*t),
            });
        }
        log.normalize();
        log
    }
}

fn app_name(package: &str) -> String {
    package.rsplit('.').next().unwrap_or(package).to_string()
}

fn contact_hash(participant: usize, contact: usize) -> String {
    format!("{:016x}", mix((participant as u64) << 32 | contact as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationTruth {
    pub id: String,
    pub app: String,
    pub valence: f64,
    pub arousal: f64,
    pub screen_on: bool,
    pub planned_log10_seconds: f64,
    pub planned_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant: String,
    pub participant_shift: f64,
    pub app_effects: BTreeMap<String, f64>,
    pub prompts: Vec<Prompt>,
    pub answered: usize,
    pub wear_utc_ms: Option<(i64, i64)>,
    pub notifications: Vec<NotificationTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub response: ResponseModel,
    pub participants: Vec<ParticipantTruth>,
}

#[derive(Debug, Clone)]
pub struct SyntheticParticipant {
    pub log: EventLog,
    pub truth: ParticipantTruth,
}

fn places(seed: u64, index: usize) -> Vec<String> {
    // home, work and three other spots around one city
    let mut rng = stream(seed, index, STREAM_PLACES);
    (0..5)
        .map(|_| {
            pluscode::encode(
                46.0 + rng.random_range(-0.05..0.05),
                8.95 + rng.random_range(-0.05..0.05),
            )
        })
        .collect()
}

fn context_events(cfg: &GeneratorConfig, index: usize, log: &mut EventLog) {
    let mut rng = stream(cfg.seed, index, STREAM_CONTEXT);
    let spots = places(cfg.seed, index);
    let ts = |ms: i64| Timestamp {
        utc_millis: ms,
        tz_offset_minutes: cfg.tz_offset_min,
    };
    let end = cfg.study_end_utc_ms();
    let offset = i64::from(cfg.tz_offset_min) * MILLIS_PER_MINUTE;
    let mut t = cfg.start_utc_ms + rng.random_range(0..20 * MILLIS_PER_MINUTE);
    let mut last_place = 0;
    while t < end {
        let local = t + offset;
        let hour = local.rem_euclid(MILLIS_PER_DAY) / (60 * MILLIS_PER_MINUTE);
        let weekday = Timestamp::utc(local.max(0)).weekday();
        let place = if !weekday.is_weekend() && (9..17).contains(&hour) && rng.random::<f64>() < 0.85 {
            1
        } else if (7..22).contains(&hour) && rng.random::<f64>() < 0.35 {
            2 + rng.random_range(0..3)
        } else {
            0
        };
        log.location_events.push(LocationEvent {
            plus_code_10: spots[place].clone(),
            at: ts(t),
        });
        let activity = if place != last_place {
            [Activity::Walking, Activity::InVehicle, Activity::Cycling][rng.random_range(0..3)]
        } else if rng.random::<f64>() < 0.8 {
            Activity::Still
        } else {
            [Activity::Walking, Activity::Tilting, Activity::OnFoot, Activity::Unknown][rng.random_range(0..4)]
        };
        log.activity_events.push(ActivityEvent {
            activity,
            confidence: rng.random_range(50..=100),
            at: ts(t + rng.random_range(0..5 * MILLIS_PER_MINUTE)),
        });
        last_place = place;
        t += rng.random_range(20 * MILLIS_PER_MINUTE..40 * MILLIS_PER_MINUTE);
    }
    for c in 0..CONTACTS {
        let relations: BTreeSet<Relation> = if rng.random::<f64>() < 0.15 {
            [Relation::None].into()
        } else {
            let mut set: BTreeSet<Relation> = BTreeSet::new();
            set.insert([Relation::Family, Relation::Friend, Relation::Work][rng.random_range(0..3)]);
            if rng.random::<f64>() < 0.2 {
                set.insert([Relation::Family, Relation::Friend, Relation::Work][rng.random_range(0..3)]);
            }
            set
        };
        log.contact_relations.push(
            ContactRelation::new(contact_hash(index, c), relations).expect("valid relation set"),
        );
    }
}

fn esm_answer(cfg: &GeneratorConfig, mood: &MoodPath, at: i64, rng: &mut ChaCha8Rng) -> EsmResponse {
    let noise = Normal::new(0.0, cfg.mood.report_noise.max(1e-12)).expect("valid normal");
    let (v, a) = mood.at(at);
    let local = at + i64::from(cfg.tz_offset_min) * MILLIS_PER_MINUTE;
    let hour = local.rem_euclid(MILLIS_PER_DAY) / (60 * MILLIS_PER_MINUTE);
    let weekday = Timestamp::utc(local.max(0)).weekday();
    let working = !weekday.is_weekend() && (9..18).contains(&hour);
    let u: f64 = rng.random();
    let social_role = match (working, u) {
        (true, u) if u < 0.7 => SocialRole::Work,
        (false, u) if u < 0.7 => SocialRole::Private,
        (_, u) if u < 0.85 => SocialRole::Both,
        (true, _) => SocialRole::Private,
        (false, _) => SocialRole::Work,
    };
    let interruptibility = match rng.random_range(0..10) {
        0..=3 => match social_role {
            SocialRole::Work => Interruptibility::Work,
            SocialRole::Private => Interruptibility::Private,
            SocialRole::Both => Interruptibility::Both,
        },
        4..=6 => Interruptibility::Both,
        7 => Interruptibility::None,
        8 => Interruptibility::Work,
        _ => Interruptibility::Private,
    };
    EsmResponse {
        at: Timestamp {
            utc_millis: at,
            tz_offset_minutes: cfg.tz_offset_min,
        },
        valence: likert(v + noise.sample(rng)),
        arousal: likert(a + noise.sample(rng)),
        social_role,
        interruptibility,
    }
}

/// Builds the full event log and ground truth of participant `index`.
pub fn generate_participant(cfg: &GeneratorConfig, index: usize) -> SyntheticParticipant {
    let skel = skeleton(cfg, index);
    let latencies = skel.latencies(cfg);
    let mut log = skel.label_log(cfg, &latencies);
    let ts = |ms: i64| Timestamp {
        utc_millis: ms,
        tz_offset_minutes: cfg.tz_offset_min,
    };
    let end = cfg.study_end_utc_ms();

    // Opening an app for a notification wakes the screen for a short while.
    let mut rng = stream(cfg.seed, index, STREAM_RESPONSE_SESSIONS);
    let response_len = LogNormal::new(cfg.usage.response_session_median_s.ln(), 0.8).expect("valid lognormal");
    let mut sessions = skel.sessions.clone();
    for (n, lat) in skel.notifications.iter().zip(&latencies) {
        if let Some(l) = lat {
            let open = n.arrival_utc_ms + l;
            let stop = (open + (response_len.sample(&mut rng) * 1000.0) as i64 + 1000).min(end);
            sessions.push((open, stop.max(open + 1)));
        }
    }
    let sessions = merge_intervals(sessions);
    for &(s, e) in &sessions {
        log.screen_events.push(ScreenEvent {
            state: ScreenState::On,
            at: ts(s),
        });
        if e < end {
            log.screen_events.push(ScreenEvent {
                state: ScreenState::Off,
                at: ts(e),
            });
        }
    }

    let prompts = schedule_prompts(&cfg.esm, cfg.start_utc_ms, cfg.days, cfg.tz_offset_min, &sessions);
    let mut rng = stream(cfg.seed, index, STREAM_ESM);
    let mut answered = 0;
    for p in &prompts {
        if rng.random::<f64>() < cfg.esm.answer_probability {
            let delay = rng.random_range(0..=cfg.esm.answer_delay_max_s * 1000);
            let at = (p.at_utc_ms + delay).min(end - 1);
            log.esm_responses.push(esm_answer(cfg, &skel.mood, at, &mut rng));
            answered += 1;
        }
    }

    context_events(cfg, index, &mut log);

    let wear = cfg.wears_physio(index).then(|| {
        let start = cfg.start_utc_ms
            + cfg.physio.wear_day.min(cfg.days - 1) as i64 * MILLIS_PER_DAY
            + cfg.physio.wear_start_min * MILLIS_PER_MINUTE;
        let seconds = (cfg.physio.wear_hours * 3600.0).min(((end - start) / 1000) as f64);
        (start, seconds)
    });
    log.physio = match wear {
        Some((start, seconds)) if seconds > 0.0 => {
            let mood = &skel.mood;
            let arousal = |t: f64| mood.at(start + (t * 1000.0) as i64).1;
            physio::synthesize(
                &cfg.physio,
                ts(start),
                seconds,
                &arousal,
                &mut stream(cfg.seed, index, STREAM_PHYSIO),
            )
        }
        _ => PhysioRecording::default(),
    };
    log.normalize();

    let model = &cfg.response;
    let truth = ParticipantTruth {
        participant: skel.participant.0.clone(),
        participant_shift: skel.participant_shift,
        app_effects: skel
            .apps
            .iter()
            .cloned()
            .zip(skel.app_effects.iter().copied())
            .collect(),
        prompts,
        answered,
        wear_utc_ms: wear.map(|(s, secs)| (s, s + (secs * 1000.0) as i64)),
        notifications: skel
            .notifications
            .iter()
            .zip(&latencies)
            .zip(&log.notifications)
            .map(|((n, lat), ev)| NotificationTruth {
                id: ev.id.clone(),
                app: ev.app_package.clone(),
                valence: n.valence,
                arousal: n.arousal,
                screen_on: n.screen_on,
                planned_log10_seconds: model.intercept + skel.systematic(model, n) + model.sigma * n.noise,
                planned_seconds: lat.map(|l| l as f64 / 1000.0),
            })
            .collect(),
    };
    SyntheticParticipant { log, truth }
}

/// The whole cohort, participants generated in parallel.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Vec<EventLog>, GroundTruth), SynthError> {
    cfg.validate()?;
    let parts: Vec<SyntheticParticipant> = (0..cfg.n_participants)
        .into_par_iter()
        .map(|i| generate_participant(cfg, i))
        .collect();
    let mut logs = Vec::with_capacity(parts.len());
    let mut truths = Vec::with_capacity(parts.len());
    for p in parts {
        logs.push(p.log);
        truths.push(p.truth);
    }
    Ok((
        logs,
        GroundTruth {
            response: cfg.response.clone(),
            participants: truths,
        },
    ))
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Generates and writes the cohort under `dir`, one participant at a time so
/// only one set of wristband signals is held in memory per worker.
pub fn write_cohort(cfg: &GeneratorConfig, dir: &Path) -> Result<GroundTruth, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let truths: Vec<Result<ParticipantTruth, SynthError>> = (0..cfg.n_participants)
        .into_par_iter()
        .map(|i| {
            let p = generate_participant(cfg, i);
            write_event_log(&p.log, &dir.join(&p.log.participant.0))?;
            Ok(p.truth)
        })
        .collect();
    let truth = GroundTruth {
        response: cfg.response.clone(),
        participants: truths.into_iter().collect::<Result<_, _>>()?,
    };
    let path = dir.join(GROUND_TRUTH_FILE);
    fs::write(&path, serde_json::to_string(&truth)?).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(truth)
}
