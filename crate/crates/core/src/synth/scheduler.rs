//! ESM prompt scheduling: fixed slots plus prompts triggered by long phone
//! use, thinned by a minimum gap and restricted to a daily window.

use serde::{Deserialize, Serialize};

use crate::event::{MILLIS_PER_DAY, MILLIS_PER_MINUTE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsmConfig {
    pub period_min: i64,
    /// Local minute of day when prompting may start.
    pub window_start_min: i64,
    /// Local minute of day before which every prompt must fall.
    pub window_end_min: i64,
    /// Continuous screen-on time that triggers an event-based prompt.
    pub trigger_min: i64,
    pub min_gap_min: i64,
    pub answer_probability: f64,
    /// Answers arrive uniformly within this many seconds after the prompt.
    pub answer_delay_max_s: i64,
}

impl Default for EsmConfig {
    fn default() -> Self {
        Self {
            period_min: 90,
            window_start_min: 7 * 60,
            window_end_min: 22 * 60,
            trigger_min: 10,
            min_gap_min: 30,
            answer_probability: 0.2837,
            answer_delay_max_s: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Scheduled,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub at_utc_ms: i64,
    pub kind: PromptKind,
}

/// Prompts over `days` local days starting at `first_local_midnight_utc_ms`.
///
/// `screen_on` holds disjoint, sorted `[start, end)` intervals in UTC ms. A
/// screen-on interval that lasts longer than the trigger time proposes one
/// prompt at `start + trigger`. Candidates are visited in time order
/// (scheduled first on ties) and kept when they fall inside the daily window
/// and at least `min_gap` after the previously kept prompt.
pub fn schedule_prompts(
    cfg: &EsmConfig,
    first_local_midnight_utc_ms: i64,
    days: usize,
    tz_offset_min: i32,
    screen_on: &[(i64, i64)],
) -> Vec<Prompt> {
    let mut candidates = Vec::new();
    for d in 0..days as i64 {
        let midnight = first_local_midnight_utc_ms + d * MILLIS_PER_DAY;
        let mut m = cfg.window_start_min;
        while m < cfg.window_end_min {
            candidates.push(Prompt {
                at_utc_ms: midnight + m * MILLIS_PER_MINUTE,
                kind: PromptKind::Scheduled,
            });
            m += cfg.period_min;
        }
    }
    let trigger = cfg.trigger_min * MILLIS_PER_MINUTE;
    for &(start, end) in screen_on {
        if end - start > trigger {
            candidates.push(Prompt {
                at_utc_ms: start + trigger,
                kind: PromptKind::Event,
            });
        }
    }
    candidates.sort_by_key(|p| (p.at_utc_ms, p.kind == PromptKind::Event));

    let offset = i64::from(tz_offset_min) * MILLIS_PER_MINUTE;
    let in_window = |t: i64| {
        let ms_of_day = (t + offset).rem_euclid(MILLIS_PER_DAY);
        ms_of_day >= cfg.window_start_min * MILLIS_PER_MINUTE
            && ms_of_day < cfg.window_end_min * MILLIS_PER_MINUTE
    };
    let gap = cfg.min_gap_min * MILLIS_PER_MINUTE;
    let mut out: Vec<Prompt> = Vec::new();
    for c in candidates {
        if !in_window(c.at_utc_ms) {
            continue;
        }
        if out.last().is_some_and(|p| c.at_utc_ms - p.at_utc_ms < gap) {
            continue;
        }
        out.push(c);
    }
    out
}
