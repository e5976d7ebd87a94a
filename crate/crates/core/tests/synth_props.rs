mod common;

use common::small_generator;
use nrt_core::event::{MILLIS_PER_DAY, MILLIS_PER_MINUTE};
use nrt_core::synth::{generate_participant, merge_intervals, schedule_prompts, EsmConfig, PromptKind};
use proptest::prelude::*;

const MIDNIGHT: i64 = 1_580_083_200_000;

proptest! {
    #[test]
    fn scheduler_rules_hold(
        raw in prop::collection::vec((0i64..7 * 24 * 60, 1i64..60), 0..120),
        tz in -720i32..720,
        days in 1usize..7,
    ) {
        let sessions = merge_intervals(
            raw.iter()
                .map(|&(s, len)| (MIDNIGHT + s * MILLIS_PER_MINUTE, MIDNIGHT + (s + len) * MILLIS_PER_MINUTE))
                .collect(),
        );
        let cfg = EsmConfig::default();
        let midnight = MIDNIGHT - i64::from(tz) * MILLIS_PER_MINUTE;
        let prompts = schedule_prompts(&cfg, midnight, days, tz, &sessions);
        let offset = i64::from(tz) * MILLIS_PER_MINUTE;
        for (i, p) in prompts.iter().enumerate() {
            let minute = (p.at_utc_ms + offset).rem_euclid(MILLIS_PER_DAY) / MILLIS_PER_MINUTE;
            prop_assert!((7 * 60..22 * 60).contains(&minute), "prompt at minute {}", minute);
            if i > 0 {
                prop_assert!(p.at_utc_ms - prompts[i - 1].at_utc_ms >= 30 * MILLIS_PER_MINUTE);
            }
            if p.kind == PromptKind::Event {
                prop_assert!(sessions.iter().any(|&(s, e)| s + 10 * MILLIS_PER_MINUTE == p.at_utc_ms && e > p.at_utc_ms));
            }
        }
        prop_assert_eq!(&prompts, &schedule_prompts(&cfg, midnight, days, tz, &sessions));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn generated_values_in_range(seed in 0u64..10_000) {
        let cfg = small_generator(seed, 2, 3);
        for i in 0..cfg.n_participants {
            let p = generate_participant(&cfg, i);
            for r in &p.log.esm_responses {
                prop_assert!((1..=5).contains(&r.valence) && (1..=5).contains(&r.arousal));
            }
            for n in &p.truth.notifications {
                if let Some(s) = n.planned_seconds {
                    prop_assert!(s > 0.0);
                }
            }
            prop_assert_eq!(p.truth.answered, p.log.esm_responses.len());
            let again = generate_participant(&cfg, i);
            prop_assert_eq!(&again.log, &p.log);
            prop_assert_eq!(&again.truth, &p.truth);
        }
    }
}
