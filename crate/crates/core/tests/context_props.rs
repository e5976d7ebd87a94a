mod common;

use std::collections::BTreeSet;

use nrt_core::context::{ContextConfig, ContextExtractor};
use nrt_core::event::{EventLog, PhysioRecording, Timed};
use nrt_core::features::{FeatureVector, WINDOW_MINUTES};
use nrt_core::labeling::{top_k_apps, AppCatalog, CategoryMap};
use nrt_core::physio::{physio_feature_vector, PhysioConfig};
use nrt_core::synth::generate_participant;
use proptest::prelude::*;

fn before<T: Timed + Clone>(items: &[T], t: i64) -> Vec<T> {
    items.iter().filter(|e| e.time_millis() < t).cloned().collect()
}

/// The log as it would have looked at `t`: only events strictly earlier.
fn history(log: &EventLog, t: i64) -> EventLog {
    EventLog {
        notifications: before(&log.notifications, t),
        app_events: before(&log.app_events, t),
        screen_events: before(&log.screen_events, t),
        activity_events: before(&log.activity_events, t),
        location_events: before(&log.location_events, t),
        esm_responses: before(&log.esm_responses, t),
        physio: PhysioRecording::default(),
        ..log.clone()
    }
}

fn top(log: &EventLog) -> BTreeSet<String> {
    let catalog = AppCatalog::from_notifications(&log.notifications, CategoryMap::default());
    top_k_apps(&catalog, 10).into_iter().collect()
}

const ONE_HOT: [&str; 5] = ["day_of_week", "time_of_day", "place", "role", "interruptibility"];

fn check_groups(v: &FeatureVector) -> Result<(), TestCaseError> {
    let groups: BTreeSet<&str> = v.entries.iter().map(|e| e.group.as_str()).collect();
    for g in groups {
        let members: Vec<_> = v.entries.iter().filter(|e| e.group == g).collect();
        let masked = members.iter().filter(|e| e.masked).count();
        prop_assert!(masked == 0 || masked == members.len(), "group {} partially masked", g);
        if ONE_HOT.contains(&g) && masked == 0 {
            let sum: f64 = members
                .iter()
                .filter(|e| g != "place" || e.name.starts_with("place_"))
                .map(|e| e.value)
                .sum();
            prop_assert_eq!(sum, 1.0, "group {}", g);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn features_ignore_the_future(seed in 0u64..1_000) {
        let log = generate_participant(&common::small_generator(seed, 1, 4), 0).log;
        let top = top(&log);
        let full = ContextExtractor::new(&log, top.clone(), ContextConfig::default());
        for n in log.notifications.iter().step_by(7) {
            let mut past = history(&log, n.arrival.utc_millis);
            past.notifications.push(n.clone());
            let truncated = ContextExtractor::new(&past, top.clone(), ContextConfig::default());
            prop_assert_eq!(full.extract(n), truncated.extract(n));
        }
    }

    #[test]
    fn physio_features_ignore_the_future(seed in 0u64..1_000) {
        let log = generate_participant(&common::small_generator(seed, 1, 1), 0).log;
        let cfg = PhysioConfig::default();
        let channels = &log.physio.channels;
        let start = channels.values().map(|c| c.start.utc_millis).min().unwrap();
        for arrival in log.notifications.iter().map(|n| n.arrival).filter(|a| a.utc_millis > start).take(20) {
            let t = arrival.utc_millis;
            let mut past = log.physio.clone();
            for ch in past.channels.values_mut() {
                let keep = (0..ch.samples.len())
                    .take_while(|&i| ch.start.utc_millis as f64 + i as f64 * 1000.0 / ch.rate_hz < t as f64)
                    .count();
                ch.samples.truncate(keep);
            }
            if let Some(ibi) = past.ibi.as_mut() {
                let series = ibi.clone();
                ibi.entries.retain(|e| series.entry_millis(e) < t);
            }
            prop_assert_eq!(
                physio_feature_vector(&log.physio, arrival, &cfg),
                physio_feature_vector(&past, arrival, &cfg)
            );
        }
    }

    #[test]
    fn app_counts_grow_with_window_and_groups_are_whole(seed in 0u64..1_000) {
        let log = generate_participant(&common::small_generator(seed, 1, 3), 0).log;
        let ex = ContextExtractor::new(&log, top(&log), ContextConfig::default());
        for n in &log.notifications {
            let v = ex.extract(n);
            let counts: Vec<f64> = WINDOW_MINUTES
                .iter()
                .map(|x| v.get(&format!("phone_apps_{x:02}")).unwrap())
                .collect();
            prop_assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{:?}", counts);
            let topk: Vec<f64> = WINDOW_MINUTES
                .iter()
                .map(|x| v.get(&format!("topk_{x:02}_unique")).unwrap())
                .collect();
            prop_assert!(topk.iter().zip(&counts).all(|(a, b)| a <= b));
            check_groups(&v)?;
        }
    }
}
