//! Smartphone and ESM features for the window preceding a notification.
//!
//! Every extractor only reads events strictly before the arrival time.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::event::slice_window;
use crate::event::{
    EventLog, Interruptibility, LocationEvent, NotificationEvent, Relation, ScreenState,
    SocialRole, Timestamp, Weekday, MILLIS_PER_MINUTE,
};
use crate::features::{
    window_suffix, FeatureVector, INTERRUPTIBILITY_NAMES, ROLE_NAMES, TIME_BUCKETS,
    WINDOW_MINUTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    pub esm_horizon_min: i64,
    pub top_places: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            esm_horizon_min: 90,
            top_places: 3,
        }
    }
}

/// Distinct foregrounded packages, and how many of them are top-k apps, for
/// each look-back window.
pub fn app_usage_features(log: &EventLog, arrival: Timestamp, top_k: &BTreeSet<String>) -> FeatureVector {
    let mut v = FeatureVector::new();
    let mut topk = Vec::new();
    for x in WINDOW_MINUTES {
        let events = slice_window(&log.app_events, arrival.utc_millis, x * MILLIS_PER_MINUTE);
        let apps: BTreeSet<&str> = events.iter().map(|e| e.app_package.as_str()).collect();
        v.push(format!("phone_apps_{}", window_suffix(x)), "app_usage", apps.len() as f64);
        topk.push(apps.iter().filter(|a| top_k.contains(**a)).count());
    }
    for (x, n) in WINDOW_MINUTES.into_iter().zip(topk) {
        v.push(format!("topk_{}_unique", window_suffix(x)), "app_usage", n as f64);
    }
    v
}

/// Index into [`TIME_BUCKETS`]: six-hour buckets starting at midnight.
pub fn time_bucket(arrival: Timestamp) -> usize {
    (arrival.local_millis_of_day() / (6 * 60 * MILLIS_PER_MINUTE)) as usize
}

pub fn temporal_features(arrival: Timestamp) -> FeatureVector {
    let mut v = FeatureVector::new();
    let day = arrival.weekday();
    for d in Weekday::ALL {
        v.push(format!("day_{}", d.name()), "day_of_week", f64::from(u8::from(d == day)));
    }
    let bucket = time_bucket(arrival);
    for (i, name) in TIME_BUCKETS.iter().enumerate() {
        v.push(format!("time_{name}"), "time_of_day", f64::from(u8::from(i == bucket)));
    }
    v.push("is_weekend", "weekend", f64::from(u8::from(day.is_weekend())));
    v
}

/// Place statistics over a participant's location fixes, queryable at any
/// time using only the fixes before it.
#[derive(Debug, Clone)]
pub struct PlaceModel {
    times: Vec<i64>,
    /// Per fix: ids of its 8- and 10-digit codes.
    ids: Vec<(u32, u32)>,
    /// Per fix: most visited areas (8-digit ids) including this fix.
    top: Vec<Vec<u32>>,
}

impl PlaceModel {
    pub fn new(fixes: &[LocationEvent], top_places: usize) -> Self {
        let mut vocab8: HashMap<String, u32> = HashMap::new();
        let mut vocab10: HashMap<String, u32> = HashMap::new();
        let mut counts: Vec<usize> = vec![0];
        let mut top: Vec<u32> = Vec::new();
        let mut model = Self {
            times: Vec::with_capacity(fixes.len()),
            ids: Vec::with_capacity(fixes.len()),
            top: Vec::with_capacity(fixes.len()),
        };
        for fix in fixes {
            let n8 = vocab8.len() as u32 + 1;
            let id8 = *vocab8.entry(fix.plus_code_8()).or_insert(n8);
            let n10 = vocab10.len() as u32 + 1;
            let id10 = *vocab10.entry(fix.plus_code_10.clone()).or_insert(n10);
            if id8 as usize >= counts.len() {
                counts.push(0);
            }
            counts[id8 as usize] += 1;
            if !top.contains(&id8) {
                top.push(id8);
            }
            // More visits first, then earlier first appearance.
            top.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
            top.truncate(top_places);
            model.times.push(fix.at.utc_millis);
            model.ids.push((id8, id10));
            model.top.push(top.clone());
        }
        model
    }

    /// Index of the last fix strictly before `t`.
    fn last_before(&self, t: i64) -> Option<usize> {
        self.times.partition_point(|&x| x < t).checked_sub(1)
    }
}

pub fn place_features(model: &PlaceModel, arrival: Timestamp) -> FeatureVector {
    let mut v = FeatureVector::new();
    let names = ["place_top_1", "place_top_2", "place_top_3", "place_other"];
    match model.last_before(arrival.utc_millis) {
        Some(i) => {
            let (id8, id10) = model.ids[i];
            let rank = model.top[i].iter().position(|&p| p == id8).unwrap_or(3).min(3);
            for (j, name) in names.iter().enumerate() {
                v.push(*name, "place", f64::from(u8::from(j == rank)));
            }
            v.push("loc_8", "place", f64::from(id8));
            v.push("loc_10", "place", f64::from(id10));
        }
        None => {
            for name in names.iter().chain(&["loc_8", "loc_10"]) {
                v.push_masked(*name, "place");
            }
        }
    }
    v
}

fn role_index(r: SocialRole) -> usize {
    match r {
        SocialRole::Work => 0,
        SocialRole::Private => 1,
        SocialRole::Both => 2,
    }
}

fn interruptibility_index(i: Interruptibility) -> usize {
    match i {
        Interruptibility::Work => 0,
        Interruptibility::Private => 1,
        Interruptibility::Both => 2,
        Interruptibility::None => 3,
    }
}

/// Latest ESM answer within the horizon, carried forward.
pub fn esm_features(log: &EventLog, arrival: Timestamp, horizon_min: i64) -> FeatureVector {
    let recent = slice_window(
        &log.esm_responses,
        arrival.utc_millis,
        horizon_min * MILLIS_PER_MINUTE,
    );
    let mut v = FeatureVector::new();
    match recent.last() {
        Some(r) => {
            v.push("valence", "mood", f64::from(r.valence));
            v.push("arousal", "mood", f64::from(r.arousal));
            let role = role_index(r.social_role);
            for (j, name) in ROLE_NAMES.iter().enumerate() {
                v.push(format!("role_{name}"), "role", f64::from(u8::from(j == role)));
            }
            let intr = interruptibility_index(r.interruptibility);
            for (j, name) in INTERRUPTIBILITY_NAMES.iter().enumerate() {
                v.push(
                    format!("interruptibility_{name}"),
                    "interruptibility",
                    f64::from(u8::from(j == intr)),
                );
            }
        }
        None => {
            v.push_masked("valence", "mood");
            v.push_masked("arousal", "mood");
            for name in ROLE_NAMES {
                v.push_masked(format!("role_{name}"), "role");
            }
            for name in INTERRUPTIBILITY_NAMES {
                v.push_masked(format!("interruptibility_{name}"), "interruptibility");
            }
        }
    }
    v
}

/// 20-bit FNV-1a id of a contact hash, offset by one so 0 never occurs.
pub fn contact_id(contact_hash: &str) -> u32 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in contact_hash.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h & 0xF_FFFF) as u32 + 1
}

pub fn notification_and_context_features(log: &EventLog, notif: &NotificationEvent) -> FeatureVector {
    let t = notif.arrival.utc_millis;
    let mut v = FeatureVector::new();
    v.push("notification_length", "notification", f64::from(notif.content_length));
    let before = log.screen_events.partition_point(|e| e.at.utc_millis < t);
    match before.checked_sub(1).map(|i| log.screen_events[i].state) {
        Some(state) => v.push("screen", "screen", f64::from(u8::from(state == ScreenState::On))),
        None => v.push_masked("screen", "screen"),
    }
    for x in WINDOW_MINUTES {
        let events = slice_window(&log.activity_events, t, x * MILLIS_PER_MINUTE);
        let kinds: BTreeSet<_> = events.iter().map(|e| e.activity).collect();
        v.push(
            format!("physical_activity_{}", window_suffix(x)),
            "activity",
            kinds.len() as f64,
        );
    }
    let relations = notif
        .contact_hash
        .as_deref()
        .and_then(|c| log.relations_for(c));
    for r in Relation::ALL {
        let name = format!("relation_{}", r.name());
        match relations {
            Some(rel) => v.push(name, "relation", f64::from(u8::from(rel.relations.contains(&r)))),
            None => v.push_masked(name, "relation"),
        }
    }
    match &notif.contact_hash {
        Some(c) => v.push("contact", "contact", f64::from(contact_id(c))),
        None => v.push_masked("contact", "contact"),
    }
    v
}

/// Everything that depends on the whole participant log, computed once.
#[derive(Debug, Clone)]
pub struct ContextExtractor<'a> {
    log: &'a EventLog,
    top_k: BTreeSet<String>,
    places: PlaceModel,
    cfg: ContextConfig,
}

impl<'a> ContextExtractor<'a> {
    pub fn new(log: &'a EventLog, top_k: BTreeSet<String>, cfg: ContextConfig) -> Self {
        Self {
            log,
            top_k,
            places: PlaceModel::new(&log.location_events, cfg.top_places),
            cfg,
        }
    }

    /// Mobile then ESM features, in manifest order.
    pub fn extract(&self, notif: &NotificationEvent) -> FeatureVector {
        let arrival = notif.arrival;
        let mut v = app_usage_features(self.log, arrival, &self.top_k);
        v.extend(temporal_features(arrival));
        v.extend(place_features(&self.places, arrival));
        v.extend(notification_and_context_features(self.log, notif));
        v.extend(esm_features(self.log, arrival, self.cfg.esm_horizon_min));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{
        ActivityEvent, Activity, AppForegroundEvent, ContactRelation, EsmResponse, ParticipantId,
        ScreenEvent,
    };
    use crate::features::{esm_manifest, mobile_manifest};

    const MIN: i64 = MILLIS_PER_MINUTE;
    const T0: i64 = 1_600_000_000_000;

    fn ts(ms: i64) -> Timestamp {
        Timestamp::utc(ms)
    }

    fn open(app: &str, ms: i64) -> AppForegroundEvent {
        AppForegroundEvent {
            app_package: app.into(),
            app_name: app.into(),
            at: ts(ms),
        }
    }

    fn notif(ms: i64, contact: Option<&str>) -> NotificationEvent {
        NotificationEvent {
            id: "n".into(),
            app_package: "a".into(),
            arrival: ts(ms),
            content_length: 12,
            contact_hash: contact.map(String::from),
            removed_at: None,
        }
    }

    fn esm(ms: i64, valence: u8) -> EsmResponse {
        EsmResponse {
            at: ts(ms),
            valence,
            arousal: 2,
            social_role: SocialRole::Private,
            interruptibility: Interruptibility::None,
        }
    }

    fn log() -> EventLog {
        EventLog::empty(ParticipantId("p".into()))
    }

    #[test]
    fn app_usage_windows() {
        let mut l = log();
        l.app_events = vec![open("A", T0 - 20 * MIN), open("B", T0 - 8 * MIN), open("A", T0 - 2 * MIN)];
        let top: BTreeSet<String> = ["A".to_string()].into();
        let v = app_usage_features(&l, ts(T0), &top);
        assert_eq!(v.get("phone_apps_05"), Some(1.0));
        assert_eq!(v.get("phone_apps_10"), Some(2.0));
        assert_eq!(v.get("phone_apps_30"), Some(2.0));
        assert_eq!(v.get("topk_10_unique"), Some(1.0));
        let empty = app_usage_features(&log(), ts(T0), &top);
        assert!(empty.values().iter().all(|&x| x == 0.0));
        assert_eq!(empty.len(), 12);
    }

    #[test]
    fn event_at_arrival_is_excluded() {
        let mut l = log();
        l.app_events = vec![open("A", T0)];
        let v = app_usage_features(&l, ts(T0), &BTreeSet::new());
        assert_eq!(v.get("phone_apps_05"), Some(0.0));
    }

    #[test]
    fn temporal_buckets() {
        // 2020-09-15 was a Tuesday.
        let tue_03 = Timestamp::utc(1_600_138_800_000);
        assert_eq!(tue_03.weekday(), Weekday::Tuesday);
        let v = temporal_features(tue_03);
        assert_eq!(v.get("time_midnight"), Some(1.0));
        assert_eq!(v.get("day_tuesday"), Some(1.0));
        assert_eq!(v.get("is_weekend"), Some(0.0));
        let six = tue_03.plus_millis(3 * 60 * MIN);
        assert_eq!(temporal_features(six).get("time_morning"), Some(1.0));
        let sun_2359 = tue_03.plus_millis(5 * 24 * 60 * MIN + (20 * 60 + 59) * MIN);
        let v = temporal_features(sun_2359);
        assert_eq!(v.get("time_evening"), Some(1.0));
        assert_eq!(v.get("is_weekend"), Some(1.0));
        assert_eq!(v.get("day_sunday"), Some(1.0));
    }

    #[test]
    fn local_offset_shifts_bucket() {
        let t = Timestamp::new(1_600_138_800_000, 240).unwrap(); // 07:00 local
        assert_eq!(temporal_features(t).get("time_morning"), Some(1.0));
    }

    fn fix(code: &str, ms: i64) -> LocationEvent {
        LocationEvent {
            plus_code_10: code.into(),
            at: ts(ms),
        }
    }

    #[test]
    fn places() {
        let fixes = vec![
            fix("8FVC9G8F+6W", T0 - 50 * MIN),
            fix("8FVC9G8F+7X", T0 - 40 * MIN),
            fix("9C3XGV4C+2V", T0 - 30 * MIN),
            fix("8FVC9G8F+6W", T0 - 20 * MIN),
        ];
        let model = PlaceModel::new(&fixes, 3);
        let v = place_features(&model, ts(T0));
        assert_eq!(v.get("place_top_1"), Some(1.0));
        assert_eq!(v.get("loc_8"), Some(1.0));
        assert_eq!(v.get("loc_10"), Some(1.0));
        let v = place_features(&model, ts(T0 - 25 * MIN));
        assert_eq!(v.get("place_top_2"), Some(1.0));
        assert_eq!(v.get("loc_8"), Some(2.0));
        let none = place_features(&PlaceModel::new(&[], 3), ts(T0));
        assert!(none.group_masked("place"));
    }

    #[test]
    fn place_outside_top_is_other() {
        let mut fixes = Vec::new();
        let codes = ["2222", "3333", "4444"];
        for (k, code) in codes.iter().enumerate() {
            for j in 0..3 {
                fixes.push(fix(&format!("8FVC{code}+22"), T0 - (100 - 10 * k as i64 - j) * MIN));
            }
        }
        fixes.push(fix("8FVC5555+22", T0 - MIN));
        let v = place_features(&PlaceModel::new(&fixes, 3), ts(T0));
        assert_eq!(v.get("place_other"), Some(1.0));
    }

    #[test]
    fn esm_carry_forward() {
        let mut l = log();
        l.esm_responses = vec![esm(T0 - 30 * MIN, 4)];
        assert_eq!(esm_features(&l, ts(T0), 90).get("valence"), Some(4.0));
        l.esm_responses = vec![esm(T0 - 300 * MIN, 4)];
        let v = esm_features(&l, ts(T0), 90);
        assert!(v.group_masked("mood") && v.group_masked("role"));
        l.esm_responses = vec![esm(T0 - 80 * MIN, 1), esm(T0 - 10 * MIN, 5)];
        let v = esm_features(&l, ts(T0), 90);
        assert_eq!(v.get("valence"), Some(5.0));
        assert_eq!(v.get("role_private"), Some(1.0));
        assert_eq!(v.get("interruptibility_none"), Some(1.0));
    }

    #[test]
    fn context_features() {
        let mut l = log();
        l.contact_relations = vec![ContactRelation::new(
            "c1".into(),
            [Relation::Work, Relation::Friend].into(),
        )
        .unwrap()];
        l.activity_events = vec![
            ActivityEvent {
                activity: Activity::Still,
                confidence: 90,
                at: ts(T0 - 4 * MIN),
            },
            ActivityEvent {
                activity: Activity::Walking,
                confidence: 90,
                at: ts(T0 - MIN),
            },
        ];
        let v = notification_and_context_features(&l, &notif(T0, Some("c1")));
        assert_eq!(v.get("relation_work"), Some(1.0));
        assert_eq!(v.get("relation_friend"), Some(1.0));
        assert_eq!(v.get("relation_family"), Some(0.0));
        assert_eq!(v.get("physical_activity_05"), Some(2.0));
        assert_eq!(v.get("notification_length"), Some(12.0));
        assert!(v.is_masked("screen"));
        assert_eq!(v.get("contact"), Some(f64::from(contact_id("c1"))));

        l.screen_events = vec![ScreenEvent {
            state: ScreenState::On,
            at: ts(T0 - MIN),
        }];
        let v = notification_and_context_features(&l, &notif(T0, None));
        assert_eq!(v.get("screen"), Some(1.0));
        assert!(v.group_masked("relation"));
        assert!(v.is_masked("contact"));
    }

    #[test]
    fn extractor_follows_manifest() {
        let mut l = log();
        l.app_events = vec![open("A", T0 - MIN)];
        let ex = ContextExtractor::new(&l, BTreeSet::new(), ContextConfig::default());
        let v = ex.extract(&notif(T0, None));
        let expected: Vec<String> = mobile_manifest()
            .into_iter()
            .chain(esm_manifest())
            .map(|s| s.name)
            .collect();
        assert_eq!(v.names().collect::<Vec<_>>(), expected);
    }
}
