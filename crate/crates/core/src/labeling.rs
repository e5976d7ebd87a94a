//! Response-time labels and the app catalog used to focus on the most
//! notifying apps and on one app category.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventLog, NotificationEvent, Timestamp};

/// Notifications without an open of the issuing app within this many seconds
/// are censored.
pub const RESPONSE_CAP_SECONDS: f64 = 86_400.0;
pub const DEFAULT_TOP_K: usize = 10;
pub const OTHER_CATEGORY: &str = "other";

const DEFAULT_CATEGORIES: &str = include_str!("../data/app_categories.csv");

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("unknown app category {0:?}")]
    UnknownCategoryName(String),
    #[error("category map: {0}")]
    CategoryMap(String),
    #[error("labels file: {0}")]
    Csv(#[from] csv::Error),
}

/// Regression target for a response time in seconds.
pub fn response_target(seconds: f64) -> f64 {
    (1.0 + seconds).log10()
}

/// Inverse of [`response_target`].
pub fn target_to_seconds(target: f64) -> f64 {
    10f64.powf(target) - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLabel {
    pub notification_id: String,
    pub app_package: String,
    pub arrival: Timestamp,
    /// Delay until the next foreground event of the issuing app; `None` if
    /// the app was never opened afterwards.
    pub response_seconds: Option<f64>,
    /// `log10(1 + response_seconds)`, present only for uncensored labels.
    pub target: Option<f64>,
    pub censored: bool,
}

impl ResponseLabel {
    pub fn uncensored_seconds(&self) -> Option<f64> {
        if self.censored {
            None
        } else {
            self.response_seconds
        }
    }
}

/// Matches every notification to the earliest foreground event of the same
/// app strictly after its arrival.
pub fn pair_response_times(log: &EventLog) -> Vec<ResponseLabel> {
    let mut opens: HashMap<&str, Vec<i64>> = HashMap::new();
    for e in &log.app_events {
        opens
            .entry(e.app_package.as_str())
            .or_default()
            .push(e.at.utc_millis);
    }
    log.notifications
        .iter()
        .map(|n| {
            let arrival = n.arrival.utc_millis;
            let next_open = opens.get(n.app_package.as_str()).and_then(|times| {
                let i = times.partition_point(|&t| t <= arrival);
                times.get(i).copied()
            });
            let response_seconds = next_open.map(|t| (t - arrival) as f64 / 1000.0);
            let censored = response_seconds.is_none_or(|s| s > RESPONSE_CAP_SECONDS);
            ResponseLabel {
                notification_id: n.id.clone(),
                app_package: n.app_package.clone(),
                arrival: n.arrival,
                response_seconds,
                target: if censored {
                    None
                } else {
                    response_seconds.map(response_target)
                },
                censored,
            }
        })
        .collect()
}

/// Static package -> category map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    map: BTreeMap<String, String>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_CATEGORIES).expect("bundled category map is valid")
    }
}

impl CategoryMap {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    pub fn from_csv_str(text: &str) -> Result<Self, LabelError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut map = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let (Some(app), Some(cat)) = (record.get(0), record.get(1)) else {
                return Err(LabelError::CategoryMap(format!(
                    "expected two columns in {record:?}"
                )));
            };
            map.insert(app.to_string(), cat.to_string());
        }
        Ok(Self { map })
    }

    pub fn from_path(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabelError::CategoryMap(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text)
    }

    pub fn category_of(&self, app: &str) -> &str {
        self.map.get(app).map_or(OTHER_CATEGORY, String::as_str)
    }

    /// All category names, including the catch-all `other`.
    pub fn categories(&self) -> BTreeSet<&str> {
        let mut set: BTreeSet<&str> = self.map.values().map(String::as_str).collect();
        set.insert(OTHER_CATEGORY);
        set
    }

    pub fn apps(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }
}

/// Per-app notification counts for one participant plus the category map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppCatalog {
    pub counts: BTreeMap<String, usize>,
    /// Apps by descending count, ties broken by package name.
    pub ranked: Vec<String>,
    pub categories: CategoryMap,
}

impl AppCatalog {
    pub fn from_counts(counts: BTreeMap<String, usize>, categories: CategoryMap) -> Self {
        let mut ranked: Vec<String> = counts.keys().cloned().collect();
        // BTreeMap iteration is already name-ordered; a stable sort keeps ties that way.
        ranked.sort_by(|a, b| counts[b].cmp(&counts[a]));
        Self {
            counts,
            ranked,
            categories,
        }
    }

    pub fn from_notifications(notifications: &[NotificationEvent], categories: CategoryMap) -> Self {
        let mut counts = BTreeMap::new();
        for n in notifications {
            *counts.entry(n.app_package.clone()).or_insert(0) += 1;
        }
        Self::from_counts(counts, categories)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Fraction of notifications sent by the `k` most-notifying apps.
    pub fn coverage(&self, k: usize) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let top: usize = self.ranked.iter().take(k).map(|a| self.counts[a]).sum();
        top as f64 / total as f64
    }
}

/// The `k` most-notifying apps (all apps when `k` exceeds their number).
pub fn top_k_apps(catalog: &AppCatalog, k: usize) -> Vec<String> {
    assert!(k >= 1, "k must be positive");
    catalog.ranked.iter().take(k).cloned().collect()
}

/// Anything attributable to an issuing app.
pub trait AppAttributed {
    fn app(&self) -> &str;
}

impl AppAttributed for ResponseLabel {
    fn app(&self) -> &str {
        &self.app_package
    }
}

impl AppAttributed for NotificationEvent {
    fn app(&self) -> &str {
        &self.app_package
    }
}

pub fn filter_by_category<T: AppAttributed>(
    instances: Vec<T>,
    category: &str,
    catalog: &AppCatalog,
) -> Result<Vec<T>, LabelError> {
    if !catalog.categories.categories().contains(category) {
        return Err(LabelError::UnknownCategoryName(category.to_string()));
    }
    Ok(instances
        .into_iter()
        .filter(|i| catalog.categories.category_of(i.app()) == category)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub participant: String,
    pub notification_id: String,
    pub app: String,
    pub arrival_utc_ms: i64,
    pub tz_offset_min: i32,
    pub response_s: Option<f64>,
    pub target: Option<f64>,
    pub censored: bool,
}

impl LabelRow {
    pub fn from_label(participant: &str, label: &ResponseLabel) -> Self {
        Self {
            participant: participant.to_string(),
            notification_id: label.notification_id.clone(),
            app: label.app_package.clone(),
            arrival_utc_ms: label.arrival.utc_millis,
            tz_offset_min: label.arrival.tz_offset_minutes,
            response_s: label.response_seconds,
            target: label.target,
            censored: label.censored,
        }
    }

    pub fn to_label(&self) -> ResponseLabel {
        ResponseLabel {
            notification_id: self.notification_id.clone(),
            app_package: self.app.clone(),
            arrival: Timestamp {
                utc_millis: self.arrival_utc_ms,
                tz_offset_minutes: self.tz_offset_min,
            },
            response_seconds: self.response_s,
            target: self.target,
            censored: self.censored,
        }
    }
}

pub fn write_labels_csv<W: Write>(writer: W, rows: &[LabelRow]) -> Result<(), LabelError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "participant",
            "notification_id",
            "app",
            "arrival_utc_ms",
            "tz_offset_min",
            "response_s",
            "target",
            "censored",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads rows written by [`write_labels_csv`]; `#` lines are skipped.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<LabelRow>, LabelError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    Ok(r.deserialize().collect::<Result<Vec<LabelRow>, _>>()?)
}
