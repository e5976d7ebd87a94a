//! Raw event and signal types for one participant, plus the on-disk
//! interchange format.
//!
//! A participant directory holds one comma-separated file per event channel
//! and an optional `physio/` directory with Empatica E4 style exports.

mod io;
pub mod pluscode;
mod window;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    parse_acc_channels, parse_event_log, parse_ibi, parse_physio_channel, write_event_log,
    write_physio_channel, FILE_ACTIVITY, FILE_APP_EVENTS, FILE_ESM, FILE_LOCATION,
    FILE_NOTIFICATIONS, FILE_RELATIONS, FILE_SCREEN,
};
pub use window::{slice_window, ChannelWindow, IbiWindow, LogView, Timed};

pub const MILLIS_PER_SECOND: i64 = 1_000;
pub const MILLIS_PER_MINUTE: i64 = 60_000;
pub const MILLIS_PER_DAY: i64 = 86_400_000;

/// Shortest accepted inter-beat interval in seconds (240 bpm).
pub const IBI_MIN_SECONDS: f64 = 0.25;
/// Longest accepted inter-beat interval in seconds (20 bpm).
pub const IBI_MAX_SECONDS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {message}")]
    SchemaError {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}:{line}: timestamp does not increase")]
    NonMonotonicTimestamp { file: String, line: u64 },
    #[error("{file}: bad header: {message}")]
    BadHeader { file: String, message: String },
    #[error("{file}:{line}: sample is not a number")]
    NonNumericSample { file: String, line: u64 },
    #[error("{file}: sample rate is zero")]
    ZeroRate { file: String },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Instant in UTC milliseconds, with the wall-clock offset that was in force
/// where the event happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp {
    pub utc_millis: i64,
    pub tz_offset_minutes: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Weekday::Monday => "monday",
            Weekday::Tuesday => "tuesday",
            Weekday::Wednesday => "wednesday",
            Weekday::Thursday => "thursday",
            Weekday::Friday => "friday",
            Weekday::Saturday => "saturday",
            Weekday::Sunday => "sunday",
        }
    }

    pub fn is_weekend(self) -> bool {
        matches!(self, Weekday::Saturday | Weekday::Sunday)
    }
}

impl Timestamp {
    pub fn new(utc_millis: i64, tz_offset_minutes: i32) -> Result<Self, EventError> {
        if utc_millis < 0 {
            return Err(EventError::Invalid(format!(
                "negative timestamp {utc_millis}"
            )));
        }
        if !(-840..=840).contains(&tz_offset_minutes) {
            return Err(EventError::Invalid(format!(
                "timezone offset {tz_offset_minutes} min outside [-840, 840]"
            )));
        }
        Ok(Self {
            utc_millis,
            tz_offset_minutes,
        })
    }

    pub fn utc(utc_millis: i64) -> Self {
        Self {
            utc_millis,
            tz_offset_minutes: 0,
        }
    }

    pub fn local_millis(&self) -> i64 {
        self.utc_millis + i64::from(self.tz_offset_minutes) * MILLIS_PER_MINUTE
    }

    /// Milliseconds since local midnight.
    pub fn local_millis_of_day(&self) -> i64 {
        self.local_millis().rem_euclid(MILLIS_PER_DAY)
    }

    /// Days since 1970-01-01 in local time.
    pub fn local_day(&self) -> i64 {
        self.local_millis().div_euclid(MILLIS_PER_DAY)
    }

    pub fn weekday(&self) -> Weekday {
        // 1970-01-01 was a Thursday.
        Weekday::ALL[(self.local_day() + 3).rem_euclid(7) as usize]
    }

    pub fn plus_millis(&self, millis: i64) -> Self {
        Self {
            utc_millis: self.utc_millis + millis,
            tz_offset_minutes: self.tz_offset_minutes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticipantId(pub String);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub id: String,
    pub app_package: String,
    pub arrival: Timestamp,
    pub content_length: u32,
    pub contact_hash: Option<String>,
    pub removed_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppForegroundEvent {
    pub app_package: String,
    pub app_name: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenState {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenEvent {
    pub state: ScreenState,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Still,
    Walking,
    Running,
    Cycling,
    InVehicle,
    OnFoot,
    Tilting,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub activity: Activity,
    pub confidence: u8,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEvent {
    pub plus_code_10: String,
    pub at: Timestamp,
}

impl LocationEvent {
    /// The 8-digit area code containing this fix (e.g. `8FVC9G8F+`).
    pub fn plus_code_8(&self) -> String {
        pluscode::prefix8(&self.plus_code_10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialRole {
    Work,
    Private,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interruptibility {
    Work,
    Private,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsmResponse {
    pub at: Timestamp,
    pub valence: u8,
    pub arousal: u8,
    pub social_role: SocialRole,
    pub interruptibility: Interruptibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Family,
    Friend,
    Work,
    None,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Family,
        Relation::Friend,
        Relation::Work,
        Relation::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Family => "family",
            Relation::Friend => "friend",
            Relation::Work => "work",
            Relation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Relation::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRelation {
    pub contact_hash: String,
    pub relations: BTreeSet<Relation>,
}

impl ContactRelation {
    pub fn new(contact_hash: String, relations: BTreeSet<Relation>) -> Result<Self, EventError> {
        if relations.is_empty() {
            return Err(EventError::Invalid(format!(
                "contact {contact_hash} has no relation"
            )));
        }
        if relations.contains(&Relation::None) && relations.len() > 1 {
            return Err(EventError::Invalid(format!(
                "contact {contact_hash}: 'none' cannot be combined with other relations"
            )));
        }
        Ok(Self {
            contact_hash,
            relations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EDA")]
    Eda,
    #[serde(rename = "BVP")]
    Bvp,
    #[serde(rename = "HR")]
    Hr,
    #[serde(rename = "ST")]
    St,
    #[serde(rename = "ACC_X")]
    AccX,
    #[serde(rename = "ACC_Y")]
    AccY,
    #[serde(rename = "ACC_Z")]
    AccZ,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Eda => "EDA",
            ChannelKind::Bvp => "BVP",
            ChannelKind::Hr => "HR",
            ChannelKind::St => "ST",
            ChannelKind::AccX => "ACC_X",
            ChannelKind::AccY => "ACC_Y",
            ChannelKind::AccZ => "ACC_Z",
        }
    }

    /// Export file holding this channel.
    pub fn file_name(self) -> &'static str {
        match self {
            ChannelKind::Eda => "EDA.csv",
            ChannelKind::Bvp => "BVP.csv",
            ChannelKind::Hr => "HR.csv",
            ChannelKind::St => "TEMP.csv",
            ChannelKind::AccX | ChannelKind::AccY | ChannelKind::AccZ => "ACC.csv",
        }
    }

    fn acc_column(self) -> Option<usize> {
        match self {
            ChannelKind::AccX => Some(0),
            ChannelKind::AccY => Some(1),
            ChannelKind::AccZ => Some(2),
            _ => None,
        }
    }
}

/// A uniformly sampled channel: sample `i` was taken at `start + i / rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysioChannel {
    pub kind: ChannelKind,
    pub start: Timestamp,
    pub rate_hz: f64,
    pub samples: Vec<f64>,
}

impl PhysioChannel {
    pub fn sample_time_seconds(&self, i: usize) -> f64 {
        self.start.utc_millis as f64 / 1000.0 + i as f64 / self.rate_hz
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    pub fn end_millis(&self) -> i64 {
        self.start.utc_millis + (self.duration_seconds() * 1000.0).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbiEntry {
    pub offset_seconds: f64,
    pub interval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiSeries {
    pub start: Timestamp,
    pub entries: Vec<IbiEntry>,
}

impl IbiSeries {
    pub fn entry_millis(&self, entry: &IbiEntry) -> i64 {
        self.start.utc_millis + (entry.offset_seconds * 1000.0).round() as i64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysioRecording {
    pub channels: BTreeMap<ChannelKind, PhysioChannel>,
    pub ibi: Option<IbiSeries>,
    /// IBI rows discarded as artifacts (outside the accepted interval range).
    pub ibi_dropped: usize,
}

impl PhysioRecording {
    pub fn is_empty(&self) -> bool {
        self.channels.is_empty() && self.ibi.is_none()
    }
}

/// Everything recorded for one participant, each collection sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub participant: ParticipantId,
    pub notifications: Vec<NotificationEvent>,
    pub app_events: Vec<AppForegroundEvent>,
    pub screen_events: Vec<ScreenEvent>,
    pub activity_events: Vec<ActivityEvent>,
    pub location_events: Vec<LocationEvent>,
    pub esm_responses: Vec<EsmResponse>,
    /// Sorted by contact hash.
    pub contact_relations: Vec<ContactRelation>,
    pub physio: PhysioRecording,
    /// Non-fatal issues found while loading (re-sorted rows, duplicates).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EventLog {
    pub fn empty(participant: ParticipantId) -> Self {
        Self {
            participant,
            notifications: Vec::new(),
            app_events: Vec::new(),
            screen_events: Vec::new(),
            activity_events: Vec::new(),
            location_events: Vec::new(),
            esm_responses: Vec::new(),
            contact_relations: Vec::new(),
            physio: PhysioRecording::default(),
            warnings: Vec::new(),
        }
    }

    pub fn relations_for(&self, contact_hash: &str) -> Option<&ContactRelation> {
        self.contact_relations
            .binary_search_by(|c| c.contact_hash.as_str().cmp(contact_hash))
            .ok()
            .map(|i| &self.contact_relations[i])
    }

    /// Restore the sorted/deduplicated invariants after building a log in code.
    pub fn normalize(&mut self) {
        self.notifications
            .sort_by(|a, b| a.arrival.utc_millis.cmp(&b.arrival.utc_millis));
        self.app_events.sort_by_key(|e| e.at.utc_millis);
        self.screen_events.sort_by_key(|e| e.at.utc_millis);
        self.screen_events.dedup_by(|later, earlier| later.state == earlier.state);
        self.activity_events.sort_by_key(|e| e.at.utc_millis);
        self.location_events.sort_by_key(|e| e.at.utc_millis);
        self.esm_responses.sort_by_key(|e| e.at.utc_millis);
        self.contact_relations
            .sort_by(|a, b| a.contact_hash.cmp(&b.contact_hash));
    }
}
