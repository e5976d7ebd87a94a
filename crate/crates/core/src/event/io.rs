//! Reading and writing the per-participant directory layout.
//!
//! ```text
//! <participant>/
//!   notifications.csv  id,app_package,arrival_utc_ms,tz_offset_min,content_length,contact_hash,removed_utc_ms
//!   app_events.csv     app_package,app_name,utc_ms,tz_offset_min
//!   screen.csv         state,utc_ms,tz_offset_min
//!   activity.csv       activity,confidence,utc_ms,tz_offset_min
//!   location.csv       plus_code,utc_ms,tz_offset_min
//!   esm.csv            utc_ms,tz_offset_min,valence,arousal,social_role,interruptibility
//!   relations.csv      contact_hash,relations            (relations separated by ';')
//!   physio/            EDA.csv BVP.csv HR.csv TEMP.csv ACC.csv IBI.csv (Empatica layout)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    pluscode, Activity, ActivityEvent, AppForegroundEvent, ChannelKind, ContactRelation,
    EsmResponse, EventError, EventLog, IbiEntry, IbiSeries, Interruptibility, LocationEvent,
    NotificationEvent, ParticipantId, PhysioChannel, PhysioRecording, Relation, ScreenEvent,
    ScreenState, SocialRole, Timestamp, IBI_MAX_SECONDS, IBI_MIN_SECONDS,
};

pub const FILE_NOTIFICATIONS: &str = "notifications.csv";
pub const FILE_APP_EVENTS: &str = "app_events.csv";
pub const FILE_SCREEN: &str = "screen.csv";
pub const FILE_ACTIVITY: &str = "activity.csv";
pub const FILE_LOCATION: &str = "location.csv";
pub const FILE_ESM: &str = "esm.csv";
pub const FILE_RELATIONS: &str = "relations.csv";
const PHYSIO_DIR: &str = "physio";
const FILE_IBI: &str = "IBI.csv";

#[derive(Debug, Serialize, Deserialize)]
struct NotificationRow {
    id: String,
    app_package: String,
    arrival_utc_ms: i64,
    tz_offset_min: i32,
    content_length: i64,
    contact_hash: Option<String>,
    removed_utc_ms: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AppRow {
    app_package: String,
    app_name: String,
    utc_ms: i64,
    tz_offset_min: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScreenRow {
    state: ScreenState,
    utc_ms: i64,
    tz_offset_min: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ActivityRow {
    activity: Activity,
    confidence: i64,
    utc_ms: i64,
    tz_offset_min: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct LocationRow {
    plus_code: String,
    utc_ms: i64,
    tz_offset_min: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct EsmRow {
    utc_ms: i64,
    tz_offset_min: i32,
    valence: i64,
    arousal: i64,
    social_role: SocialRole,
    interruptibility: Interruptibility,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationRow {
    contact_hash: String,
    relations: String,
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn schema_error(path: &Path, line: u64, message: impl Into<String>) -> EventError {
    EventError::SchemaError {
        file: file_label(path),
        line,
        message: message.into(),
    }
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, EventError> {
    if !path.is_file() {
        return Err(EventError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema_error(path, 1, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<T>() {
        match record {
            Ok(row) => rows.push(row),
            Err(err) => {
                let line = err.position().map_or(0, |p| p.line());
                return Err(schema_error(path, line, err.to_string()));
            }
        }
    }
    // `deserialize` does not expose positions of successful rows; rows are
    // one per line after the header.
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i as u64 + 2, r))
        .collect())
}

fn timestamp(path: &Path, line: u64, utc_ms: i64, tz: i32) -> Result<Timestamp, EventError> {
    Timestamp::new(utc_ms, tz).map_err(|e| schema_error(path, line, e.to_string()))
}

/// Stable-sorts `(line, item)` pairs by time; records a warning if the file
/// was not already in order.
fn sort_by_time<T>(
    path: &Path,
    mut items: Vec<(u64, T)>,
    time: impl Fn(&T) -> i64,
    warnings: &mut Vec<String>,
) -> Vec<T> {
    if let Some(w) = items.windows(2).find(|w| time(&w[1].1) < time(&w[0].1)) {
        warnings.push(format!(
            "{}: rows out of time order (first at line {}); sorted",
            file_label(path),
            w[1].0
        ));
        items.sort_by_key(|(_, item)| time(item));
    }
    items.into_iter().map(|(_, item)| item).collect()
}

fn parse_notifications(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<NotificationEvent>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<NotificationRow>(path)? {
        if row.content_length < 0 {
            return Err(schema_error(path, line, "negative content_length"));
        }
        if row.app_package.is_empty() {
            return Err(schema_error(path, line, "empty app_package"));
        }
        let arrival = timestamp(path, line, row.arrival_utc_ms, row.tz_offset_min)?;
        let removed_at = match row.removed_utc_ms {
            Some(ms) if ms < row.arrival_utc_ms => {
                return Err(schema_error(path, line, "removed before arrival"));
            }
            Some(ms) => Some(timestamp(path, line, ms, row.tz_offset_min)?),
            None => None,
        };
        out.push((
            line,
            NotificationEvent {
                id: row.id,
                app_package: row.app_package,
                arrival,
                content_length: u32::try_from(row.content_length)
                    .map_err(|_| schema_error(path, line, "content_length too large"))?,
                contact_hash: row.contact_hash.filter(|s| !s.is_empty()),
                removed_at,
            },
        ));
    }
    let sorted = sort_by_time(path, out, |n| n.arrival.utc_millis, warnings);

    // Re-posted ids: keep the earliest arrival.
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept = Vec::with_capacity(sorted.len());
    for n in sorted {
        if let Some(count) = seen.get_mut(&n.id) {
            *count += 1;
            continue;
        }
        seen.insert(n.id.clone(), 0);
        kept.push(n);
    }
    let mut reposts: Vec<_> = seen.into_iter().filter(|(_, c)| *c > 0).collect();
    reposts.sort();
    for (id, count) in reposts {
        warnings.push(format!(
            "{FILE_NOTIFICATIONS}: notification {id} re-posted {count} time(s); kept earliest"
        ));
    }
    Ok(kept)
}

fn parse_app_events(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<AppForegroundEvent>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<AppRow>(path)? {
        if row.app_package.is_empty() {
            return Err(schema_error(path, line, "empty app_package"));
        }
        out.push((
            line,
            AppForegroundEvent {
                app_package: row.app_package,
                app_name: row.app_name,
                at: timestamp(path, line, row.utc_ms, row.tz_offset_min)?,
            },
        ));
    }
    Ok(sort_by_time(path, out, |e| e.at.utc_millis, warnings))
}

fn parse_screen(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<ScreenEvent>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<ScreenRow>(path)? {
        out.push((
            line,
            ScreenEvent {
                state: row.state,
                at: timestamp(path, line, row.utc_ms, row.tz_offset_min)?,
            },
        ));
    }
    let mut events = sort_by_time(path, out, |e| e.at.utc_millis, warnings);
    let before = events.len();
    events.dedup_by(|later, earlier| later.state == earlier.state);
    if events.len() != before {
        warnings.push(format!(
            "{FILE_SCREEN}: dropped {} repeated screen state(s)",
            before - events.len()
        ));
    }
    Ok(events)
}

fn parse_activity(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<ActivityEvent>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<ActivityRow>(path)? {
        if !(0..=100).contains(&row.confidence) {
            return Err(schema_error(path, line, "confidence outside [0, 100]"));
        }
        out.push((
            line,
            ActivityEvent {
                activity: row.activity,
                confidence: row.confidence as u8,
                at: timestamp(path, line, row.utc_ms, row.tz_offset_min)?,
            },
        ));
    }
    Ok(sort_by_time(path, out, |e| e.at.utc_millis, warnings))
}

fn parse_location(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<LocationEvent>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<LocationRow>(path)? {
        if !pluscode::is_valid_10(&row.plus_code) {
            return Err(schema_error(
                path,
                line,
                format!("invalid plus code {:?}", row.plus_code),
            ));
        }
        out.push((
            line,
            LocationEvent {
                plus_code_10: row.plus_code,
                at: timestamp(path, line, row.utc_ms, row.tz_offset_min)?,
            },
        ));
    }
    Ok(sort_by_time(path, out, |e| e.at.utc_millis, warnings))
}

fn parse_esm(path: &Path, warnings: &mut Vec<String>) -> Result<Vec<EsmResponse>, EventError> {
    let mut out = Vec::new();
    for (line, row) in read_rows::<EsmRow>(path)? {
        for (name, v) in [("valence", row.valence), ("arousal", row.arousal)] {
            if !(1..=5).contains(&v) {
                return Err(schema_error(path, line, format!("{name}={v} outside 1..=5")));
            }
        }
        out.push((
            line,
            EsmResponse {
                at: timestamp(path, line, row.utc_ms, row.tz_offset_min)?,
                valence: row.valence as u8,
                arousal: row.arousal as u8,
                social_role: row.social_role,
                interruptibility: row.interruptibility,
            },
        ));
    }
    Ok(sort_by_time(path, out, |e| e.at.utc_millis, warnings))
}

fn parse_relations(
    path: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<ContactRelation>, EventError> {
    let mut merged: BTreeMap<String, BTreeSet<Relation>> = BTreeMap::new();
    for (line, row) in read_rows::<RelationRow>(path)? {
        let mut set = BTreeSet::new();
        for part in row.relations.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let rel = Relation::parse(part)
                .ok_or_else(|| schema_error(path, line, format!("unknown relation {part:?}")))?;
            set.insert(rel);
        }
        ContactRelation::new(row.contact_hash.clone(), set.clone())
            .map_err(|e| schema_error(path, line, e.to_string()))?;
        if merged.contains_key(&row.contact_hash) {
            warnings.push(format!(
                "{FILE_RELATIONS}: contact {} listed more than once; merged",
                row.contact_hash
            ));
        }
        merged.entry(row.contact_hash).or_default().extend(set);
    }
    merged
        .into_iter()
        .map(|(hash, mut set)| {
            if set.len() > 1 {
                set.remove(&Relation::None);
            }
            ContactRelation::new(hash, set)
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String, EventError> {
    if !path.is_file() {
        return Err(EventError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| EventError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn first_field(line: &str) -> &str {
    line.split(',').next().unwrap_or("").trim()
}

/// Header lines shared by all Empatica exports: start time (s) and rate (Hz).
fn parse_header<'a>(
    path: &Path,
    lines: &mut impl Iterator<Item = &'a str>,
    needs_rate: bool,
) -> Result<(Timestamp, Option<f64>), EventError> {
    let bad = |message: &str| EventError::BadHeader {
        file: file_label(path),
        message: message.to_string(),
    };
    let start_line = lines.next().ok_or_else(|| bad("missing start timestamp"))?;
    let start_s: f64 = first_field(start_line)
        .parse()
        .map_err(|_| bad("start timestamp is not a number"))?;
    if !start_s.is_finite() || start_s < 0.0 {
        return Err(bad("start timestamp out of range"));
    }
    let start = Timestamp::utc((start_s * 1000.0).round() as i64);
    if !needs_rate {
        return Ok((start, None));
    }
    let rate_line = lines.next().ok_or_else(|| bad("missing sample rate"))?;
    let rate: f64 = first_field(rate_line)
        .parse()
        .map_err(|_| bad("sample rate is not a number"))?;
    if rate == 0.0 {
        return Err(EventError::ZeroRate {
            file: file_label(path),
        });
    }
    if !rate.is_finite() || rate < 0.0 {
        return Err(bad("sample rate must be positive"));
    }
    Ok((start, Some(rate)))
}

fn parse_sample_rows(
    path: &Path,
    body: &str,
    columns: usize,
) -> Result<Vec<Vec<f64>>, EventError> {
    let mut out = vec![Vec::new(); columns];
    for (i, line) in body.lines().enumerate() {
        let line_no = i as u64 + 3;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        for column in out.iter_mut() {
            let value: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or(EventError::NonNumericSample {
                    file: file_label(path),
                    line: line_no,
                })?;
            column.push(value);
        }
    }
    Ok(out)
}

fn split_header_body(text: &str) -> (std::str::Lines<'_>, &str) {
    // Body starts after the second newline.
    let mut idx = 0;
    for _ in 0..2 {
        match text[idx..].find('\n') {
            Some(p) => idx += p + 1,
            None => {
                idx = text.len();
                break;
            }
        }
    }
    (text.lines(), &text[idx..])
}

/// Loads one channel from an Empatica export. For `ACC_*` kinds the matching
/// column of `ACC.csv` is returned.
pub fn parse_physio_channel(path: &Path, kind: ChannelKind) -> Result<PhysioChannel, EventError> {
    let text = read_text(path)?;
    let (mut lines, body) = split_header_body(&text);
    let (start, rate) = parse_header(path, &mut lines, true)?;
    let rate_hz = rate.expect("rate requested");
    let (columns, pick) = match kind.acc_column() {
        Some(c) => (3, c),
        None => (1, 0),
    };
    let mut data = parse_sample_rows(path, body, columns)?;
    Ok(PhysioChannel {
        kind,
        start,
        rate_hz,
        samples: data.swap_remove(pick),
    })
}

/// Loads all three accelerometer axes from one `ACC.csv` pass.
pub fn parse_acc_channels(path: &Path) -> Result<[PhysioChannel; 3], EventError> {
    let text = read_text(path)?;
    let (mut lines, body) = split_header_body(&text);
    let (start, rate) = parse_header(path, &mut lines, true)?;
    let rate_hz = rate.expect("rate requested");
    let mut data = parse_sample_rows(path, body, 3)?.into_iter();
    let mut next = |kind| PhysioChannel {
        kind,
        start,
        rate_hz,
        samples: data.next().unwrap_or_default(),
    };
    Ok([
        next(ChannelKind::AccX),
        next(ChannelKind::AccY),
        next(ChannelKind::AccZ),
    ])
}

/// Loads an Empatica `IBI.csv`; returns the validated series and the number
/// of rows dropped as artifacts.
pub fn parse_ibi(path: &Path) -> Result<(IbiSeries, usize), EventError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let (start, _) = parse_header(path, &mut lines, false)?;
    let mut entries = Vec::new();
    let mut dropped = 0;
    let mut last_offset = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        let line_no = i as u64 + 2;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(|f| f.trim().parse::<f64>());
        let (Some(Ok(offset)), Some(Ok(interval))) = (fields.next(), fields.next()) else {
            return Err(EventError::NonNumericSample {
                file: file_label(path),
                line: line_no,
            });
        };
        if !offset.is_finite() || !interval.is_finite() || offset < 0.0 {
            return Err(EventError::NonNumericSample {
                file: file_label(path),
                line: line_no,
            });
        }
        if offset <= last_offset {
            return Err(EventError::NonMonotonicTimestamp {
                file: file_label(path),
                line: line_no,
            });
        }
        last_offset = offset;
        if interval <= IBI_MIN_SECONDS || interval >= IBI_MAX_SECONDS {
            dropped += 1;
            continue;
        }
        entries.push(IbiEntry {
            offset_seconds: offset,
            interval_seconds: interval,
        });
    }
    Ok((IbiSeries { start, entries }, dropped))
}

fn parse_physio_dir(dir: &Path, warnings: &mut Vec<String>) -> Result<PhysioRecording, EventError> {
    let mut rec = PhysioRecording::default();
    if !dir.is_dir() {
        return Ok(rec);
    }
    for kind in [
        ChannelKind::Eda,
        ChannelKind::Bvp,
        ChannelKind::Hr,
        ChannelKind::St,
    ] {
        let path = dir.join(kind.file_name());
        if path.is_file() {
            rec.channels.insert(kind, parse_physio_channel(&path, kind)?);
        }
    }
    let acc = dir.join(ChannelKind::AccX.file_name());
    if acc.is_file() {
        for ch in parse_acc_channels(&acc)? {
            rec.channels.insert(ch.kind, ch);
        }
    }
    let ibi = dir.join(FILE_IBI);
    if ibi.is_file() {
        let (series, dropped) = parse_ibi(&ibi)?;
        if dropped > 0 {
            warnings.push(format!(
                "{FILE_IBI}: dropped {dropped} interval(s) outside ({IBI_MIN_SECONDS}, {IBI_MAX_SECONDS}) s"
            ));
        }
        rec.ibi = Some(series);
        rec.ibi_dropped = dropped;
    }
    Ok(rec)
}

/// Loads and validates one participant directory. The participant id is the
/// directory name.
pub fn parse_event_log(dir: &Path) -> Result<EventLog, EventError> {
    if !dir.is_dir() {
        return Err(EventError::MissingFile(dir.to_path_buf()));
    }
    let participant = ParticipantId(
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    );
    let mut warnings = Vec::new();
    let notifications = parse_notifications(&dir.join(FILE_NOTIFICATIONS), &mut warnings)?;
    let app_events = parse_app_events(&dir.join(FILE_APP_EVENTS), &mut warnings)?;
    let screen_events = parse_screen(&dir.join(FILE_SCREEN), &mut warnings)?;
    let activity_events = parse_activity(&dir.join(FILE_ACTIVITY), &mut warnings)?;
    let location_events = parse_location(&dir.join(FILE_LOCATION), &mut warnings)?;
    let esm_responses = parse_esm(&dir.join(FILE_ESM), &mut warnings)?;
    let contact_relations = parse_relations(&dir.join(FILE_RELATIONS), &mut warnings)?;
    let physio = parse_physio_dir(&dir.join(PHYSIO_DIR), &mut warnings)?;
    Ok(EventLog {
        participant,
        notifications,
        app_events,
        screen_events,
        activity_events,
        location_events,
        esm_responses,
        contact_relations,
        physio,
        warnings,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EventError + '_ {
    move |source| EventError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), EventError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| EventError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    let to_io = |e: csv::Error| EventError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    writer.write_record(header).map_err(to_io)?;
    for row in rows {
        writer.serialize(row).map_err(to_io)?;
    }
    writer.flush().map_err(io_err(path))
}

fn seconds_text(millis: i64) -> String {
    format!("{}.{:03}000", millis / 1000, millis % 1000)
}

/// Writes one channel in the Empatica layout (ACC channels are written as
/// single-column files; use [`write_event_log`] for a full ACC export).
pub fn write_physio_channel(path: &Path, channel: &PhysioChannel) -> Result<(), EventError> {
    let mut out = String::with_capacity(channel.samples.len() * 8 + 64);
    out.push_str(&seconds_text(channel.start.utc_millis));
    out.push('\n');
    out.push_str(&format!("{:.6}\n", channel.rate_hz));
    for s in &channel.samples {
        out.push_str(&format!("{s}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}

fn write_acc(path: &Path, axes: [&PhysioChannel; 3]) -> Result<(), EventError> {
    let start = seconds_text(axes[0].start.utc_millis);
    let rate = format!("{:.6}", axes[0].rate_hz);
    let mut out = format!("{start},{start},{start}\n{rate},{rate},{rate}\n");
    let n = axes.iter().map(|a| a.samples.len()).min().unwrap_or(0);
    for i in 0..n {
        out.push_str(&format!(
            "{},{},{}\n",
            axes[0].samples[i], axes[1].samples[i], axes[2].samples[i]
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

fn write_ibi(path: &Path, series: &IbiSeries) -> Result<(), EventError> {
    let mut out = format!("{}, IBI\n", seconds_text(series.start.utc_millis));
    for e in &series.entries {
        out.push_str(&format!("{},{}\n", e.offset_seconds, e.interval_seconds));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes the canonical directory layout for `log` under `dir`.
pub fn write_event_log(log: &EventLog, dir: &Path) -> Result<(), EventError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = |name: &str| -> PathBuf { dir.join(name) };

    let rows: Vec<_> = log
        .notifications
        .iter()
        .map(|n| NotificationRow {
            id: n.id.clone(),
            app_package: n.app_package.clone(),
            arrival_utc_ms: n.arrival.utc_millis,
            tz_offset_min: n.arrival.tz_offset_minutes,
            content_length: i64::from(n.content_length),
            contact_hash: n.contact_hash.clone(),
            removed_utc_ms: n.removed_at.map(|t| t.utc_millis),
        })
        .collect();
    write_rows(
        &p(FILE_NOTIFICATIONS),
        &[
            "id",
            "app_package",
            "arrival_utc_ms",
            "tz_offset_min",
            "content_length",
            "contact_hash",
            "removed_utc_ms",
        ],
        &rows,
    )?;

    let rows: Vec<_> = log
        .app_events
        .iter()
        .map(|e| AppRow {
            app_package: e.app_package.clone(),
            app_name: e.app_name.clone(),
            utc_ms: e.at.utc_millis,
            tz_offset_min: e.at.tz_offset_minutes,
        })
        .collect();
    write_rows(
        &p(FILE_APP_EVENTS),
        &["app_package", "app_name", "utc_ms", "tz_offset_min"],
        &rows,
    )?;

    let rows: Vec<_> = log
        .screen_events
        .iter()
        .map(|e| ScreenRow {
            state: e.state,
            utc_ms: e.at.utc_millis,
            tz_offset_min: e.at.tz_offset_minutes,
        })
        .collect();
    write_rows(&p(FILE_SCREEN), &["state", "utc_ms", "tz_offset_min"], &rows)?;

    let rows: Vec<_> = log
        .activity_events
        .iter()
        .map(|e| ActivityRow {
            activity: e.activity,
            confidence: i64::from(e.confidence),
            utc_ms: e.at.utc_millis,
            tz_offset_min: e.at.tz_offset_minutes,
        })
        .collect();
    write_rows(
        &p(FILE_ACTIVITY),
        &["activity", "confidence", "utc_ms", "tz_offset_min"],
        &rows,
    )?;

    let rows: Vec<_> = log
        .location_events
        .iter()
        .map(|e| LocationRow {
            plus_code: e.plus_code_10.clone(),
            utc_ms: e.at.utc_millis,
            tz_offset_min: e.at.tz_offset_minutes,
        })
        .collect();
    write_rows(&p(FILE_LOCATION), &["plus_code", "utc_ms", "tz_offset_min"], &rows)?;

    let rows: Vec<_> = log
        .esm_responses
        .iter()
        .map(|e| EsmRow {
            utc_ms: e.at.utc_millis,
            tz_offset_min: e.at.tz_offset_minutes,
            valence: i64::from(e.valence),
            arousal: i64::from(e.arousal),
            social_role: e.social_role,
            interruptibility: e.interruptibility,
        })
        .collect();
    write_rows(
        &p(FILE_ESM),
        &[
            "utc_ms",
            "tz_offset_min",
            "valence",
            "arousal",
            "social_role",
            "interruptibility",
        ],
        &rows,
    )?;

    let rows: Vec<_> = log
        .contact_relations
        .iter()
        .map(|c| RelationRow {
            contact_hash: c.contact_hash.clone(),
            relations: c
                .relations
                .iter()
                .map(|r| r.name())
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect();
    write_rows(&p(FILE_RELATIONS), &["contact_hash", "relations"], &rows)?;

    if !log.physio.is_empty() {
        let physio_dir = dir.join(PHYSIO_DIR);
        fs::create_dir_all(&physio_dir).map_err(io_err(&physio_dir))?;
        for kind in [
            ChannelKind::Eda,
            ChannelKind::Bvp,
            ChannelKind::Hr,
            ChannelKind::St,
        ] {
            if let Some(ch) = log.physio.channels.get(&kind) {
                write_physio_channel(&physio_dir.join(kind.file_name()), ch)?;
            }
        }
        let acc = [ChannelKind::AccX, ChannelKind::AccY, ChannelKind::AccZ]
            .map(|k| log.physio.channels.get(&k));
        if let [Some(x), Some(y), Some(z)] = acc {
            write_acc(&physio_dir.join(ChannelKind::AccX.file_name()), [x, y, z])?;
        }
        if let Some(ibi) = &log.physio.ibi {
            write_ibi(&physio_dir.join(FILE_IBI), ibi)?;
        }
    }
    Ok(())
}
