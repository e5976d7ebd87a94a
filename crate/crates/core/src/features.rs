//! Named feature vectors, the feature manifest, and the `features.csv` table.
//!
//! Every feature belongs to a group. Maskable groups (a channel that can be
//! missing, or ESM answers that can be stale) are masked as a whole: all of
//! their entries read 0 and the paired `mask_<group>` column is 1.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::physio;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("features.csv: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mobile,
    Esm,
    E4,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mobile => "mobile",
            Family::Esm => "esm",
            Family::E4 => "e4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Family::Mobile, Family::Esm, Family::E4]
            .into_iter()
            .find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub group: String,
    pub value: f64,
    pub masked: bool,
}

/// An ordered set of named values. Masked entries hold 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<FeatureEntry>,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, group: &str, value: f64) {
        self.entries.push(FeatureEntry {
            name: name.into(),
            group: group.to_string(),
            value,
            masked: false,
        });
    }

    pub fn push_masked(&mut self, name: impl Into<String>, group: &str) {
        self.entries.push(FeatureEntry {
            name: name.into(),
            group: group.to_string(),
            value: 0.0,
            masked: true,
        });
    }

    pub fn mask_group(&mut self, group: &str) {
        for e in self.entries.iter_mut().filter(|e| e.group == group) {
            e.value = 0.0;
            e.masked = true;
        }
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.entries.extend(other.entries);
    }

    /// Value of an unmasked entry.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .filter(|e| !e.masked)
            .map(|e| e.value)
    }

    pub fn is_masked(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name && e.masked)
    }

    pub fn group_masked(&self, group: &str) -> bool {
        let mut members = self.entries.iter().filter(|e| e.group == group).peekable();
        members.peek().is_some() && members.all(|e| e.masked)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub family: Family,
    pub group: String,
    pub unit: String,
    pub maskable: bool,
}

pub const WINDOW_MINUTES: [i64; 6] = [5, 10, 15, 20, 25, 30];
pub const TIME_BUCKETS: [&str; 4] = ["midnight", "morning", "afternoon", "evening"];
pub const ROLE_NAMES: [&str; 3] = ["work", "private", "both"];
pub const INTERRUPTIBILITY_NAMES: [&str; 4] = ["work", "private", "both", "none"];

pub fn window_suffix(minutes: i64) -> String {
    format!("{minutes:02}")
}

/// Groups whose entries may be masked.
pub const MASKABLE_GROUPS: [&str; 17] = [
    "place",
    "screen",
    "relation",
    "contact",
    "mood",
    "role",
    "interruptibility",
    "eda",
    "eda_decomp",
    "bvp",
    "hr",
    "st",
    "hrv_time",
    "hrv_freq",
    "lf_hf_ratio",
    "triangular",
    "acc",
];

fn spec(name: String, family: Family, group: &str, unit: &str) -> FeatureSpec {
    FeatureSpec {
        maskable: MASKABLE_GROUPS.contains(&group),
        name,
        family,
        group: group.to_string(),
        unit: unit.to_string(),
    }
}

/// Smartphone context features, in emission order.
pub fn mobile_manifest() -> Vec<FeatureSpec> {
    let m = Family::Mobile;
    let mut out = Vec::new();
    for x in WINDOW_MINUTES {
        out.push(spec(format!("phone_apps_{}", window_suffix(x)), m, "app_usage", "count"));
    }
    for x in WINDOW_MINUTES {
        out.push(spec(format!("topk_{}_unique", window_suffix(x)), m, "app_usage", "count"));
    }
    for day in crate::event::Weekday::ALL {
        out.push(spec(format!("day_{}", day.name()), m, "day_of_week", "indicator"));
    }
    for bucket in TIME_BUCKETS {
        out.push(spec(format!("time_{bucket}"), m, "time_of_day", "indicator"));
    }
    out.push(spec("is_weekend".into(), m, "weekend", "indicator"));
    for name in ["place_top_1", "place_top_2", "place_top_3", "place_other"] {
        out.push(spec(name.into(), m, "place", "indicator"));
    }
    out.push(spec("loc_8".into(), m, "place", "category id"));
    out.push(spec("loc_10".into(), m, "place", "category id"));
    out.push(spec("notification_length".into(), m, "notification", "characters"));
    out.push(spec("screen".into(), m, "screen", "indicator (1 = on)"));
    for x in WINDOW_MINUTES {
        out.push(spec(
            format!("physical_activity_{}", window_suffix(x)),
            m,
            "activity",
            "count",
        ));
    }
    for r in crate::event::Relation::ALL {
        out.push(spec(format!("relation_{}", r.name()), m, "relation", "indicator"));
    }
    out.push(spec("contact".into(), m, "contact", "category id"));
    out
}

pub fn esm_manifest() -> Vec<FeatureSpec> {
    let e = Family::Esm;
    let mut out = vec![
        spec("valence".into(), e, "mood", "scale 1-5"),
        spec("arousal".into(), e, "mood", "scale 1-5"),
    ];
    for r in ROLE_NAMES {
        out.push(spec(format!("role_{r}"), e, "role", "indicator"));
    }
    for i in INTERRUPTIBILITY_NAMES {
        out.push(spec(format!("interruptibility_{i}"), e, "interruptibility", "indicator"));
    }
    out
}

pub fn e4_manifest(include_acc: bool) -> Vec<FeatureSpec> {
    physio::physio_manifest(include_acc)
        .into_iter()
        .map(|(name, group, unit)| spec(name, Family::E4, group, unit))
        .collect()
}

/// All features in `features.csv` column order.
pub fn feature_manifest(include_acc: bool) -> Vec<FeatureSpec> {
    let mut out = mobile_manifest();
    out.extend(esm_manifest());
    out.extend(e4_manifest(include_acc));
    out
}

pub fn write_manifest_csv<W: Write>(writer: W, manifest: &[FeatureSpec]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "family", "group", "unit", "maskable"])?;
    for s in manifest {
        w.write_record([
            s.name.as_str(),
            s.family.name(),
            s.group.as_str(),
            s.unit.as_str(),
            if s.maskable { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One uncensored notification with its features and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub participant: String,
    pub notification_id: String,
    pub app: String,
    pub arrival_utc_ms: i64,
    pub tz_offset_min: i32,
    pub response_s: f64,
    pub target: f64,
    /// Aligned with [`FeatureTable::names`].
    pub values: Vec<f64>,
    /// Aligned with [`FeatureTable::mask_groups`]; `true` = masked.
    pub masks: Vec<bool>,
}

/// Column metadata plus rows, for any number of participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub manifest: Vec<FeatureSpec>,
    pub mask_groups: Vec<String>,
    pub rows: Vec<LabeledInstance>,
}

const ID_COLUMNS: [&str; 7] = [
    "participant",
    "notification_id",
    "app",
    "arrival_utc_ms",
    "tz_offset_min",
    "response_s",
    "target",
];

impl FeatureTable {
    pub fn new(manifest: Vec<FeatureSpec>) -> Self {
        let mut seen = BTreeSet::new();
        let mask_groups = manifest
            .iter()
            .filter(|s| s.maskable && seen.insert(s.group.clone()))
            .map(|s| s.group.clone())
            .collect();
        Self {
            manifest,
            mask_groups,
            rows: Vec::new(),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.manifest.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.manifest.iter().position(|s| s.name == name)
    }

    pub fn mask_index(&self, group: &str) -> Option<usize> {
        self.mask_groups.iter().position(|g| g == group)
    }

    /// Column indices belonging to any of `families`.
    pub fn columns_of(&self, families: &[Family]) -> Vec<usize> {
        (0..self.manifest.len())
            .filter(|&j| families.contains(&self.manifest[j].family))
            .collect()
    }

    /// Maskable groups that contain columns of `family`.
    pub fn mask_groups_of(&self, family: Family) -> Vec<usize> {
        self.mask_groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                self.manifest
                    .iter()
                    .any(|s| s.family == family && &s.group == *g)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Adds a row from a full feature vector; names must follow the manifest.
    pub fn push(
        &mut self,
        meta: LabeledInstance,
        vector: &FeatureVector,
    ) -> Result<(), FeatureError> {
        if vector.len() != self.manifest.len()
            || vector
                .entries
                .iter()
                .zip(&self.manifest)
                .any(|(e, s)| e.name != s.name)
        {
            return Err(FeatureError::Schema(
                "feature vector does not follow the manifest".into(),
            ));
        }
        let masks = self
            .mask_groups
            .iter()
            .map(|g| vector.group_masked(g))
            .collect();
        self.rows.push(LabeledInstance {
            values: vector.values(),
            masks,
            ..meta
        });
        Ok(())
    }

    pub fn participants(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.participant.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn rows_of<'a>(&'a self, participant: &'a str) -> impl Iterator<Item = &'a LabeledInstance> {
        self.rows.iter().filter(move |r| r.participant == participant)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.manifest.iter().map(|s| s.name.clone()));
        header.extend(self.mask_groups.iter().map(|g| format!("mask_{g}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.participant.clone(),
                r.notification_id.clone(),
                r.app.clone(),
                r.arrival_utc_ms.to_string(),
                r.tz_offset_min.to_string(),
                format_float(r.response_s),
                format_float(r.target),
            ];
            rec.extend(r.values.iter().map(|&v| format_float(v)));
            rec.extend(r.masks.iter().map(|&m| if m { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a table written by [`FeatureTable::write_csv`]; the manifest
    /// supplies family/group/unit metadata for the feature columns.
    pub fn read_csv<R: Read>(reader: R, manifest: Vec<FeatureSpec>) -> Result<Self, FeatureError> {
        let mut table = FeatureTable::new(manifest);
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = r.headers()?.clone();
        let n_feat = table.manifest.len();
        let n_mask = table.mask_groups.len();
        let expected: Vec<String> = ID_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(table.manifest.iter().map(|s| s.name.clone()))
            .chain(table.mask_groups.iter().map(|g| format!("mask_{g}")))
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(FeatureError::Schema("header does not match manifest".into()));
        }
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| FeatureError::Schema(format!("row {}: bad {what}", line + 1));
            let num = |i: usize| -> Result<f64, FeatureError> {
                rec[i].parse::<f64>().map_err(|_| bad(&expected[i]))
            };
            let values = (0..n_feat).map(|j| num(7 + j)).collect::<Result<_, _>>()?;
            let masks = (0..n_mask)
                .map(|j| match &rec[7 + n_feat + j] {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    _ => Err(bad("mask")),
                })
                .collect::<Result<_, _>>()?;
            table.rows.push(LabeledInstance {
                participant: rec[0].to_string(),
                notification_id: rec[1].to_string(),
                app: rec[2].to_string(),
                arrival_utc_ms: rec[3].parse().map_err(|_| bad("arrival_utc_ms"))?,
                tz_offset_min: rec[4].parse().map_err(|_| bad("tz_offset_min"))?,
                response_s: num(5)?,
                target: num(6)?,
                values,
                masks,
            });
        }
        Ok(table)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}
