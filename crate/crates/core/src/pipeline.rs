//! Per-participant labelling and feature extraction into one table.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::context::{ContextConfig, ContextExtractor};
use crate::event::EventLog;
use crate::features::{feature_manifest, FeatureError, FeatureTable, LabeledInstance};
use crate::labeling::{
    filter_by_category, pair_response_times, top_k_apps, AppCatalog, CategoryMap, LabelError,
    ResponseLabel, DEFAULT_TOP_K,
};
use crate::physio::{physio_feature_vector, PhysioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub top_k: usize,
    /// Only notifications of this app category become instances; empty keeps all.
    pub category: String,
    pub context: ContextConfig,
    pub physio: PhysioConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            category: "communication".into(),
            context: ContextConfig::default(),
            physio: PhysioConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Uncensored labels of the participant's top-k apps in the configured category.
pub fn instance_labels(
    log: &EventLog,
    cfg: &ExtractConfig,
    categories: &CategoryMap,
) -> Result<(AppCatalog, Vec<ResponseLabel>), PipelineError> {
    let catalog = AppCatalog::from_notifications(&log.notifications, categories.clone());
    let top: BTreeSet<String> = top_k_apps(&catalog, cfg.top_k.max(1)).into_iter().collect();
    let labels: Vec<ResponseLabel> = pair_response_times(log)
        .into_iter()
        .filter(|l| !l.censored && top.contains(&l.app_package))
        .collect();
    let labels = if cfg.category.is_empty() {
        labels
    } else {
        filter_by_category(labels, &cfg.category, &catalog)?
    };
    Ok((catalog, labels))
}

/// Feature rows for one participant, in notification order.
pub fn participant_rows(
    log: &EventLog,
    cfg: &ExtractConfig,
    categories: &CategoryMap,
) -> Result<FeatureTable, PipelineError> {
    let (catalog, labels) = instance_labels(log, cfg, categories)?;
    let top: BTreeSet<String> = top_k_apps(&catalog, cfg.top_k.max(1)).into_iter().collect();
    let extractor = ContextExtractor::new(log, top, cfg.context);
    let by_id: std::collections::HashMap<&str, &crate::event::NotificationEvent> =
        log.notifications.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut table = FeatureTable::new(feature_manifest(cfg.physio.include_acc));
    for label in &labels {
        let notif = by_id[label.notification_id.as_str()];
        let mut v = extractor.extract(notif);
        v.extend(physio_feature_vector(&log.physio, notif.arrival, &cfg.physio));
        let seconds = label.response_seconds.expect("uncensored label");
        table.push(
            LabeledInstance {
                participant: log.participant.0.clone(),
                notification_id: notif.id.clone(),
                app: notif.app_package.clone(),
                arrival_utc_ms: notif.arrival.utc_millis,
                tz_offset_min: notif.arrival.tz_offset_minutes,
                response_s: seconds,
                target: label.target.expect("uncensored label"),
                values: Vec::new(),
                masks: Vec::new(),
            },
            &v,
        )?;
    }
    Ok(table)
}

/// Rows of every participant, concatenated in input order.
pub fn build_table(
    logs: &[EventLog],
    cfg: &ExtractConfig,
    categories: &CategoryMap,
) -> Result<FeatureTable, PipelineError> {
    use rayon::prelude::*;
    let parts: Vec<FeatureTable> = logs
        .par_iter()
        .map(|log| participant_rows(log, cfg, categories))
        .collect::<Result<_, _>>()?;
    let mut table = FeatureTable::new(feature_manifest(cfg.physio.include_acc));
    for p in parts {
        table.rows.extend(p.rows);
    }
    Ok(table)
}
