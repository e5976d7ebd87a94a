//! Declarative run configuration and the file-based pipeline stages.
//!
//! Every stage reads its inputs from disk, writes its artifacts under
//! `<output_dir>/run-<hash>/` and records a manifest with sha256 digests of
//! what it read and wrote. CSV artifacts start with a `# config_hash=` line,
//! JSON artifacts carry a `config_hash` field.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    category_summary, cdf_fractions_censored, cdf_points, cdf_table, dagostino_k2, log_thresholds,
    mood_summary, spearman, write_cdf_points_csv, CategoryRow, CdfTable, CorrelationResult,
    CoverageRow, MoodGrouping, MoodRow, NormalityResult, DEFAULT_CDF_THRESHOLDS,
};
use crate::eval::{
    ablation, evaluate_cohort, feature_importance, participant_matrix, train_final, AblationResult,
    CohortResult, CvConfig, EvalError, FoldChoice, ImportanceScore, SkippedParticipant,
};
use crate::event::{parse_event_log, EventLog};
use crate::features::{feature_manifest, format_float, write_manifest_csv, Family, FeatureTable};
use crate::labeling::{
    pair_response_times, read_labels_csv, top_k_apps, write_labels_csv, AppCatalog, CategoryMap,
    LabelRow,
};
use crate::models::{ModelError, RegressorKind, TrainedModel};
use crate::pipeline::{build_table, ExtractConfig, PipelineError};
use crate::synth::{self, CalibrationTargets, GeneratorConfig};

pub const LABELS_FILE: &str = "labels.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURE_MANIFEST_FILE: &str = "feature_manifest.csv";
pub const INGEST_FILE: &str = "ingest.json";
pub const TRAIN_FILE: &str = "train.json";
pub const MODELS_DIR: &str = "models";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const ANALYSIS_JSON: &str = "analysis.json";
pub const ANALYSIS_CSV: &str = "analysis.csv";
pub const CDF_POINTS_FILE: &str = "cdf_points.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const IMPORTANCE_CSV: &str = "importance.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const MANIFEST_DIR: &str = "manifests";
pub const SYNTH_MANIFEST_FILE: &str = "synth_manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Data(_) => 2,
            RunError::Internal(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Data(_) => "data",
            RunError::Internal(_) => "internal",
        }
    }
}

fn data<E: fmt::Display>(e: E) -> RunError {
    RunError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::Data(format!("{}: {e}", path.display()))
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m @ (ModelError::NotFitted | ModelError::DimensionMismatch { .. })) => {
                RunError::Internal(m.to_string())
            }
            other => RunError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for RunError {
    fn from(e: PipelineError) -> Self {
        RunError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Ingest,
    Label,
    Features,
    Train,
    Evaluate,
    Analyze,
    Report,
    All,
}

impl Command {
    pub const STAGES: [Command; 7] = [
        Command::Ingest,
        Command::Label,
        Command::Features,
        Command::Train,
        Command::Evaluate,
        Command::Analyze,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ingest => "ingest",
            Command::Label => "label",
            Command::Features => "features",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Analyze => "analyze",
            Command::Report => "report",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding one sub-directory per participant.
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Package-to-category CSV; the bundled map when unset.
    pub category_map: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input_dir: "data".into(),
            output_dir: "out".into(),
            category_map: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Refit intercept, sigma and popularity exponent before simulating.
    pub enabled: bool,
    pub cdf: [f64; 3],
    pub top10_coverage: Option<f64>,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        let t = CalibrationTargets::default();
        Self {
            enabled: false,
            cdf: t.cdf,
            top10_coverage: t.top10_coverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub regressors: Vec<RegressorKind>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            regressors: RegressorKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub cdf_thresholds: Vec<f64>,
    /// Number of log-spaced thresholds in `cdf_points.csv`.
    pub cdf_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            cdf_thresholds: DEFAULT_CDF_THRESHOLDS.to_vec(),
            cdf_points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub ablations: Vec<Family>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            ablations: vec![Family::Esm, Family::E4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the generator and the fold assignment unless `synth.seed` or
    /// `cv.seed` are given explicitly.
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub synth: GeneratorConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_jobs() -> usize {
    1
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), RunError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| RunError::Config(format!("empty key in override {key:?}")))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("{p} in {key} is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies `section.key=value` overrides, then fills
    /// the stage seeds from the top-level seed.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self, RunError> {
        let mut table: toml::Table = text.parse().map_err(|e| RunError::Config(format!("{e}")))?;
        for (k, v) in overrides {
            set_path(&mut table, k, parse_value(v))?;
        }
        let seed = table
            .get("seed")
            .cloned()
            .ok_or_else(|| RunError::Config("missing required key `seed`".into()))?;
        for section in ["synth", "cv"] {
            let t = table
                .entry(section)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| RunError::Config(format!("`{section}` must be a section")))?;
            t.entry("seed").or_insert_with(|| seed.clone());
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[(String, String)]) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if self.cv.k_outer < 2 || self.cv.k_inner < 2 {
            return bad("cv.k_outer and cv.k_inner must be at least 2");
        }
        if self.cv.k_features == 0 {
            return bad("cv.k_features must be at least 1");
        }
        if self.extract.top_k == 0 {
            return bad("extract.top_k must be at least 1");
        }
        if self.extract.physio.window_s <= 0.0 {
            return bad("extract.physio.window_s must be positive");
        }
        if self.extract.context.esm_horizon_min <= 0 {
            return bad("extract.context.esm_horizon_min must be positive");
        }
        if self.models.regressors.is_empty() {
            return bad("models.regressors is empty");
        }
        if self.analysis.cdf_thresholds.iter().any(|t| !t.is_finite() || *t <= 0.0)
            || self.analysis.cdf_thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("analysis.cdf_thresholds must be positive and increasing");
        }
        if self.analysis.cdf_points < 2 {
            return bad("analysis.cdf_points must be at least 2");
        }
        self.synth.validate().map_err(|e| RunError::Config(e.to_string()))
    }

    /// Digest of every setting that can change an artifact (everything but
    /// `jobs` and the output location).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("jobs");
            if let Some(paths) = obj.get_mut("paths").and_then(|p| p.as_object_mut()) {
                paths.remove("output_dir");
            }
        }
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .join(format!("run-{}", &self.hash()[..12]))
    }

    fn categories(&self) -> Result<CategoryMap, RunError> {
        match &self.paths.category_map {
            Some(p) => CategoryMap::from_path(p).map_err(|e| RunError::Config(e.to_string())),
            None => Ok(CategoryMap::default()),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, RunError> {
    let mut f = fs::File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = std::io::Read::read(&mut f, &mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Files under `dir`, recursively, sorted, as paths relative to `dir`.
fn list_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(io_err(&d))? {
            let path = entry.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap_or(&path).to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub tool_version: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn digest_map(base: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>, RunError> {
    files
        .par_iter()
        .map(|f| Ok((f.to_string_lossy().replace('\\', "/"), sha256_file(&base.join(f))?)))
        .collect()
}

struct Stage<'a> {
    cfg: &'a RunConfig,
    hash: String,
    run_dir: PathBuf,
}

impl Stage<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| RunError::Internal(e.to_string()))?;
        self.write(name, format!("{text}\n").as_bytes())
    }

    fn csv_prefix(&self) -> Vec<u8> {
        format!("# config_hash={}\n", self.hash).into_bytes()
    }

    fn manifest(
        &self,
        command: Command,
        input_base: &Path,
        inputs: &[PathBuf],
        outputs: &[&str],
    ) -> Result<(), RunError> {
        let outs: Vec<PathBuf> = outputs.iter().map(PathBuf::from).collect();
        let m = StageManifest {
            stage: command.name().to_string(),
            config_hash: self.hash.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: digest_map(input_base, inputs)?,
            outputs: digest_map(&self.run_dir, &outs)?,
        };
        self.write_json(&format!("{MANIFEST_DIR}/{}.json", command.name()), &m)
    }

    /// Checks the leading `# config_hash=` line of a CSV artifact.
    fn read_hashed(&self, name: &str) -> Result<String, RunError> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(|e| {
            RunError::Data(format!("{}: {e} (run the producing stage first)", path.display()))
        })?;
        let first = text.lines().next().unwrap_or("");
        match first.strip_prefix("# config_hash=") {
            Some(h) if h == self.hash => Ok(text),
            Some(h) => Err(RunError::Data(format!(
                "{name} was produced by config {h}, not {}",
                self.hash
            ))),
            None => Err(RunError::Data(format!("{name} has no config_hash header"))),
        }
    }

    fn read_json<T: for<'de> Deserialize<'de> + HasHash>(&self, name: &str) -> Result<T, RunError> {
        let path = self.path(name);
        let text = fs::read_to_string(&path).map_err(|e| {
            RunError::Data(format!("{}: {e} (run the producing stage first)", path.display()))
        })?;
        let v: T = serde_json::from_str(&text).map_err(|e| RunError::Data(format!("{name}: {e}")))?;
        if v.config_hash() != self.hash {
            return Err(RunError::Data(format!(
                "{name} was produced by config {}, not {}",
                v.config_hash(),
                self.hash
            )));
        }
        Ok(v)
    }

    fn participant_dirs(&self) -> Result<Vec<PathBuf>, RunError> {
        let dir = &self.cfg.paths.input_dir;
        if !dir.is_dir() {
            return Err(RunError::Config(format!("input directory {} does not exist", dir.display())));
        }
        let mut out: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        out.sort();
        if out.is_empty() {
            return Err(RunError::Data(format!("no participant directories in {}", dir.display())));
        }
        Ok(out)
    }

    /// Input files of every participant, relative to the input directory.
    fn input_files(&self) -> Result<Vec<PathBuf>, RunError> {
        let base = &self.cfg.paths.input_dir;
        let mut out = Vec::new();
        for d in self.participant_dirs()? {
            let rel = d.strip_prefix(base).unwrap_or(&d).to_path_buf();
            out.extend(list_files(&d)?.into_iter().map(|f| rel.join(f)));
        }
        Ok(out)
    }

    fn load(&self, dir: &Path) -> Result<EventLog, RunError> {
        parse_event_log(dir).map_err(data)
    }

    fn features_table(&self) -> Result<FeatureTable, RunError> {
        let text = self.read_hashed(FEATURES_FILE)?;
        FeatureTable::read_csv(text.as_bytes(), feature_manifest(self.cfg.extract.physio.include_acc))
            .map_err(data)
    }
}

trait HasHash {
    fn config_hash(&self) -> &str;
}

macro_rules! has_hash {
    ($($t:ty),*) => {
        $(impl HasHash for $t {
            fn config_hash(&self) -> &str {
                &self.config_hash
            }
        })*
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config_hash: String,
    pub generator: GeneratorConfig,
    pub calibrated: bool,
    pub measurement: synth::CohortMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestParticipant {
    pub participant: String,
    pub notifications: usize,
    pub app_events: usize,
    pub screen_events: usize,
    pub activity_events: usize,
    pub location_events: usize,
    pub esm_responses: usize,
    pub contact_relations: usize,
    pub physio_samples: BTreeMap<String, usize>,
    pub ibi_beats: usize,
    pub ibi_dropped: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub config_hash: String,
    pub participants: Vec<IngestParticipant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEntry {
    pub participant: String,
    pub regressor: RegressorKind,
    pub n_instances: usize,
    pub model_file: String,
    pub choice: FoldChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub families: Vec<Family>,
    pub models: Vec<TrainedEntry>,
    pub skipped: Vec<SkippedParticipant>,
}

/// Contents of `models/<participant>/<regressor>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub config_hash: String,
    pub participant: String,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantImportance {
    pub participant: String,
    pub n_instances: usize,
    pub scores: Vec<ImportanceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AblationOutcome {
    Done(AblationResult),
    EmptyIntersection { family: Family, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub config_hash: String,
    pub cohort: CohortResult,
    pub importance: Vec<ParticipantImportance>,
    pub importance_skipped: Vec<SkippedParticipant>,
    pub ablations: Vec<AblationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub config_hash: String,
    pub n_notifications: usize,
    pub n_uncensored: usize,
    pub top_k: usize,
    pub coverage: Vec<CoverageRow>,
    /// Over top-k notifications, never-answered ones in the denominator.
    pub top_k_cdf_with_censored: Vec<f64>,
    /// Over uncensored top-k notifications.
    pub cdf: CdfTable,
    pub categories: Vec<CategoryRow>,
    pub mood: Vec<MoodRow>,
    pub normality: BTreeMap<String, NormalityResult>,
    pub correlations: Vec<CorrelationResult>,
    pub per_participant_correlations: BTreeMap<String, Vec<CorrelationResult>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub regressors: Vec<RegressorKind>,
    pub evaluation: Evaluation,
    pub analysis: Analysis,
}

has_hash!(SynthManifest, ModelArtifact, IngestSummary, TrainSummary, Evaluation, Analysis, Report);

/// Runs `command` inside a worker pool of `cfg.jobs` threads.
pub fn run(command: Command, cfg: &RunConfig) -> Result<PathBuf, RunError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| RunError::Internal(e.to_string()))?;
    pool.install(|| run_in_pool(command, cfg))
}

fn run_in_pool(command: Command, cfg: &RunConfig) -> Result<PathBuf, RunError> {
    let stage = Stage {
        cfg,
        hash: cfg.hash(),
        run_dir: cfg.run_dir(),
    };
    let reads_input = matches!(
        command,
        Command::Ingest | Command::Label | Command::Features | Command::Analyze | Command::All
    );
    if reads_input && !cfg.paths.input_dir.is_dir() {
        return Err(RunError::Config(format!(
            "input directory {} does not exist",
            cfg.paths.input_dir.display()
        )));
    }
    fs::create_dir_all(&stage.run_dir).map_err(io_err(&stage.run_dir))?;
    match command {
        Command::All => {
            for c in Command::STAGES {
                run_stage(c, &stage)?;
            }
        }
        c => run_stage(c, &stage)?,
    }
    Ok(stage.run_dir)
}

fn run_stage(command: Command, st: &Stage) -> Result<(), RunError> {
    log::info!(target: command.name(), "start run_dir={}", st.run_dir.display());
    match command {
        Command::Simulate => simulate(st),
        Command::Ingest => ingest(st),
        Command::Label => label(st),
        Command::Features => features(st),
        Command::Train => train(st),
        Command::Evaluate => evaluate(st),
        Command::Analyze => analyze(st),
        Command::Report => report(st),
        Command::All => unreachable!("expanded by the caller"),
    }?;
    log::info!(target: command.name(), "done");
    Ok(())
}

fn simulate(st: &Stage) -> Result<(), RunError> {
    let cfg = st.cfg;
    let generator = if cfg.calibrate.enabled {
        let targets = CalibrationTargets {
            cdf: cfg.calibrate.cdf,
            top10_coverage: cfg.calibrate.top10_coverage,
        };
        let g = synth::calibrate(&cfg.synth, &targets).map_err(|e| match e {
            synth::SynthError::InvalidConfig(m) => RunError::Config(m),
            other => RunError::Data(other.to_string()),
        })?;
        log::info!(
            target: "simulate",
            "calibrated intercept={} sigma={} exponent={}",
            g.response.intercept,
            g.response.sigma,
            g.apps.popularity_exponent
        );
        g
    } else {
        cfg.synth.clone()
    };
    let dir = &cfg.paths.input_dir;
    synth::write_cohort(&generator, dir).map_err(|e| match e {
        synth::SynthError::InvalidConfig(m) => RunError::Config(m),
        other => RunError::Data(other.to_string()),
    })?;
    let manifest = SynthManifest {
        config_hash: st.hash.clone(),
        measurement: synth::measure_cohort(&generator),
        generator,
        calibrated: cfg.calibrate.enabled,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Internal(e.to_string()))?;
    let path = dir.join(SYNTH_MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    log::info!(
        target: "simulate",
        "wrote {} participants to {} cdf={:?}",
        cfg.synth.n_participants,
        dir.display(),
        manifest.measurement.cdf
    );
    let inputs = st.input_files()?;
    // the cohort is this stage's output; record it on the output side
    let m = StageManifest {
        stage: Command::Simulate.name().into(),
        config_hash: st.hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        inputs: BTreeMap::new(),
        outputs: digest_map(dir, &inputs)?,
    };
    st.write_json(&format!("{MANIFEST_DIR}/simulate.json"), &m)
}

fn ingest(st: &Stage) -> Result<(), RunError> {
    let dirs = st.participant_dirs()?;
    let participants: Vec<IngestParticipant> = dirs
        .par_iter()
        .map(|d| {
            let log = st.load(d)?;
            let ibi = log.physio.ibi.as_ref().map_or(0, |s| s.entries.len());
            Ok(IngestParticipant {
                participant: log.participant.0.clone(),
                notifications: log.notifications.len(),
                app_events: log.app_events.len(),
                screen_events: log.screen_events.len(),
                activity_events: log.activity_events.len(),
                location_events: log.location_events.len(),
                esm_responses: log.esm_responses.len(),
                contact_relations: log.contact_relations.len(),
                physio_samples: log
                    .physio
                    .channels
                    .iter()
                    .map(|(k, c)| (format!("{k:?}"), c.samples.len()))
                    .collect(),
                ibi_beats: ibi,
                ibi_dropped: log.physio.ibi_dropped,
                warnings: log.warnings,
            })
        })
        .collect::<Result<_, RunError>>()?;
    for p in &participants {
        for w in &p.warnings {
            log::warn!(target: "ingest", "{}: {w}", p.participant);
        }
    }
    log::info!(target: "ingest", "validated {} participants", participants.len());
    st.write_json(
        INGEST_FILE,
        &IngestSummary {
            config_hash: st.hash.clone(),
            participants,
        },
    )?;
    st.manifest(Command::Ingest, &st.cfg.paths.input_dir, &st.input_files()?, &[INGEST_FILE])
}

fn label(st: &Stage) -> Result<(), RunError> {
    let dirs = st.participant_dirs()?;
    let parts: Vec<Vec<LabelRow>> = dirs
        .par_iter()
        .map(|d| {
            let log = st.load(d)?;
            Ok(pair_response_times(&log)
                .iter()
                .map(|l| LabelRow::from_label(&log.participant.0, l))
                .collect())
        })
        .collect::<Result<_, RunError>>()?;
    let rows: Vec<LabelRow> = parts.into_iter().flatten().collect();
    let mut out = st.csv_prefix();
    write_labels_csv(&mut out, &rows).map_err(|e| RunError::Internal(e.to_string()))?;
    st.write(LABELS_FILE, &out)?;
    log::info!(
        target: "label",
        "{} notifications, {} censored",
        rows.len(),
        rows.iter().filter(|r| r.censored).count()
    );
    st.manifest(Command::Label, &st.cfg.paths.input_dir, &st.input_files()?, &[LABELS_FILE])
}

fn features(st: &Stage) -> Result<(), RunError> {
    let categories = st.cfg.categories()?;
    let dirs = st.participant_dirs()?;
    // one participant log in memory per worker
    let parts: Vec<FeatureTable> = dirs
        .par_iter()
        .map(|d| {
            let log = st.load(d)?;
            let t = build_table(std::slice::from_ref(&log), &st.cfg.extract, &categories)?;
            log::debug!(target: "features", "{}: {} instances", log.participant, t.rows.len());
            Ok(t)
        })
        .collect::<Result<_, RunError>>()?;
    let mut table = FeatureTable::new(feature_manifest(st.cfg.extract.physio.include_acc));
    for p in parts {
        table.rows.extend(p.rows);
    }
    let mut out = st.csv_prefix();
    table.write_csv(&mut out).map_err(|e| RunError::Internal(e.to_string()))?;
    st.write(FEATURES_FILE, &out)?;
    let mut man = st.csv_prefix();
    write_manifest_csv(&mut man, &table.manifest).map_err(|e| RunError::Internal(e.to_string()))?;
    st.write(FEATURE_MANIFEST_FILE, &man)?;
    log::info!(
        target: "features",
        "{} instances x {} features",
        table.rows.len(),
        table.manifest.len()
    );
    st.manifest(
        Command::Features,
        &st.cfg.paths.input_dir,
        &st.input_files()?,
        &[FEATURES_FILE, FEATURE_MANIFEST_FILE],
    )
}

fn train(st: &Stage) -> Result<(), RunError> {
    let table = st.features_table()?;
    let families = [Family::Mobile];
    let columns = table.columns_of(&families);
    let names: Vec<String> = columns.iter().map(|&j| table.manifest[j].name.clone()).collect();
    let kinds = &st.cfg.models.regressors;
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for p in table.participants() {
        let rows: Vec<_> = table.rows_of(&p).collect();
        if rows.len() < st.cfg.cv.min_instances.max(st.cfg.cv.k_inner) {
            skipped.push(SkippedParticipant {
                participant: p.clone(),
                n_instances: rows.len(),
                reason: format!("fewer than {} instances", st.cfg.cv.min_instances),
            });
            continue;
        }
        let (x, y) = participant_matrix(&rows, &columns);
        for &k in kinds {
            jobs.push((p.clone(), k, x.clone(), y.clone()));
        }
    }
    let fitted: Vec<(TrainedEntry, String)> = jobs
        .par_iter()
        .map(|(p, k, x, y)| {
            let (model, choice) = train_final(x, y, &names, *k, &st.cfg.cv)?;
            let file = format!("{MODELS_DIR}/{p}/{}.json", k.name());
            let entry = TrainedEntry {
                participant: p.clone(),
                regressor: *k,
                n_instances: y.len(),
                model_file: file,
                choice,
            };
            let artifact = ModelArtifact {
                config_hash: st.hash.clone(),
                participant: p.clone(),
                model,
            };
            let json = serde_json::to_string_pretty(&artifact).map_err(|e| RunError::Internal(e.to_string()))?;
            Ok((entry, json))
        })
        .collect::<Result<_, RunError>>()?;
    let mut outputs = vec![TRAIN_FILE.to_string()];
    let mut models = Vec::new();
    for (entry, json) in fitted {
        st.write(&entry.model_file, format!("{json}\n").as_bytes())?;
        outputs.push(entry.model_file.clone());
        models.push(entry);
    }
    log::info!(target: "train", "{} models, {} participants skipped", models.len(), skipped.len());
    st.write_json(
        TRAIN_FILE,
        &TrainSummary {
            config_hash: st.hash.clone(),
            families: families.to_vec(),
            models,
            skipped,
        },
    )?;
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    st.manifest(Command::Train, &st.run_dir, &[PathBuf::from(FEATURES_FILE)], &outs)
}

fn evaluate(st: &Stage) -> Result<(), RunError> {
    let table = st.features_table()?;
    let kinds = &st.cfg.models.regressors;
    let cv = &st.cfg.cv;
    let cohort = evaluate_cohort(&table, &[Family::Mobile], &|_| true, kinds, cv)?;
    for row in &cohort.aggregate {
        log::info!(
            target: "evaluate",
            "{} mae={:.4} rmse={:.4} participants={}",
            row.regressor.name(),
            row.mae,
            row.rmse,
            row.n_participants
        );
    }

    let all_cols = table.columns_of(&[Family::Mobile, Family::Esm, Family::E4]);
    let names: Vec<String> = all_cols.iter().map(|&j| table.manifest[j].name.clone()).collect();
    let scored: Vec<Result<ParticipantImportance, SkippedParticipant>> = table
        .participants()
        .par_iter()
        .map(|p| {
            let rows: Vec<_> = table.rows_of(p).collect();
            let (x, y) = participant_matrix(&rows, &all_cols);
            feature_importance(&x, &y, &names)
                .map(|scores| ParticipantImportance {
                    participant: p.clone(),
                    n_instances: rows.len(),
                    scores,
                })
                .map_err(|e| SkippedParticipant {
                    participant: p.clone(),
                    n_instances: rows.len(),
                    reason: e.to_string(),
                })
        })
        .collect();
    let (mut importance, mut importance_skipped) = (Vec::new(), Vec::new());
    for s in scored {
        match s {
            Ok(i) => importance.push(i),
            Err(e) => importance_skipped.push(e),
        }
    }

    let mut ablations = Vec::new();
    for &family in &st.cfg.report.ablations {
        if family == Family::Mobile {
            return Err(RunError::Config("the mobile family cannot be ablated".into()));
        }
        match ablation(&table, family, kinds, cv) {
            Ok(a) => ablations.push(AblationOutcome::Done(a)),
            Err(EvalError::EmptyIntersection(g)) => {
                log::warn!(target: "evaluate", "ablation {g}: no participant has enough covered rows");
                ablations.push(AblationOutcome::EmptyIntersection {
                    family,
                    reason: format!("no participant has at least {} rows with {g} features", cv.min_instances),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    st.write_json(
        EVALUATION_FILE,
        &Evaluation {
            config_hash: st.hash.clone(),
            cohort,
            importance,
            importance_skipped,
            ablations,
        },
    )?;
    st.manifest(Command::Evaluate, &st.run_dir, &[PathBuf::from(FEATURES_FILE)], &[EVALUATION_FILE])
}

fn mood_correlations(table: &FeatureTable, rows: &[&crate::features::LabeledInstance]) -> Vec<CorrelationResult> {
    let Some(mood) = table.mask_index("mood") else {
        return Vec::new();
    };
    let covered: Vec<_> = rows.iter().filter(|r| !r.masks[mood]).collect();
    let mut out = Vec::new();
    for name in ["valence", "arousal"] {
        let Some(j) = table.column_index(name) else { continue };
        let x: Vec<f64> = covered.iter().map(|r| r.values[j]).collect();
        let y: Vec<f64> = covered.iter().map(|r| r.target).collect();
        if let Ok((rho, p)) = spearman(&x, &y) {
            out.push(CorrelationResult {
                x: name.to_string(),
                y: "target".to_string(),
                rho,
                p_value: p,
                n: x.len(),
            });
        }
    }
    out
}

fn analyze(st: &Stage) -> Result<(), RunError> {
    let cfg = st.cfg;
    let categories = cfg.categories()?;
    let labels = read_labels_csv(st.read_hashed(LABELS_FILE)?.as_bytes()).map_err(data)?;
    let table = st.features_table()?;

    let mut by: BTreeMap<&str, Vec<&LabelRow>> = BTreeMap::new();
    for l in &labels {
        by.entry(l.participant.as_str()).or_default().push(l);
    }
    let k = cfg.extract.top_k;
    let mut coverage = Vec::new();
    let mut top_labels: Vec<&LabelRow> = Vec::new();
    for (p, rows) in &by {
        let mut counts = BTreeMap::new();
        for r in rows {
            *counts.entry(r.app.clone()).or_insert(0usize) += 1;
        }
        let catalog = AppCatalog::from_counts(counts, categories.clone());
        coverage.push(CoverageRow {
            participant: p.to_string(),
            k,
            coverage: catalog.coverage(k),
        });
        let top: std::collections::BTreeSet<String> = top_k_apps(&catalog, k).into_iter().collect();
        top_labels.extend(rows.iter().filter(|r| top.contains(&r.app)));
    }
    let thresholds = &cfg.analysis.cdf_thresholds;
    let with_censored: Vec<Option<f64>> = top_labels
        .iter()
        .map(|r| r.response_s.filter(|_| !r.censored))
        .collect();
    let uncensored: Vec<(String, f64)> = top_labels
        .iter()
        .filter(|r| !r.censored)
        .filter_map(|r| r.response_s.map(|s| (r.participant.clone(), s)))
        .collect();
    let by_app: Vec<(String, f64)> = labels
        .iter()
        .filter(|r| !r.censored)
        .filter_map(|r| r.response_s.map(|s| (r.app.clone(), s)))
        .collect();

    let dirs = st.participant_dirs()?;
    let esm: Vec<Vec<crate::event::EsmResponse>> = dirs
        .par_iter()
        .map(|d| Ok(st.load(d)?.esm_responses))
        .collect::<Result<_, RunError>>()?;
    let esm: Vec<_> = esm.into_iter().flatten().collect();
    let mut mood = Vec::new();
    for g in MoodGrouping::ALL {
        mood.extend(mood_summary(&esm, g));
    }

    let mut notes = Vec::new();
    let mut normality = BTreeMap::new();
    let rows: Vec<_> = table.rows.iter().collect();
    let mood_idx = table.mask_index("mood");
    let covered: Vec<_> = rows
        .iter()
        .filter(|r| mood_idx.is_some_and(|m| !r.masks[m]))
        .collect();
    let mut series: Vec<(&str, Vec<f64>)> = vec![("target", rows.iter().map(|r| r.target).collect())];
    for name in ["valence", "arousal"] {
        if let Some(j) = table.column_index(name) {
            series.push((name, covered.iter().map(|r| r.values[j]).collect()));
        }
    }
    for (name, x) in series {
        match dagostino_k2(&x) {
            Ok(r) => {
                normality.insert(name.to_string(), r);
            }
            Err(e) => notes.push(format!("normality of {name}: {e}")),
        }
    }
    let correlations = mood_correlations(&table, &rows);
    let per_participant_correlations = table
        .participants()
        .into_iter()
        .map(|p| {
            let rows: Vec<_> = table.rows_of(&p).collect();
            let c = mood_correlations(&table, &rows);
            (p, c)
        })
        .collect();

    let analysis = Analysis {
        config_hash: st.hash.clone(),
        n_notifications: labels.len(),
        n_uncensored: labels.iter().filter(|r| !r.censored).count(),
        top_k: k,
        coverage,
        top_k_cdf_with_censored: cdf_fractions_censored(&with_censored, thresholds),
        cdf: cdf_table(&uncensored, thresholds),
        categories: category_summary(&by_app, &categories),
        mood,
        normality,
        correlations,
        per_participant_correlations,
        notes,
    };
    st.write_json(ANALYSIS_JSON, &analysis)?;
    st.write(ANALYSIS_CSV, &analysis_csv(st, &analysis)?)?;

    let points = cdf_points(&uncensored, &log_thresholds(cfg.analysis.cdf_points));
    let mut out = st.csv_prefix();
    write_cdf_points_csv(&mut out, &points).map_err(|e| RunError::Internal(e.to_string()))?;
    st.write(CDF_POINTS_FILE, &out)?;

    let mut inputs: Vec<PathBuf> = vec![LABELS_FILE.into(), FEATURES_FILE.into()];
    inputs.sort();
    st.manifest(
        Command::Analyze,
        &st.run_dir,
        &inputs,
        &[ANALYSIS_JSON, ANALYSIS_CSV, CDF_POINTS_FILE],
    )
}

/// Long-format table: `section, group, statistic, value`.
fn analysis_csv(st: &Stage, a: &Analysis) -> Result<Vec<u8>, RunError> {
    let mut out = st.csv_prefix();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w_header(&mut w).map_err(|e| RunError::Internal(e.to_string()))?;
        let mut row = |section: &str, group: &str, stat: &str, value: f64| {
            w.write_record([section, group, stat, &format_float(value)])
        };
        let ser = |e: csv::Error| RunError::Internal(e.to_string());
        for (t, f) in a.cdf.thresholds.iter().zip(&a.top_k_cdf_with_censored) {
            row("cdf_with_censored", "pooled", &format!("le_{t}s"), *f).map_err(ser)?;
        }
        for (t, f) in a.cdf.thresholds.iter().zip(&a.cdf.pooled) {
            row("cdf", "pooled", &format!("le_{t}s"), *f).map_err(ser)?;
        }
        for (p, fs) in &a.cdf.per_participant {
            for (t, f) in a.cdf.thresholds.iter().zip(fs) {
                row("cdf", p, &format!("le_{t}s"), *f).map_err(ser)?;
            }
        }
        for c in &a.coverage {
            row("coverage", &c.participant, &format!("top_{}", c.k), c.coverage).map_err(ser)?;
        }
        for c in &a.categories {
            row("category", &c.category, "n", c.n as f64).map_err(ser)?;
            row("category", &c.category, "mean_seconds", c.mean_seconds).map_err(ser)?;
            row("category", &c.category, "ci95", c.ci95).map_err(ser)?;
        }
        for m in &a.mood {
            let g = format!("{}:{}", m.grouping.name(), m.group);
            row("mood", &g, "n", m.n as f64).map_err(ser)?;
            row("mood", &g, "valence_mean", m.valence_mean).map_err(ser)?;
            row("mood", &g, "arousal_mean", m.arousal_mean).map_err(ser)?;
        }
        for (name, r) in &a.normality {
            row("normality", name, "k2", r.statistic).map_err(ser)?;
            row("normality", name, "p", r.p_value).map_err(ser)?;
        }
        for c in &a.correlations {
            let g = format!("{}~{}", c.x, c.y);
            row("spearman", &g, "rho", c.rho).map_err(ser)?;
            row("spearman", &g, "p", c.p_value).map_err(ser)?;
            row("spearman", &g, "n", c.n as f64).map_err(ser)?;
        }
        w.flush().map_err(|e| RunError::Internal(e.to_string()))?;
    }
    Ok(out)
}

fn w_header<W: Write>(w: &mut csv::Writer<W>) -> Result<(), csv::Error> {
    w.write_record(["section", "group", "statistic", "value"])
}

fn report(st: &Stage) -> Result<(), RunError> {
    let evaluation: Evaluation = st.read_json(EVALUATION_FILE)?;
    let analysis: Analysis = st.read_json(ANALYSIS_JSON)?;
    // every stage that ran in this directory must agree on the config
    let mdir = st.path(MANIFEST_DIR);
    if mdir.is_dir() {
        for f in list_files(&mdir)? {
            let text = fs::read_to_string(mdir.join(&f)).map_err(io_err(&mdir))?;
            let m: StageManifest = serde_json::from_str(&text).map_err(data)?;
            if m.config_hash != st.hash {
                return Err(RunError::Data(format!(
                    "manifest {} has config {}, not {}",
                    f.display(),
                    m.config_hash,
                    st.hash
                )));
            }
        }
    }
    let kinds = st.cfg.models.regressors.clone();
    let agg = &evaluation.cohort.aggregate;

    let mut csv_out = st.csv_prefix();
    {
        let mut w = csv::Writer::from_writer(&mut csv_out);
        let ser = |e: csv::Error| RunError::Internal(e.to_string());
        let mut header = vec!["metric".to_string()];
        header.extend(agg.iter().map(|r| r.regressor.name().to_string()));
        w.write_record(&header).map_err(ser)?;
        let mut mae = vec!["mae".to_string()];
        mae.extend(agg.iter().map(|r| format_float(r.mae)));
        w.write_record(&mae).map_err(ser)?;
        let mut rmse = vec!["rmse".to_string()];
        rmse.extend(agg.iter().map(|r| format_float(r.rmse)));
        w.write_record(&rmse).map_err(ser)?;
        w.flush().map_err(|e| RunError::Internal(e.to_string()))?;
    }
    st.write(REPORT_CSV, &csv_out)?;

    let mut imp = st.csv_prefix();
    {
        let mut w = csv::Writer::from_writer(&mut imp);
        let ser = |e: csv::Error| RunError::Internal(e.to_string());
        w.write_record(["participant", "feature", "f", "p"]).map_err(ser)?;
        for pi in &evaluation.importance {
            for s in &pi.scores {
                w.write_record([&pi.participant, &s.feature, &format_float(s.f), &format_float(s.p)])
                    .map_err(ser)?;
            }
        }
        w.flush().map_err(|e| RunError::Internal(e.to_string()))?;
    }
    st.write(IMPORTANCE_CSV, &imp)?;

    let mut abl = st.csv_prefix();
    {
        let mut w = csv::Writer::from_writer(&mut abl);
        let ser = |e: csv::Error| RunError::Internal(e.to_string());
        w.write_record(["family", "status", "regressor", "n_rows", "mae_with", "rmse_with", "mae_without", "rmse_without"])
            .map_err(ser)?;
        for a in &evaluation.ablations {
            match a {
                AblationOutcome::Done(r) => {
                    for (with, without) in r.with.iter().zip(&r.without) {
                        w.write_record([
                            r.family.name(),
                            "done",
                            with.regressor.name(),
                            &r.n_rows.to_string(),
                            &format_float(with.mae),
                            &format_float(with.rmse),
                            &format_float(without.mae),
                            &format_float(without.rmse),
                        ])
                        .map_err(ser)?;
                    }
                }
                AblationOutcome::EmptyIntersection { family, .. } => {
                    w.write_record([family.name(), "empty_intersection", "", "0", "", "", "", ""])
                        .map_err(ser)?;
                }
            }
        }
        w.flush().map_err(|e| RunError::Internal(e.to_string()))?;
    }
    st.write(ABLATION_CSV, &abl)?;

    let report = Report {
        config_hash: st.hash.clone(),
        regressors: kinds,
        evaluation,
        analysis,
    };
    st.write_json(REPORT_JSON, &report)?;
    st.manifest(
        Command::Report,
        &st.run_dir,
        &[PathBuf::from(EVALUATION_FILE), PathBuf::from(ANALYSIS_JSON)],
        &[REPORT_JSON, REPORT_CSV, IMPORTANCE_CSV, ABLATION_CSV],
    )
}
