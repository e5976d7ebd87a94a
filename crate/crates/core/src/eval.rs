//! Participant-wise nested cross-validation, metrics, feature importance and
//! feature-group ablations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{Family, FeatureTable, LabeledInstance};
use crate::models::{
    f_regression_scores, grid, Matrix, ModelError, RegressorKind, RegressorParams, RegressorSpec,
    TrainedModel, DEFAULT_K_FEATURES,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("participant {participant}: {n} instances, need {min}")]
    TooFewInstances {
        participant: String,
        n: usize,
        min: usize,
    },
    #[error("no participant has rows with group '{0}' unmasked")]
    EmptyIntersection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, EvalError> {
    check_lengths(y, y_hat)?;
    Ok((y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<(), EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k_outer: usize,
    pub k_inner: usize,
    pub k_features: usize,
    pub min_instances: usize,
    pub seed: u64,
    /// Keep the fit-row sets of every model (for leakage audits).
    #[serde(skip)]
    pub record_provenance: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k_outer: 5,
            k_inner: 5,
            k_features: DEFAULT_K_FEATURES,
            min_instances: 25,
            seed: 0,
            record_provenance: false,
        }
    }
}

/// Seeded shuffle of `0..n`, split into `k` contiguous parts (the first
/// `n % k` parts one longer).
fn shuffled_split(items: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order = items.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = order.len() / k;
    let extra = order.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut part = order[start..start + len].to_vec();
        part.sort_unstable();
        out.push(part);
        start += len;
    }
    out
}

fn complement(all: &[usize], part: &[usize]) -> Vec<usize> {
    all.iter().copied().filter(|i| part.binary_search(i).is_err()).collect()
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFold {
    pub split: Split,
    pub inner: Vec<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub seed: u64,
    pub outer: Vec<OuterFold>,
}

impl FoldPlan {
    pub fn new(n: usize, k_outer: usize, k_inner: usize, seed: u64) -> Self {
        let all: Vec<usize> = (0..n).collect();
        let outer = shuffled_split(&all, k_outer, seed)
            .into_iter()
            .enumerate()
            .map(|(f, test)| {
                let train = complement(&all, &test);
                let inner = shuffled_split(&train, k_inner, derive_seed(seed, f as u64 + 1))
                    .into_iter()
                    .map(|itest| Split {
                        train: complement(&train, &itest),
                        test: itest,
                    })
                    .collect();
                OuterFold {
                    split: Split { train, test },
                    inner,
                }
            })
            .collect();
        Self { n, seed, outer }
    }
}

/// One fitted model's rows and the split it was fitted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub regressor: RegressorKind,
    pub outer_fold: usize,
    /// `None` for the refit on the whole outer-train split.
    pub inner_fold: Option<usize>,
    pub fit_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub row: usize,
    pub fold: usize,
    pub y: f64,
    pub y_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldChoice {
    pub params: RegressorParams,
    pub inner_mae: f64,
    pub selected_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorResult {
    pub regressor: RegressorKind,
    /// Mean of the outer-fold MAEs.
    pub mae: f64,
    /// Mean of the outer-fold RMSEs.
    pub rmse: f64,
    pub fold_mae: Vec<f64>,
    pub fold_rmse: Vec<f64>,
    pub choices: Vec<FoldChoice>,
    pub predictions: Vec<RowPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantResult {
    pub participant: String,
    pub n_instances: usize,
    pub fold_plan: FoldPlan,
    pub results: Vec<RegressorResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub provenance: Vec<FitRecord>,
}

/// Candidate parameter sets: the grid, or the defaults for kinds without one.
fn candidates(kind: RegressorKind) -> Vec<RegressorParams> {
    let g = grid(kind);
    if g.is_empty() {
        vec![RegressorParams::default_for(kind)]
    } else {
        g
    }
}

/// Fits every candidate on `rows`, sharing one ensemble fit among candidates
/// that only differ in tree count.
fn fit_candidates(
    cands: &[RegressorParams],
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    cfg: &CvConfig,
) -> Result<Vec<TrainedModel>, ModelError> {
    let xs = x.select_rows(rows);
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let mut fitted: Vec<(RegressorParams, TrainedModel)> = Vec::new();
    let mut out = Vec::with_capacity(cands.len());
    for p in cands {
        let key = p.with_n_estimators(0);
        if let Some((_, big)) = fitted.iter().find(|(k, _)| *k == key) {
            out.push(big.truncated(p.n_estimators().unwrap_or(0)).ok_or(ModelError::NotFitted)?);
            continue;
        }
        let max_n = cands
            .iter()
            .filter(|c| c.with_n_estimators(0) == key)
            .filter_map(|c| c.n_estimators())
            .max();
        let params = max_n.map_or(*p, |n| p.with_n_estimators(n));
        let spec = RegressorSpec {
            params,
            seed: cfg.seed,
            k_features: cfg.k_features,
        };
        let model = TrainedModel::fit(&spec, &xs, &ys, rows.to_vec())?;
        let this = match p.n_estimators() {
            Some(n) if Some(n) != max_n => model.truncated(n).ok_or(ModelError::NotFitted)?,
            _ => model.clone(),
        };
        fitted.push((key, model));
        out.push(this);
    }
    Ok(out)
}

fn predict_rows(model: &TrainedModel, x: &Matrix, rows: &[usize]) -> Result<Vec<f64>, ModelError> {
    model.predict(&x.select_rows(rows))
}

struct FoldOutcome {
    mae: f64,
    rmse: f64,
    choice: FoldChoice,
    predictions: Vec<RowPrediction>,
    provenance: Vec<FitRecord>,
}

/// Grid search over `inner` splits by mean validation MAE, then a refit on
/// `train`. Returns the model, the winning candidate's inner MAE and the
/// fit records (outer fold id `f`).
fn select_and_fit(
    kind: RegressorKind,
    f: usize,
    train: &[usize],
    inner: &[Split],
    x: &Matrix,
    y: &[f64],
    cfg: &CvConfig,
) -> Result<(TrainedModel, RegressorParams, f64, Vec<FitRecord>), EvalError> {
    let cands = candidates(kind);
    let mut provenance = Vec::new();
    let mut inner_mae = vec![0.0; cands.len()];
    if cands.len() > 1 {
        for (g, split) in inner.iter().enumerate() {
            let models = fit_candidates(&cands, x, y, &split.train, cfg)?;
            let truth: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
            for (c, m) in models.iter().enumerate() {
                inner_mae[c] += mae(&truth, &predict_rows(m, x, &split.test)?)? / inner.len() as f64;
                if cfg.record_provenance {
                    provenance.push(FitRecord {
                        regressor: kind,
                        outer_fold: f,
                        inner_fold: Some(g),
                        fit_rows: m.meta.fit_rows.clone(),
                    });
                }
            }
        }
    }
    let best = (0..cands.len())
        .min_by(|&a, &b| inner_mae[a].total_cmp(&inner_mae[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    let model = fit_candidates(&cands[best..=best], x, y, train, cfg)?
        .pop()
        .ok_or(ModelError::NotFitted)?;
    if cfg.record_provenance {
        provenance.push(FitRecord {
            regressor: kind,
            outer_fold: f,
            inner_fold: None,
            fit_rows: model.meta.fit_rows.clone(),
        });
    }
    Ok((model, cands[best], inner_mae[best], provenance))
}

fn run_outer_fold(
    kind: RegressorKind,
    f: usize,
    fold: &OuterFold,
    x: &Matrix,
    y: &[f64],
    names: &[String],
    cfg: &CvConfig,
) -> Result<FoldOutcome, EvalError> {
    let (model, params, inner_mae, provenance) =
        select_and_fit(kind, f, &fold.split.train, &fold.inner, x, y, cfg)?;
    let test = &fold.split.test;
    let y_hat = predict_rows(&model, x, test)?;
    let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    Ok(FoldOutcome {
        mae: mae(&truth, &y_hat)?,
        rmse: rmse(&truth, &y_hat)?,
        choice: FoldChoice {
            params,
            inner_mae,
            selected_features: model
                .selector
                .selected
                .iter()
                .map(|&j| names[j].clone())
                .collect(),
        },
        predictions: test
            .iter()
            .zip(truth.iter().zip(&y_hat))
            .map(|(&row, (&y, &y_hat))| RowPrediction { row, fold: f, y, y_hat })
            .collect(),
        provenance,
    })
}

/// Nested cross-validation of every regressor kind on one participant.
pub fn nested_cv(
    participant: &str,
    x: &Matrix,
    y: &[f64],
    names: &[String],
    kinds: &[RegressorKind],
    cfg: &CvConfig,
) -> Result<ParticipantResult, EvalError> {
    if x.rows() != y.len() {
        return Err(EvalError::LengthMismatch(x.rows(), y.len()));
    }
    if y.len() < cfg.min_instances.max(cfg.k_outer) {
        return Err(EvalError::TooFewInstances {
            participant: participant.to_string(),
            n: y.len(),
            min: cfg.min_instances,
        });
    }
    let plan = FoldPlan::new(y.len(), cfg.k_outer, cfg.k_inner, cfg.seed);
    let jobs: Vec<(RegressorKind, usize)> = kinds
        .iter()
        .flat_map(|&k| (0..plan.outer.len()).map(move |f| (k, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(k, f)| run_outer_fold(k, f, &plan.outer[f], x, y, names, cfg))
        .collect::<Result<_, _>>()?;
    let mut results = Vec::new();
    let mut provenance = Vec::new();
    let k_outer = plan.outer.len();
    for (kind, chunk) in kinds.iter().zip(outcomes.chunks(k_outer)) {
        let fold_mae: Vec<f64> = chunk.iter().map(|o| o.mae).collect();
        let fold_rmse: Vec<f64> = chunk.iter().map(|o| o.rmse).collect();
        let mut predictions: Vec<RowPrediction> =
            chunk.iter().flat_map(|o| o.predictions.iter().cloned()).collect();
        predictions.sort_by_key(|p| p.row);
        provenance.extend(chunk.iter().flat_map(|o| o.provenance.iter().cloned()));
        results.push(RegressorResult {
            regressor: *kind,
            mae: fold_mae.iter().sum::<f64>() / k_outer as f64,
            rmse: fold_rmse.iter().sum::<f64>() / k_outer as f64,
            fold_mae,
            fold_rmse,
            choices: chunk.iter().map(|o| o.choice.clone()).collect(),
            predictions,
        });
    }
    Ok(ParticipantResult {
        participant: participant.to_string(),
        n_instances: y.len(),
        fold_plan: plan,
        results,
        provenance,
    })
}

/// Final per-participant model: hyperparameters chosen by `k_inner`-fold
/// CV over all rows, then a fit on all rows.
pub fn train_final(
    x: &Matrix,
    y: &[f64],
    names: &[String],
    kind: RegressorKind,
    cfg: &CvConfig,
) -> Result<(TrainedModel, FoldChoice), EvalError> {
    if x.rows() != y.len() {
        return Err(EvalError::LengthMismatch(x.rows(), y.len()));
    }
    if y.len() < cfg.k_inner.max(1) {
        return Err(EvalError::Empty);
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let inner: Vec<Split> = shuffled_split(&all, cfg.k_inner, derive_seed(cfg.seed, u64::MAX))
        .into_iter()
        .map(|test| Split {
            train: complement(&all, &test),
            test,
        })
        .collect();
    let (model, params, inner_mae, _) = select_and_fit(kind, 0, &all, &inner, x, y, cfg)?;
    let selected_features = model.selector.selected.iter().map(|&j| names[j].clone()).collect();
    Ok((
        model,
        FoldChoice {
            params,
            inner_mae,
            selected_features,
        },
    ))
}

/// Recomputes a regressor's fold-averaged MAE and RMSE from its predictions.
pub fn metrics_from_predictions(predictions: &[RowPrediction]) -> Result<(f64, f64), EvalError> {
    let mut folds: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in predictions {
        let e = folds.entry(p.fold).or_default();
        e.0.push(p.y);
        e.1.push(p.y_hat);
    }
    if folds.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut m, mut r) = (0.0, 0.0);
    for (y, y_hat) in folds.values() {
        m += mae(y, y_hat)?;
        r += rmse(y, y_hat)?;
    }
    Ok((m / folds.len() as f64, r / folds.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub feature: String,
    pub f: f64,
    pub p: f64,
}

/// F scores of every column against the target.
pub fn feature_importance(x: &Matrix, y: &[f64], names: &[String]) -> Result<Vec<ImportanceScore>, EvalError> {
    let scores = f_regression_scores(x, y)?;
    Ok(names
        .iter()
        .zip(scores)
        .map(|(n, s)| ImportanceScore {
            feature: n.clone(),
            f: s.f,
            p: s.p,
        })
        .collect())
}

/// Rows of one participant as a feature matrix over `columns`.
pub fn participant_matrix(rows: &[&LabeledInstance], columns: &[usize]) -> (Matrix, Vec<f64>) {
    let data: Vec<f64> = rows
        .iter()
        .flat_map(|r| columns.iter().map(move |&j| r.values[j]))
        .collect();
    let x = Matrix::new(rows.len(), columns.len(), data).expect("consistent shape");
    (x, rows.iter().map(|r| r.target).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedParticipant {
    pub participant: String,
    pub n_instances: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub regressor: RegressorKind,
    pub mae: f64,
    pub rmse: f64,
    pub n_participants: usize,
}

/// Unweighted means over participants, in `kinds` order.
pub fn aggregate(results: &[ParticipantResult], kinds: &[RegressorKind]) -> Vec<AggregateRow> {
    kinds
        .iter()
        .map(|&k| {
            let rows: Vec<&RegressorResult> = results
                .iter()
                .filter_map(|p| p.results.iter().find(|r| r.regressor == k))
                .collect();
            let n = rows.len().max(1) as f64;
            AggregateRow {
                regressor: k,
                mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
                rmse: rows.iter().map(|r| r.rmse).sum::<f64>() / n,
                n_participants: rows.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub families: Vec<Family>,
    pub participants: Vec<ParticipantResult>,
    pub skipped: Vec<SkippedParticipant>,
    pub aggregate: Vec<AggregateRow>,
}

/// Nested CV for every participant on the columns of `families`, using only
/// rows accepted by `row_filter`.
pub fn evaluate_cohort(
    table: &FeatureTable,
    families: &[Family],
    row_filter: &(dyn Fn(&LabeledInstance) -> bool + Sync),
    kinds: &[RegressorKind],
    cfg: &CvConfig,
) -> Result<CohortResult, EvalError> {
    let columns = table.columns_of(families);
    let names: Vec<String> = columns.iter().map(|&j| table.manifest[j].name.clone()).collect();
    let participants = table.participants();
    let outcomes: Vec<Result<ParticipantResult, EvalError>> = participants
        .par_iter()
        .map(|p| {
            let rows: Vec<&LabeledInstance> = table.rows_of(p).filter(|r| row_filter(r)).collect();
            let (x, y) = participant_matrix(&rows, &columns);
            nested_cv(p, &x, &y, &names, kinds, cfg)
        })
        .collect();
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (p, outcome) in participants.iter().zip(outcomes) {
        match outcome {
            Ok(r) => done.push(r),
            Err(EvalError::TooFewInstances { n, min, .. }) => skipped.push(SkippedParticipant {
                participant: p.clone(),
                n_instances: n,
                reason: format!("fewer than {min} instances"),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(CohortResult {
        families: families.to_vec(),
        aggregate: aggregate(&done, kinds),
        participants: done,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationParticipant {
    pub participant: String,
    pub n_instances: usize,
    pub regressor: RegressorKind,
    pub mae_with: f64,
    pub rmse_with: f64,
    pub mae_without: f64,
    pub rmse_without: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub family: Family,
    pub n_rows: usize,
    pub with: Vec<AggregateRow>,
    pub without: Vec<AggregateRow>,
    pub per_participant: Vec<AblationParticipant>,
    pub skipped: Vec<SkippedParticipant>,
}

/// Mobile features with vs. without `family`, on the rows where every mask
/// group of `family` is unmasked.
pub fn ablation(
    table: &FeatureTable,
    family: Family,
    kinds: &[RegressorKind],
    cfg: &CvConfig,
) -> Result<AblationResult, EvalError> {
    let groups = table.mask_groups_of(family);
    let covered = move |r: &LabeledInstance| groups.iter().all(|&g| !r.masks[g]);
    let n_rows = table.rows.iter().filter(|r| covered(r)).count();
    if n_rows == 0 {
        return Err(EvalError::EmptyIntersection(family.name().to_string()));
    }
    let with = evaluate_cohort(table, &[Family::Mobile, family], &covered, kinds, cfg)?;
    let without = evaluate_cohort(table, &[Family::Mobile], &covered, kinds, cfg)?;
    if with.participants.is_empty() {
        return Err(EvalError::EmptyIntersection(family.name().to_string()));
    }
    let mut per_participant = Vec::new();
    for (a, b) in with.participants.iter().zip(&without.participants) {
        for (ra, rb) in a.results.iter().zip(&b.results) {
            per_participant.push(AblationParticipant {
                participant: a.participant.clone(),
                n_instances: a.n_instances,
                regressor: ra.regressor,
                mae_with: ra.mae,
                rmse_with: ra.rmse,
                mae_without: rb.mae,
                rmse_without: rb.rmse,
            });
        }
    }
    Ok(AblationResult {
        family,
        n_rows,
        with: with.aggregate,
        without: without.aggregate,
        per_participant,
        skipped: with.skipped,
    })
}
