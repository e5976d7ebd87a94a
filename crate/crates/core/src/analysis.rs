//! Descriptive statistics over labels and ESM answers: response-time CDFs,
//! top-k coverage, per-category summaries, mood summaries, normality
//! screening and rank correlations.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::event::{EsmResponse, Interruptibility, SocialRole};
use crate::labeling::{CategoryMap, RESPONSE_CAP_SECONDS};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("input is constant")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const DEFAULT_CDF_THRESHOLDS: [f64; 3] = [300.0, 3_600.0, 86_400.0];

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub x: String,
    pub y: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

pub const SPEARMAN_MIN_N: usize = 3;

/// Spearman rank correlation with a two-sided t-approximation p value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < SPEARMAN_MIN_N {
        return Err(AnalysisError::TooFewSamples {
            n,
            min: SPEARMAN_MIN_N,
        });
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y)).ok_or(AnalysisError::ConstantInput)?;
    Ok((rho, rank_t_p_value(rho, n)))
}

fn rank_t_p_value(rho: f64, n: usize) -> f64 {
    if n <= 2 {
        return 1.0;
    }
    let dof = (n - 2) as f64;
    if 1.0 - rho.abs() <= f64::EPSILON {
        return 0.0;
    }
    let t = rho * (dof / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Two-sided permutation p value of Spearman's rho: the share of seeded
/// permutations of `y` with |rho| at least the observed one (add-one rule).
pub fn spearman_permutation_p(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<f64, AnalysisError> {
    let (rho, _) = spearman(x, y)?;
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..permutations {
        ry.shuffle(&mut rng);
        let r = pearson(&rx, &ry).unwrap_or(0.0);
        if r.abs() >= rho.abs() - 1e-12 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (permutations + 1) as f64)
}

pub const DAGOSTINO_MIN_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub z_skew: f64,
    pub z_kurtosis: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// D'Agostino-Pearson omnibus test: skewness and kurtosis mapped to
/// approximate standard normals and combined into a chi-square(2) statistic.
pub fn dagostino_k2(x: &[f64]) -> Result<NormalityResult, AnalysisError> {
    let n_us = x.len();
    if n_us < DAGOSTINO_MIN_N {
        return Err(AnalysisError::TooFewSamples {
            n: n_us,
            min: DAGOSTINO_MIN_N,
        });
    }
    let n = n_us as f64;
    let mean = x.iter().sum::<f64>() / n;
    let moment = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let m2 = moment(2);
    if m2 == 0.0 {
        return Err(AnalysisError::ConstantInput);
    }
    let g1 = moment(3) / m2.powf(1.5);
    let b2 = moment(4) / (m2 * m2);

    let mut y = g1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    let z_skew = delta * ((y / alpha) + ((y / alpha).powi(2) + 1.0).sqrt()).ln();

    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let xk = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / sqrt_beta1.powi(2)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + xk * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z_kurtosis = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let statistic = z_skew * z_skew + z_kurtosis * z_kurtosis;
    Ok(NormalityResult {
        z_skew,
        z_kurtosis,
        statistic,
        // chi-square(2) upper tail
        p_value: (-statistic / 2.0).exp(),
        n: n_us,
    })
}

/// Fraction of values at or below each threshold.
pub fn cdf_fractions(seconds: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if seconds.is_empty() {
        return Vec::new();
    }
    thresholds
        .iter()
        .map(|&t| seconds.iter().filter(|&&s| s <= t).count() as f64 / seconds.len() as f64)
        .collect()
}

/// As [`cdf_fractions`], with never-answered notifications (`None`) counted
/// in the denominator only.
pub fn cdf_fractions_censored(labels: &[Option<f64>], thresholds: &[f64]) -> Vec<f64> {
    if labels.is_empty() {
        return Vec::new();
    }
    thresholds
        .iter()
        .map(|&t| {
            labels.iter().filter(|s| s.is_some_and(|s| s <= t)).count() as f64 / labels.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub thresholds: Vec<f64>,
    pub pooled: Vec<f64>,
    pub per_participant: BTreeMap<String, Vec<f64>>,
    pub n: usize,
}

/// CDF of uncensored response times, pooled and per participant.
pub fn cdf_table(labels: &[(String, f64)], thresholds: &[f64]) -> CdfTable {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (p, s) in labels {
        by.entry(p.clone()).or_default().push(*s);
    }
    let all: Vec<f64> = labels.iter().map(|l| l.1).collect();
    CdfTable {
        thresholds: thresholds.to_vec(),
        pooled: cdf_fractions(&all, thresholds),
        per_participant: by
            .into_iter()
            .map(|(p, v)| (p, cdf_fractions(&v, thresholds)))
            .collect(),
        n: labels.len(),
    }
}

fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoodGrouping {
    All,
    TimeOfDay,
    Weekday,
    Role,
    Interruptibility,
}

impl MoodGrouping {
    pub const ALL: [MoodGrouping; 5] = [
        MoodGrouping::All,
        MoodGrouping::TimeOfDay,
        MoodGrouping::Weekday,
        MoodGrouping::Role,
        MoodGrouping::Interruptibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MoodGrouping::All => "all",
            MoodGrouping::TimeOfDay => "time_of_day",
            MoodGrouping::Weekday => "weekday",
            MoodGrouping::Role => "role",
            MoodGrouping::Interruptibility => "interruptibility",
        }
    }

    fn key(self, r: &EsmResponse) -> String {
        match self {
            MoodGrouping::All => "all".into(),
            MoodGrouping::TimeOfDay => {
                crate::features::TIME_BUCKETS[crate::context::time_bucket(r.at)].into()
            }
            MoodGrouping::Weekday => r.at.weekday().name().into(),
            MoodGrouping::Role => match r.social_role {
                SocialRole::Work => "work",
                SocialRole::Private => "private",
                SocialRole::Both => "both",
            }
            .into(),
            MoodGrouping::Interruptibility => match r.interruptibility {
                Interruptibility::Work => "work",
                Interruptibility::Private => "private",
                Interruptibility::Both => "both",
                Interruptibility::None => "none",
            }
            .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodRow {
    pub grouping: MoodGrouping,
    pub group: String,
    pub n: usize,
    pub valence_mean: f64,
    pub valence_ci95: f64,
    pub arousal_mean: f64,
    pub arousal_ci95: f64,
}

/// Mean valence/arousal per group with normal-approximation 95 % half-widths.
/// Groups without answers are omitted.
pub fn mood_summary(esm: &[EsmResponse], grouping: MoodGrouping) -> Vec<MoodRow> {
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in esm {
        let e = groups.entry(grouping.key(r)).or_default();
        e.0.push(f64::from(r.valence));
        e.1.push(f64::from(r.arousal));
    }
    groups
        .into_iter()
        .map(|(group, (v, a))| {
            let (valence_mean, valence_ci95) = mean_and_half_width(&v);
            let (arousal_mean, arousal_ci95) = mean_and_half_width(&a);
            MoodRow {
                grouping,
                group,
                n: v.len(),
                valence_mean,
                valence_ci95,
                arousal_mean,
                arousal_ci95,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub n: usize,
    pub mean_seconds: f64,
    pub ci95: f64,
}

/// Mean response time per app category over `(app, seconds)` pairs answered
/// within a day.
pub fn category_summary(labels: &[(String, f64)], categories: &CategoryMap) -> Vec<CategoryRow> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (app, s) in labels {
        if *s <= RESPONSE_CAP_SECONDS {
            groups
                .entry(categories.category_of(app).to_string())
                .or_default()
                .push(*s);
        }
    }
    groups
        .into_iter()
        .map(|(category, v)| {
            let (mean_seconds, ci95) = mean_and_half_width(&v);
            CategoryRow {
                category,
                n: v.len(),
                mean_seconds,
                ci95,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub participant: String,
    pub k: usize,
    pub coverage: f64,
}

/// `n` thresholds spaced evenly in log time between 1 s and one day.
pub fn log_thresholds(n: usize) -> Vec<f64> {
    let hi = RESPONSE_CAP_SECONDS.ln();
    (0..n)
        .map(|i| (hi * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub participant: String,
    pub threshold_s: f64,
    pub fraction: f64,
}

pub fn cdf_points(labels: &[(String, f64)], thresholds: &[f64]) -> Vec<CdfPoint> {
    let table = cdf_table(labels, thresholds);
    let mut out = Vec::new();
    let series = std::iter::once(("pooled".to_string(), &table.pooled))
        .chain(table.per_participant.iter().map(|(p, v)| (p.clone(), v)));
    for (participant, fractions) in series {
        for (t, f) in thresholds.iter().zip(fractions) {
            out.push(CdfPoint {
                participant: participant.clone(),
                threshold_s: *t,
                fraction: *f,
            });
        }
    }
    out
}

pub fn write_cdf_points_csv<W: Write>(writer: W, points: &[CdfPoint]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["participant", "threshold_s", "fraction"])?;
    for p in points {
        w.write_record([
            p.participant.clone(),
            crate::features::format_float(p.threshold_s),
            crate::features::format_float(p.fraction),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Timestamp;

    #[test]
    fn spearman_cases() {
        let (rho, _) = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(rho, -1.0);
        // Reference values from an independent statistics package.
        let (rho, p) = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.9486832980505139).abs() < 1e-12);
        assert!((p - 0.05131670194948612).abs() < 1e-9);
        let x = [1.0, 5.0, 2.0, 8.0, 3.0, 3.0, 9.0, 4.0, 7.0, 6.0];
        let y = [2.0, 4.0, 1.0, 9.0, 3.0, 5.0, 8.0, 5.0, 6.0, 7.0];
        let (rho, p) = spearman(&x, &y).unwrap();
        assert!((rho - 0.9115853658536587).abs() < 1e-12);
        assert!((p - 0.0002400135282463398).abs() < 1e-9);
        assert!(matches!(spearman(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(AnalysisError::ConstantInput)));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn permutation_p_is_small_for_strong_signal() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v + (v * 3.1).sin()).collect();
        let p = spearman_permutation_p(&x, &y, 999, 1).unwrap();
        assert!(p <= 0.002, "{p}");
    }

    #[test]
    fn dagostino_reference() {
        let x: Vec<f64> = (0..40)
            .map(|i| ((i * 37) % 101) as f64 / 7.0 + (i as f64).sin())
            .collect();
        let r = dagostino_k2(&x).unwrap();
        assert!((r.z_skew - 0.05082591651726824).abs() < 1e-9);
        assert!((r.z_kurtosis + 2.5240735875104825).abs() < 1e-9);
        assert!((r.statistic - 6.373530748957858).abs() < 1e-9);
        assert!((r.p_value - 0.04130526214254921).abs() < 1e-9);
        assert!(matches!(dagostino_k2(&[1.0; 10]), Err(AnalysisError::TooFewSamples { .. })));
    }

    #[test]
    fn cdf_counts() {
        let t = cdf_table(
            &[("a".into(), 60.0), ("a".into(), 400.0), ("b".into(), 7000.0)],
            &DEFAULT_CDF_THRESHOLDS,
        );
        // 400 s is past the 5 min mark, so only one of three is under it
        assert_eq!(t.pooled, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(t.per_participant["b"], vec![0.0, 0.0, 1.0]);
        assert!(cdf_table(&[], &DEFAULT_CDF_THRESHOLDS).pooled.is_empty());
        assert_eq!(
            cdf_fractions_censored(&[Some(10.0), None, Some(4000.0), Some(90_000.0)], &DEFAULT_CDF_THRESHOLDS),
            vec![0.25, 0.25, 0.5]
        );
    }

    fn answer(hour: i64, valence: u8) -> EsmResponse {
        EsmResponse {
            at: Timestamp::utc(1_600_128_000_000 + hour * 3_600_000),
            valence,
            arousal: 3,
            social_role: SocialRole::Work,
            interruptibility: Interruptibility::Both,
        }
    }

    #[test]
    fn mood_grouping() {
        let rows = mood_summary(&[answer(10, 3), answer(20, 4)], MoodGrouping::TimeOfDay);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].group.as_str(), rows[0].valence_mean), ("evening", 4.0));
        assert_eq!((rows[1].group.as_str(), rows[1].valence_mean), ("morning", 3.0));
        let all = mood_summary(&[answer(10, 3), answer(20, 4)], MoodGrouping::All);
        assert_eq!(all[0].valence_mean, 3.5);
    }

    #[test]
    fn categories() {
        let map = CategoryMap::from_csv_str("app,category\ncom.chat,communication\ncom.tool,tools\n").unwrap();
        let rows = category_summary(
            &[
                ("com.chat".into(), 60.0),
                ("com.chat".into(), 120.0),
                ("com.tool".into(), 600.0),
                ("com.unknown".into(), 5.0),
            ],
            &map,
        );
        let means: Vec<(&str, f64)> = rows.iter().map(|r| (r.category.as_str(), r.mean_seconds)).collect();
        assert_eq!(means, vec![("communication", 90.0), ("other", 5.0), ("tools", 600.0)]);
    }
}
