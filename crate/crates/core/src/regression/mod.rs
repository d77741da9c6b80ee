//! mRS regression: z-scoring, zero-variance removal, random-forest
//! regression, recursive feature elimination and leave-one-out evaluation.

mod forest;

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use self::forest::{
    predict_mrs, rf_importance, rf_predict, rf_train, round_mrs, ForestSpec, Node, RegressionForest, RegressionTree,
};

/// Subjects × feature dimensions with integer mRS targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    pub subject_ids: Vec<String>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<u8>, feature_names: Vec<String>, subject_ids: Vec<String>) -> Result<Self> {
        let m = x.len();
        if m < 2 {
            return Err(Error::degenerate("a dataset needs at least 2 subjects"));
        }
        if y.len() != m || subject_ids.len() != m {
            return Err(Error::shape(format!("{m} rows, {} targets, {} subject ids", y.len(), subject_ids.len())));
        }
        let d = feature_names.len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::shape(format!("every row must have {d} values")));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("feature values must be finite"));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 4) {
            return Err(Error::validation(format!("mRS grade {bad} outside 0..=4")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = subject_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::validation(format!("duplicate subject id {dup}")));
        }
        Ok(Dataset { x, y, feature_names, subject_ids })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Dataset {
        Dataset {
            x: self.x.iter().map(|r| columns.iter().map(|&c| r[c]).collect()).collect(),
            y: self.y.clone(),
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            subject_ids: self.subject_ids.clone(),
        }
    }

    fn targets(&self) -> Vec<f64> {
        self.y.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn column_stats(x: &[Vec<f64>], c: usize) -> (f64, f64) {
    let first = x[0][c];
    if x.iter().all(|r| r[c] == first) {
        return (first, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|r| r[c]).sum::<f64>() / n;
    let var = x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn zscore_fit(x: &[Vec<f64>]) -> Result<Scaler> {
    if x.len() < 2 {
        return Err(Error::degenerate("z-scoring needs at least 2 rows"));
    }
    let (mean, std) = (0..x[0].len()).map(|c| column_stats(x, c)).unzip();
    Ok(Scaler { mean, std })
}

/// `(x - mean) / std`, or just `x - mean` where the fitted std is zero.
pub fn zscore_apply(s: &Scaler, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| {
            r.iter()
                .zip(s.mean.iter().zip(&s.std))
                .map(|(v, (m, sd))| if *sd > 0.0 { (v - m) / sd } else { v - m })
                .collect()
        })
        .collect()
}

/// Drops constant columns; returns the reduced rows and the kept column
/// indices.
pub fn drop_zero_variance(x: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let Some(first) = x.first() else {
        return (Vec::new(), Vec::new());
    };
    let kept: Vec<usize> = (0..first.len()).filter(|&c| x.iter().any(|r| r[c] != first[c])).collect();
    let reduced = x.iter().map(|r| kept.iter().map(|&c| r[c]).collect()).collect();
    (reduced, kept)
}

/// Z-scores and drops constant columns over the whole dataset.
pub fn preprocess(data: &Dataset) -> Result<(Dataset, Vec<usize>)> {
    let scaled = zscore_apply(&zscore_fit(&data.x)?, &data.x);
    let (_, kept) = drop_zero_variance(&scaled);
    let mut out = data.select(&kept);
    out.x = scaled.iter().map(|r| kept.iter().map(|&c| r[c]).collect()).collect();
    Ok((out, kept))
}

/// Forest seed for the fold holding out `subject_id`: FNV-1a over the global
/// seed bytes and the id, so fold results do not depend on subject order.
pub fn fold_seed(seed: u64, subject_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(subject_id.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Training rows for the fold that holds out row `held_out`, ordered by
/// subject id so that a fold's forest is independent of input row order.
pub fn fold_training_rows(data: &Dataset, held_out: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..data.len()).filter(|&r| r != held_out).collect();
    rows.sort_by(|&a, &b| data.subject_ids[a].cmp(&data.subject_ids[b]));
    rows
}

fn gather(x: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| x[r].clone()).collect()
}

/// Raw (unrounded) leave-one-out predictions, one per row, in row order.
fn loocv_raw(data: &Dataset, spec: &ForestSpec, rescale: bool) -> Result<Vec<f64>> {
    let y = data.targets();
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let rows = fold_training_rows(data, i);
            let mut train = gather(&data.x, &rows);
            let mut probe = data.x[i].clone();
            if rescale {
                let s = zscore_fit(&train)?;
                train = zscore_apply(&s, &train);
                probe = zscore_apply(&s, std::slice::from_ref(&probe)).remove(0);
            }
            let ty: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            let f = rf_train(&train, &ty, &spec.with_seed(fold_seed(spec.rng_seed, &data.subject_ids[i])))?;
            Ok(rf_predict(&f, &probe))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeResult {
    /// Selected column indices into the input dataset, ascending.
    pub selected: Vec<usize>,
    /// `(cardinality, LOOCV MAE)` from the full dimension down to 1.
    pub curve: Vec<(usize, f64)>,
    /// Importances of the selected columns from a forest fit on all rows.
    pub importance: Vec<f64>,
}

/// Recursive feature elimination scored by leave-one-out MAE on raw forest
/// output. Each round drops the column with the lowest forest importance
/// (ties to the lowest index). Returns the subset with the lowest MAE, the
/// smaller one on ties.
pub fn rfe_loocv(data: &Dataset, spec: &ForestSpec) -> Result<RfeResult> {
    spec.validate()?;
    let d = data.dim();
    if d == 0 {
        return Err(Error::degenerate("no feature dimensions left for selection"));
    }
    let y = data.targets();
    let canonical = fold_training_rows(data, usize::MAX);
    let mut current: Vec<usize> = (0..d).collect();
    let mut curve = Vec::with_capacity(d);
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    while !current.is_empty() {
        let sub = data.select(&current);
        let raw = loocv_raw(&sub, spec, false)?;
        let mae = raw.iter().zip(&y).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len() as f64;
        curve.push((current.len(), mae));

        let all_x = gather(&sub.x, &canonical);
        let all_y: Vec<f64> = canonical.iter().map(|&r| y[r]).collect();
        let f = rf_train(&all_x, &all_y, &spec.with_seed(forest::mix(spec.rng_seed ^ current.len() as u64)))?;
        let imp = rf_importance(&f);
        if best.as_ref().is_none_or(|(b, _, _)| mae <= *b) {
            best = Some((mae, current.clone(), imp.clone()));
        }
        let drop = (0..imp.len()).fold(0, |acc, k| if imp[k] < imp[acc] { k } else { acc });
        current.remove(drop);
    }
    let (_, selected, importance) = best.expect("at least one cardinality evaluated");
    Ok(RfeResult { selected, curve, importance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub truth: u8,
    pub predicted: u8,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mae_mean: f64,
    /// Population standard deviation of the absolute errors.
    pub mae_std: f64,
    pub per_subject: Vec<SubjectPrediction>,
}

/// Exact-match accuracy and mean ± population std of absolute errors.
pub fn metrics(truth: &[u8], predicted: &[u8]) -> Result<(f64, f64, f64)> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::shape("metrics need equal, non-empty truth and prediction lists"));
    }
    let n = truth.len() as f64;
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    // integer sums keep the result independent of subject order
    let (s1, s2) = truth.iter().zip(predicted).fold((0u64, 0u64), |(a, b), (&t, &p)| {
        let e = u64::from(t.abs_diff(p));
        (a + e, b + e * e)
    });
    let mean = s1 as f64 / n;
    let var = ((n * s2 as f64 - (s1 * s1) as f64) / (n * n)).max(0.0);
    Ok((hits as f64 / n, mean, var.sqrt()))
}

/// Leave-one-out evaluation on the `selected` columns. Every fold refits the
/// scaler and the forest on the remaining subjects only.
pub fn loocv_evaluate(data: &Dataset, spec: &ForestSpec, selected: &[usize]) -> Result<EvalReport> {
    spec.validate()?;
    if selected.is_empty() {
        return Err(Error::degenerate("no feature dimensions selected"));
    }
    if let Some(&c) = selected.iter().find(|&&c| c >= data.dim()) {
        return Err(Error::shape(format!("selected column {c} out of range")));
    }
    let raw = loocv_raw(&data.select(selected), spec, true)?;
    let per_subject: Vec<SubjectPrediction> = raw
        .iter()
        .enumerate()
        .map(|(i, &r)| SubjectPrediction {
            subject_id: data.subject_ids[i].clone(),
            truth: data.y[i],
            predicted: round_mrs(r),
            raw: r,
        })
        .collect();
    let predicted: Vec<u8> = per_subject.iter().map(|s| s.predicted).collect();
    let (accuracy, mae_mean, mae_std) = metrics(&data.y, &predicted)?;
    Ok(EvalReport { accuracy, mae_mean, mae_std, per_subject })
}
