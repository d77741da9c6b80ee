use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use log::{info, warn};
use tractfeat::features::read_feature_table;
use tractfeat::regression::{loocv_evaluate, preprocess, rfe_loocv};
use tractfeat::{Dataset, FeatureKind};

use crate::config::{require, RunConfig};
use crate::Outcome;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Feature table written by `features`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Clinical TSV with subject_id, mRS and days_to_mRS columns.
    #[arg(long)]
    clinical: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    /// Earliest accepted days_to_mRS (default 80).
    #[arg(long)]
    days_min: Option<f64>,
    /// Latest accepted days_to_mRS (default 100).
    #[arg(long)]
    days_max: Option<f64>,
}

pub struct ClinicalRecord {
    pub mrs: u8,
    pub days: f64,
}

pub fn read_clinical(path: &Path) -> anyhow::Result<HashMap<String, ClinicalRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading clinical table {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("clinical table is empty")?.split('\t').collect();
    let col = |name: &str| {
        header.iter().position(|h| h.trim() == name).with_context(|| format!("clinical table lacks a `{name}` column"))
    };
    let (ci, cm, cd) = (col("subject_id")?, col("mRS")?, col("days_to_mRS")?);
    let mut out = HashMap::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        let get = |c: usize| cells.get(c).copied().with_context(|| format!("clinical row {} is short", n + 2));
        let mrs: u8 = get(cm)?.parse().with_context(|| format!("clinical row {}: bad mRS", n + 2))?;
        if mrs > 4 {
            bail!("clinical row {}: mRS {mrs} outside 0..=4", n + 2);
        }
        let days: f64 = get(cd)?.parse().with_context(|| format!("clinical row {}: bad days_to_mRS", n + 2))?;
        out.insert(get(ci)?.to_string(), ClinicalRecord { mrs, days });
    }
    Ok(out)
}

struct KindResult {
    kind: FeatureKind,
    summary: Option<(f64, f64, f64, usize)>,
}

pub fn run(a: EvaluateArgs, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let features_path = require(&a.features, &cfg.paths.features, "features")?;
    let clinical_path = require(&a.clinical, &cfg.paths.clinical, "clinical")?;
    let out = require(&a.out, &cfg.paths.output, "output")?;
    let kinds = cfg.kinds(&a.kinds)?;
    let spec = cfg.forest_spec()?;
    let lo = a.days_min.or(cfg.evaluate.days_min).unwrap_or(80.0);
    let hi = a.days_max.or(cfg.evaluate.days_max).unwrap_or(100.0);

    let table = read_feature_table(&features_path)
        .with_context(|| format!("reading feature table {}", features_path.display()))?;
    let clinical = read_clinical(&clinical_path)?;

    let mut rows = Vec::new();
    for (i, id) in table.subject_ids.iter().enumerate() {
        let Some(rec) = clinical.get(id) else {
            bail!("subject {id} is missing from the clinical table {}", clinical_path.display());
        };
        if (lo..=hi).contains(&rec.days) {
            rows.push((i, rec.mrs));
        } else {
            info!("{id}: days_to_mRS {} outside [{lo}, {hi}], excluded", rec.days);
        }
    }
    info!("{} of {} subjects inside the mRS window", rows.len(), table.subject_ids.len());

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut outcome = Outcome::default();
    let mut results = Vec::new();
    for kind in kinds {
        let cols = table.columns_of(kind);
        if cols.is_empty() {
            warn!("feature table has no {} columns", kind.name());
            outcome.degenerate += 1;
            results.push(KindResult { kind, summary: None });
            continue;
        }
        let data = Dataset::new(
            rows.iter().map(|&(i, _)| cols.iter().map(|&c| table.rows[i][c]).collect()).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
            cols.iter().map(|&c| table.columns[c].clone()).collect(),
            rows.iter().map(|&(i, _)| table.subject_ids[i].clone()).collect(),
        )?;
        let (prepared, _) = preprocess(&data)?;
        if prepared.dim() == 0 {
            warn!("{}: every dimension has zero variance, nothing to evaluate", kind.name());
            outcome.degenerate += 1;
            results.push(KindResult { kind, summary: None });
            continue;
        }
        let rfe = rfe_loocv(&prepared, &spec)?;
        let report = loocv_evaluate(&prepared, &spec, &rfe.selected)?;
        info!(
            "{}: accuracy {:.3}, MAE {:.3} ± {:.3} with {} of {} dims",
            kind.name(),
            report.accuracy,
            report.mae_mean,
            report.mae_std,
            rfe.selected.len(),
            prepared.dim()
        );

        let name = kind.name();
        let mut s = String::from("subject_id\ttrue_mRS\tpredicted_mRS\traw_prediction\n");
        for p in &report.per_subject {
            writeln!(s, "{}\t{}\t{}\t{}", p.subject_id, p.truth, p.predicted, p.raw)?;
        }
        fs::write(out.join(format!("report_{name}.tsv")), s)?;

        let selected: Vec<&str> = rfe.selected.iter().map(|&c| prepared.feature_names[c].as_str()).collect();
        let mut s = String::new();
        writeln!(s, "feature_kind = {name}")?;
        writeln!(s, "subjects = {}", prepared.len())?;
        writeln!(s, "dims_after_variance_filter = {}", prepared.dim())?;
        writeln!(s, "selected = {}", selected.join(","))?;
        writeln!(s, "accuracy = {}", report.accuracy)?;
        writeln!(s, "mae_mean = {}", report.mae_mean)?;
        writeln!(s, "mae_std = {}", report.mae_std)?;
        writeln!(s, "n_trees = {}", spec.n_trees)?;
        writeln!(s, "max_depth = {}", spec.max_depth)?;
        writeln!(s, "seed = {}", spec.rng_seed)?;
        fs::write(out.join(format!("summary_{name}.txt")), s)?;

        let mut s = String::from("n_features\tmae\n");
        for (k, m) in &rfe.curve {
            writeln!(s, "{k}\t{m}")?;
        }
        fs::write(out.join(format!("mae_curve_{name}.tsv")), s)?;

        let mut s = String::from("feature\timportance\n");
        for (f, imp) in selected.iter().zip(&rfe.importance) {
            writeln!(s, "{f}\t{imp}")?;
        }
        fs::write(out.join(format!("importance_{name}.tsv")), s)?;

        results.push(KindResult {
            kind,
            summary: Some((report.accuracy, report.mae_mean, report.mae_std, rfe.selected.len())),
        });
    }

    let mut s = String::from("feature\taccuracy\tmae_mean\tmae_std\tn_selected\n");
    for r in &results {
        match r.summary {
            Some((acc, m, sd, n)) => writeln!(s, "{}\t{acc}\t{m}\t{sd}\t{n}", r.kind.name())?,
            None => writeln!(s, "{}\tNA\tNA\tNA\t0", r.kind.name())?,
        }
    }
    fs::write(out.join("comparison.tsv"), s)?;
    Ok(outcome)
}
