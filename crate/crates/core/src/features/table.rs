//! Tab-separated feature tables and disruption matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DisruptionMatrix, FeatureKind, FeatureVector};
use crate::error::{Error, Result};

/// Subjects × named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub subject_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    /// Column indices belonging to `kind`, in table order.
    pub fn columns_of(&self, kind: FeatureKind) -> Vec<usize> {
        self.columns.iter().enumerate().filter(|(_, c)| kind.owns_column(c)).map(|(i, _)| i).collect()
    }

    /// Feature kinds with at least one column present.
    pub fn kinds(&self) -> Vec<FeatureKind> {
        FeatureKind::ALL.into_iter().filter(|&k| !self.columns_of(k).is_empty()).collect()
    }
}

/// Writes one row per subject. Every subject must carry the same kinds in
/// the same order; columns follow that order.
pub fn write_feature_table(
    path: impl AsRef<Path>,
    labels: &[u32],
    rows: &[(String, Vec<FeatureVector>)],
) -> Result<()> {
    let kinds: Vec<FeatureKind> = rows.first().map(|(_, f)| f.iter().map(|v| v.kind).collect()).unwrap_or_default();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["subject_id".to_string()];
    for k in &kinds {
        header.extend(k.columns(labels));
    }
    writeln!(w, "{}", header.join("\t"))?;
    for (id, feats) in rows {
        let row_kinds: Vec<FeatureKind> = feats.iter().map(|f| f.kind).collect();
        if row_kinds != kinds {
            return Err(Error::shape(format!("subject {id} has feature kinds {row_kinds:?}, expected {kinds:?}")));
        }
        let mut cells = vec![id.clone()];
        for f in feats {
            if f.dim() != f.kind.columns(labels).len() {
                return Err(Error::shape(format!("subject {id}: {} feature has {} values", f.kind.name(), f.dim())));
            }
            cells.extend(f.values.iter().map(|v| v.to_string()));
        }
        writeln!(w, "{}", cells.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::format("feature table is empty"))??;
    let mut cols = header.split('\t');
    if cols.next() != Some("subject_id") {
        return Err(Error::format("feature table must start with a subject_id column"));
    }
    let columns: Vec<String> = cols.map(str::to_string).collect();
    let mut subject_ids = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        let values = cells
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(format!("line {}: bad value {c:?}", lineno + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != columns.len() {
            return Err(Error::format(format!(
                "line {}: {} values for {} columns",
                lineno + 2,
                values.len(),
                columns.len()
            )));
        }
        subject_ids.push(id);
        rows.push(values);
    }
    Ok(FeatureTable { columns, subject_ids, rows })
}

pub fn write_disruption_tsv(path: impl AsRef<Path>, d: &DisruptionMatrix, labels: &[u32]) -> Result<()> {
    if labels.len() != d.n() {
        return Err(Error::shape("label count does not match matrix size"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> =
        std::iter::once("label".to_string()).chain(labels.iter().map(|l| l.to_string())).collect();
    writeln!(w, "{}", header.join("\t"))?;
    for (i, l) in labels.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once(l.to_string()).chain((0..d.n()).map(|j| d.get(i, j).to_string())).collect();
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}
