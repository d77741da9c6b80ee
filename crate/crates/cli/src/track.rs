use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use log::{info, warn};
use tractfeat::odf::load_field;
use tractfeat::tracking::{filter_roi, prune_tip, track_whole_brain, write_summary, write_trk};
use tractfeat::volume::load_volume;
use tractfeat::{OdfField, TrackingParams, Tractogram};

use crate::config::{require, RunConfig};
use crate::Outcome;

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Peak field (NPK1).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Lesion mask (NIfTI). Without one, the brain mask is the ROI.
    #[arg(long)]
    lesion: Option<PathBuf>,
    /// Output directory for `tracts.trk` and `tracts_summary.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn load_field_checked(path: &Path) -> anyhow::Result<OdfField> {
    load_field(path).with_context(|| format!("loading field {}", path.display()))
}

pub fn field_id(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn whole_brain(field: &OdfField, params: &TrackingParams, id: &str) -> Tractogram {
    let mut t = track_whole_brain(field, params);
    t.field_id = id.to_string();
    info!("tracked {} streamlines", t.len());
    t
}

pub fn run(a: TrackArgs, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let field_path = require(&a.field, &cfg.paths.field, "field")?;
    let out = require(&a.out, &cfg.paths.output, "output")?;
    let params = cfg.tracking_params()?;
    let field = load_field_checked(&field_path)?;
    let roi = match a.lesion.as_ref().or(cfg.paths.lesion.as_ref()) {
        Some(p) => load_volume(p).with_context(|| format!("loading lesion {}", p.display()))?.to_mask(),
        None => field.brain_mask().clone(),
    };

    let mut outcome = Outcome::default();
    if roi.count_nonzero() == 0 {
        warn!("lesion ROI is empty; the tractogram will be empty");
        outcome.degenerate += 1;
    }
    let whole = whole_brain(&field, &params, &field_id(&field_path));
    let kept = prune_tip(&filter_roi(&whole, &roi), &roi, params.tip_iterations);
    info!("{} streamlines after ROI filtering and pruning", kept.len());

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_trk(&kept, out.join("tracts.trk"))?;
    write_summary(&kept, out.join("tracts_summary.txt"))?;
    Ok(outcome)
}
