use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use log::{info, warn};
use tractfeat::features::{
    morphological_feature, spatial_feature, tractographic_from_lesion, volumetric_feature, volumetric_spatial_feature,
    write_disruption_tsv, write_feature_table,
};
use tractfeat::tracking::{filter_roi, prune_tip, read_trk};
use tractfeat::volume::{load_volume, resample_nearest};
use tractfeat::{Atlas, Error, FeatureKind, FeatureVector, Tractogram, Volume};

use crate::config::{require, RunConfig};
use crate::track::{field_id, load_field_checked, whole_brain};
use crate::Outcome;

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Peak field to track from (ignored when --tractogram is given).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Precomputed whole-brain tractogram (TRK).
    #[arg(long)]
    tractogram: Option<PathBuf>,
    /// Label atlas (NIfTI).
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Directory of lesion masks; subject id = file stem.
    #[arg(long)]
    lesions: Option<PathBuf>,
    /// Output directory for `features.tsv` and `disruption/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feature kinds to compute (default: all).
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
}

/// `.nii` / `.nii.gz` files in `dir`, sorted by name, with their subject ids.
pub fn lesion_files(dir: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading lesion dir {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let stem = name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii"));
        if let Some(id) = stem {
            out.push((id.to_string(), path));
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no .nii or .nii.gz lesion masks in {}", dir.display());
    }
    Ok(out)
}

fn or_zeros(
    kind: FeatureKind,
    dim: usize,
    id: &str,
    r: tractfeat::Result<FeatureVector>,
) -> anyhow::Result<(FeatureVector, bool)> {
    match r {
        Ok(v) => Ok((v, false)),
        Err(Error::Degenerate(msg)) => {
            warn!("{id}: {} feature set to zero: {msg}", kind.name());
            Ok((FeatureVector::new(kind, vec![0.0; dim]), true))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn run(a: FeaturesArgs, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let atlas_path = require(&a.atlas, &cfg.paths.atlas, "atlas")?;
    let lesion_dir = require(&a.lesions, &cfg.paths.lesion_dir, "lesion_dir")?;
    let out = require(&a.out, &cfg.paths.output, "output")?;
    let kinds = cfg.kinds(&a.kinds)?;
    let params = cfg.tracking_params()?;

    let atlas_vol =
        load_volume(&atlas_path).with_context(|| format!("loading atlas {}", atlas_path.display()))?.to_label()?;
    let atlas_name = field_id(&atlas_path);
    let atlas = Atlas::from_volume(atlas_vol, atlas_name)?;
    let labels = atlas.labels().to_vec();
    let lesions = lesion_files(&lesion_dir)?;

    let whole = match a.tractogram.as_ref().or(cfg.paths.tractogram.as_ref()) {
        Some(p) => {
            let trk = read_trk(p).with_context(|| format!("reading tractogram {}", p.display()))?;
            Tractogram::new(trk.streamlines, trk.grid, params.clone(), field_id(p))
        }
        None => {
            let fp = require(&a.field, &cfg.paths.field, "field")?;
            let field = load_field_checked(&fp)?;
            whole_brain(&field, &params, &field_id(&fp))
        }
    };

    fs::create_dir_all(out.join("disruption")).with_context(|| format!("creating {}", out.display()))?;
    let mut outcome = Outcome::default();
    let mut rows = Vec::with_capacity(lesions.len());
    for (id, path) in &lesions {
        let raw = load_volume(path).with_context(|| format!("loading lesion {}", path.display()))?;
        let lesion: Volume = resample_nearest(&raw.to_mask(), atlas.volume().grid());
        let tracts = prune_tip(&filter_roi(&whole, &lesion), &lesion, params.tip_iterations);
        let tr = tractographic_from_lesion(&tracts, &lesion, &atlas)?;
        if let Some(reason) = &tr.degenerate {
            warn!("{id}: {reason}");
            outcome.degenerate += 1;
        }
        write_disruption_tsv(out.join("disruption").join(format!("{id}.tsv")), &tr.matrix, &labels)?;

        let mut feats = Vec::with_capacity(kinds.len());
        let mut any_zeroed = false;
        for &k in &kinds {
            let dim = k.columns(&labels).len();
            let (v, zeroed) = match k {
                FeatureKind::Tractographic => (tr.feature.clone(), false),
                FeatureKind::Volumetric => or_zeros(k, dim, id, volumetric_feature(&lesion))?,
                FeatureKind::Spatial => or_zeros(k, dim, id, spatial_feature(&lesion))?,
                FeatureKind::Morphological => or_zeros(k, dim, id, morphological_feature(&lesion))?,
                FeatureKind::VolumetricSpatial => or_zeros(k, dim, id, volumetric_spatial_feature(&lesion, &atlas))?,
            };
            any_zeroed |= zeroed;
            feats.push(v);
        }
        if any_zeroed && tr.degenerate.is_none() {
            outcome.degenerate += 1;
        }
        info!("{id}: {} tracts through lesion", tracts.len());
        rows.push((id.clone(), feats));
    }
    write_feature_table(out.join("features.tsv"), &labels, &rows)?;
    Ok(outcome)
}
