//! Synthetic cohort: a crossing-bundle field, an 8-region atlas and sphere
//! lesions whose mRS grows with the fraction of the x-bundle they cut.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use log::info;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tractfeat::odf::{make_phantom, save_field};
use tractfeat::tracking::{filter_roi, track_whole_brain};
use tractfeat::volume::save_volume;
use tractfeat::{OdfField, PhantomSpec, TrackingParams, Volume, VolumeKind};

use crate::config::RunConfig;
use crate::Outcome;

#[derive(Args, Debug)]
pub struct CohortArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    subjects: usize,
    /// Grid edge length in voxels (1 mm isotropic).
    #[arg(long, default_value_t = 32)]
    size: usize,
}

const HALF_WIDTH: f64 = 6.0;
const MRS_NOISE: f64 = 0.3;

pub fn field(n: usize) -> anyhow::Result<OdfField> {
    let spec = PhantomSpec::crossing([n; 3], [1.0; 3], Vector3::x(), Vector3::y(), HALF_WIDTH, HALF_WIDTH, 1.0);
    Ok(make_phantom(&spec)?)
}

/// Four in-plane sectors (+x, -x, +y, -y by the dominant offset from the
/// grid centre) times lower/upper z half, restricted to the brain mask.
pub fn atlas(field: &OdfField) -> anyhow::Result<Volume> {
    let [nx, ny, nz] = field.grid().dims();
    let c = [(nx - 1) as f64 / 2.0, (ny - 1) as f64 / 2.0, (nz - 1) as f64 / 2.0];
    let v = Volume::from_fn(field.grid().clone(), VolumeKind::Label, |idx| {
        if !field.in_mask(idx) {
            return 0.0;
        }
        let (dx, dy) = (idx[0] as f64 - c[0], idx[1] as f64 - c[1]);
        let sector = if dx.abs() >= dy.abs() {
            if dx >= 0.0 {
                0
            } else {
                1
            }
        } else if dy >= 0.0 {
            2
        } else {
            3
        };
        let upper = if idx[2] as f64 > c[2] { 4 } else { 0 };
        f64::from(1 + sector + upper)
    })?;
    Ok(v)
}

pub fn run(a: CohortArgs, cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let n = a.size;
    anyhow::ensure!(n >= 16, "--size must be at least 16");
    anyhow::ensure!(a.subjects >= 2, "--subjects must be at least 2");
    let out = &a.out;
    fs::create_dir_all(out.join("lesions")).with_context(|| format!("creating {}", out.display()))?;

    let field = field(n)?;
    save_field(&field, out.join("field.npk"))?;
    let atlas = atlas(&field)?;
    save_volume(&atlas, out.join("atlas.nii.gz"))?;

    // critical bundle: tracts running mainly along x
    let whole = track_whole_brain(&field, &TrackingParams::default());
    let critical = {
        let mut t = whole.clone();
        t.streamlines.retain(|s| {
            let (a, b) = s.endpoints().expect("accepted streamlines have points");
            let d = b - a;
            d.x.abs() > d.y.abs()
        });
        t
    };
    info!("{} tracts, {} in the critical x-bundle", whole.len(), critical.len());

    let c = (n - 1) as f64 / 2.0;
    let mask: Vec<[usize; 3]> = field.brain_mask().nonzero_indices().map(|i| field.grid().unravel(i)).collect();
    let in_x_arm: Vec<[usize; 3]> = mask.iter().copied().filter(|i| (i[1] as f64 - c).abs() <= HALF_WIDTH).collect();
    let in_y_arm: Vec<[usize; 3]> = mask.iter().copied().filter(|i| (i[0] as f64 - c).abs() <= HALF_WIDTH).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let noise = Normal::new(0.0, MRS_NOISE)?;
    let mut clinical = String::from("subject_id\tmRS\tdays_to_mRS\n");
    for s in 0..a.subjects {
        let pool = if rng.random_bool(0.6) { &in_x_arm } else { &in_y_arm };
        let centre = pool[rng.random_range(0..pool.len())];
        let radius: f64 = rng.random_range(1.0..7.5);
        let centre_w = field.grid().voxel_to_world(centre);
        let lesion = Volume::from_fn(field.grid().clone(), VolumeKind::Mask, |idx| {
            let inside = field.in_mask(idx) && (field.grid().voxel_to_world(idx) - centre_w).norm() <= radius;
            f64::from(inside)
        })?;
        let blocked = filter_roi(&critical, &lesion).len() as f64 / critical.len().max(1) as f64;
        let mrs = (4.0 * blocked + noise.sample(&mut rng)).round().clamp(0.0, 4.0) as u8;
        let days = rng.random_range(82..=98);
        let id = format!("sub-{:02}", s + 1);
        save_volume(&lesion, out.join("lesions").join(format!("{id}.nii.gz")))?;
        writeln!(clinical, "{id}\t{mrs}\t{days}")?;
    }
    fs::write(out.join("clinical.tsv"), clinical)?;

    let config = "\
[paths]
field = \"field.npk\"
atlas = \"atlas.nii.gz\"
lesion_dir = \"lesions\"
features = \"features/features.tsv\"
clinical = \"clinical.tsv\"
";
    fs::write(out.join("cohort.toml"), config)?;
    info!("wrote {} subjects to {}", a.subjects, out.display());
    Ok(Outcome::default())
}
