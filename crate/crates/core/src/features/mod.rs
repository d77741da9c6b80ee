//! Lesion features: the tractographic feature built from the disruption
//! matrix, and the first-order volumetric, spatial, morphological and
//! volumetric-spatial features.

mod hull;
mod morphology;
mod table;

use log::warn;

use crate::error::{Error, Result};
use crate::tracking::Tractogram;
use crate::volume::{Volume, VolumeKind};

pub use self::hull::convex_hull_volume;
pub use self::morphology::morphological_feature;
pub use self::table::{read_feature_table, write_disruption_tsv, write_feature_table, FeatureTable};

/// Label volume plus its ordered region list.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    volume: Volume,
    labels: Vec<u32>,
    name: String,
}

impl Atlas {
    /// Regions are the distinct nonzero values of `volume`, ascending.
    pub fn from_volume(volume: Volume, name: impl Into<String>) -> Result<Self> {
        let mut labels: Vec<u32> = volume.data().iter().filter(|&&v| v != 0.0).map(|&v| v as u32).collect();
        labels.sort_unstable();
        labels.dedup();
        Self::with_labels(volume, labels, name)
    }

    /// Uses an explicit region list, e.g. the full 116-region AAL table even
    /// when some regions are absent from the grid.
    pub fn with_labels(volume: Volume, labels: Vec<u32>, name: impl Into<String>) -> Result<Self> {
        let volume = volume.to_label()?;
        if labels.len() < 2 {
            return Err(Error::validation(format!("an atlas needs at least 2 regions, got {}", labels.len())));
        }
        if labels.contains(&0) || labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("atlas labels must be positive, distinct and ascending"));
        }
        if let Some(v) = volume.data().iter().find(|&&v| v != 0.0 && labels.binary_search(&(v as u32)).is_err()) {
            return Err(Error::validation(format!("atlas voxel value {v} is not in the label list")));
        }
        Ok(Atlas { volume, labels, name: name.into() })
    }

    pub fn volume(&self) -> &Volume {
        &self.volume
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of regions N.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Region index (position in `labels`) of a raw voxel value.
    pub fn region_of_value(&self, value: f64) -> Option<usize> {
        if value == 0.0 {
            return None;
        }
        self.labels.binary_search(&(value as u32)).ok()
    }

    /// Region containing a world point; `None` for background or off-grid.
    pub fn region_at(&self, p: &nalgebra::Vector3<f64>) -> Option<usize> {
        self.region_of_value(self.volume.value_at_world(p))
    }
}

/// N×N tract counts between atlas regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisruptionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl DisruptionMatrix {
    pub fn zeros(n: usize) -> Self {
        DisruptionMatrix { n, counts: vec![0; n * n] }
    }

    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n * n {
            return Err(Error::shape(format!("{} counts for a {n}x{n} matrix", counts.len())));
        }
        Ok(DisruptionMatrix { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    fn increment(&mut self, i: usize, j: usize) {
        self.counts[i * self.n + j] += 1;
    }
}

/// Disruption matrix divided by its largest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDisruption {
    n: usize,
    values: Vec<f64>,
}

impl NormalizedDisruption {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// End-type tract counting. Each streamline whose two endpoints fall in
/// labelled regions i and j adds one to `d[i][j]` and `d[j][i]` (once when
/// i = j). Endpoints on background or off the atlas grid drop the streamline.
pub fn disruption_matrix(t: &Tractogram, atlas: &Atlas) -> DisruptionMatrix {
    let mut d = DisruptionMatrix::zeros(atlas.len());
    for s in &t.streamlines {
        let Some((first, last)) = s.endpoints() else { continue };
        let (Some(i), Some(j)) = (atlas.region_at(first), atlas.region_at(last)) else {
            continue;
        };
        d.increment(i, j);
        if i != j {
            d.increment(j, i);
        }
    }
    d
}

pub fn normalize_disruption(d: &DisruptionMatrix) -> Result<NormalizedDisruption> {
    let max = d.max();
    if max == 0 {
        return Err(Error::degenerate("disruption matrix is all zeros"));
    }
    let m = max as f64;
    Ok(NormalizedDisruption { n: d.n, values: d.counts.iter().map(|&c| c as f64 / m).collect() })
}

/// Column sums `L_j = sum_i d̂_ij`.
pub fn region_load(d: &NormalizedDisruption) -> Vec<f64> {
    let mut load = vec![0.0; d.n];
    for i in 0..d.n {
        for (j, l) in load.iter_mut().enumerate() {
            *l += d.get(i, j);
        }
    }
    load
}

/// Lesion volume (mm³) inside each atlas region. `lesion` must share the
/// atlas grid.
pub fn lesion_weights(lesion: &Volume, atlas: &Atlas) -> Result<Vec<f64>> {
    if !lesion.grid().same_grid(atlas.volume().grid(), 1e-6) {
        return Err(Error::shape("lesion and atlas must share a grid; resample the lesion first"));
    }
    let mut gamma = vec![0.0; atlas.len()];
    let voxel_volume = lesion.grid().voxel_volume();
    let mut counts = vec![0u64; atlas.len()];
    for i in lesion.nonzero_indices() {
        if let Some(r) = atlas.region_of_value(atlas.volume().data()[i]) {
            counts[r] += 1;
        }
    }
    for (g, c) in gamma.iter_mut().zip(counts) {
        *g = c as f64 * voxel_volume;
    }
    Ok(gamma)
}

/// Which of the five lesion features a vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    Tractographic,
    Volumetric,
    Spatial,
    Morphological,
    VolumetricSpatial,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Tractographic,
        FeatureKind::Volumetric,
        FeatureKind::Spatial,
        FeatureKind::Morphological,
        FeatureKind::VolumetricSpatial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Tractographic => "tractographic",
            FeatureKind::Volumetric => "volumetric",
            FeatureKind::Spatial => "spatial",
            FeatureKind::Morphological => "morphological",
            FeatureKind::VolumetricSpatial => "volumetric_spatial",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Table column names, given the atlas labels for the per-region kinds.
    pub fn columns(self, labels: &[u32]) -> Vec<String> {
        match self {
            FeatureKind::Tractographic => labels.iter().map(|l| format!("T_{l}")).collect(),
            FeatureKind::VolumetricSpatial => labels.iter().map(|l| format!("VS_{l}")).collect(),
            FeatureKind::Volumetric => vec!["vol".into()],
            FeatureKind::Spatial => ["cx", "cy", "cz"].map(String::from).to_vec(),
            FeatureKind::Morphological => ["maj", "min", "ratio", "solid", "round", "surf"].map(String::from).to_vec(),
        }
    }

    /// Whether a table column belongs to this kind.
    pub fn owns_column(self, column: &str) -> bool {
        match self {
            FeatureKind::Tractographic => column.starts_with("T_"),
            FeatureKind::VolumetricSpatial => column.starts_with("VS_"),
            other => other.columns(&[]).iter().any(|c| c == column),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, values: Vec<f64>) -> Self {
        FeatureVector { kind, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Element-wise product `T = gamma ∘ L`.
pub fn tractographic_feature(gamma: &[f64], load: &[f64]) -> Result<FeatureVector> {
    if gamma.len() != load.len() {
        return Err(Error::shape(format!("weight vector has {} entries, region load has {}", gamma.len(), load.len())));
    }
    Ok(FeatureVector::new(FeatureKind::Tractographic, gamma.iter().zip(load).map(|(g, l)| g * l).collect()))
}

/// Full tractographic chain for one lesion.
#[derive(Debug, Clone, PartialEq)]
pub struct TractographicResult {
    pub feature: FeatureVector,
    pub matrix: DisruptionMatrix,
    pub weights: Vec<f64>,
    /// Set when the feature had to fall back to zeros.
    pub degenerate: Option<String>,
}

/// Builds T from a lesion-filtered tractogram. When the lesion misses every
/// atlas region, or no tract joins two labelled regions, T is the zero
/// vector and the reason is reported (and logged).
pub fn tractographic_from_lesion(t: &Tractogram, lesion: &Volume, atlas: &Atlas) -> Result<TractographicResult> {
    let weights = lesion_weights(lesion, atlas)?;
    let matrix = disruption_matrix(t, atlas);
    let zero = || FeatureVector::new(FeatureKind::Tractographic, vec![0.0; atlas.len()]);
    let degenerate = if weights.iter().all(|&g| g == 0.0) {
        Some("lesion is not located in any atlas region".to_string())
    } else if matrix.max() == 0 {
        Some("no tract through the lesion ends in two atlas regions".to_string())
    } else {
        None
    };
    if let Some(reason) = &degenerate {
        warn!("tractographic feature set to zero: {reason}");
        return Ok(TractographicResult { feature: zero(), matrix, weights, degenerate });
    }
    let load = region_load(&normalize_disruption(&matrix)?);
    let feature = tractographic_feature(&weights, &load)?;
    Ok(TractographicResult { feature, matrix, weights, degenerate: None })
}

fn require_mask(lesion: &Volume) -> Result<()> {
    if lesion.kind() == VolumeKind::Mask {
        Ok(())
    } else {
        Err(Error::validation("lesion must be a mask volume"))
    }
}

/// Lesion volume in mm³.
pub fn volumetric_feature(lesion: &Volume) -> Result<FeatureVector> {
    require_mask(lesion)?;
    let v = lesion.count_nonzero() as f64 * lesion.grid().voxel_volume();
    Ok(FeatureVector::new(FeatureKind::Volumetric, vec![v]))
}

/// Lesion centroid in world mm.
pub fn spatial_feature(lesion: &Volume) -> Result<FeatureVector> {
    require_mask(lesion)?;
    let mut sum = nalgebra::Vector3::zeros();
    let mut n = 0usize;
    for i in lesion.nonzero_indices() {
        sum += lesion.grid().voxel_to_world(lesion.grid().unravel(i));
        n += 1;
    }
    if n == 0 {
        return Err(Error::degenerate("empty lesion has no centroid"));
    }
    let c = sum / n as f64;
    Ok(FeatureVector::new(FeatureKind::Spatial, vec![c.x, c.y, c.z]))
}

/// Same numbers as [`lesion_weights`], tagged as a feature.
pub fn volumetric_spatial_feature(lesion: &Volume, atlas: &Atlas) -> Result<FeatureVector> {
    Ok(FeatureVector::new(FeatureKind::VolumetricSpatial, lesion_weights(lesion, atlas)?))
}
