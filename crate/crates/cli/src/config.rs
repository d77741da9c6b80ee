//! TOML run configuration. Relative paths resolve against the directory of
//! the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use tractfeat::{FeatureKind, ForestSpec, TrackingParams};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub tracking: TrackingSection,
    pub forest: ForestSection,
    pub features: FeaturesSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub field: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
    pub lesion: Option<PathBuf>,
    pub lesion_dir: Option<PathBuf>,
    pub tractogram: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub clinical: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    pub qa_threshold: Option<f64>,
    pub angular_threshold_deg: Option<f64>,
    pub step_mm: Option<f64>,
    pub smoothing: Option<f64>,
    pub min_length_mm: Option<f64>,
    pub max_length_mm: Option<f64>,
    pub tip_iterations: Option<usize>,
    /// 0 disables the cap.
    pub max_tracts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub mtry: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub kinds: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub days_min: Option<f64>,
    pub days_max: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 2019;

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.field,
            &mut p.atlas,
            &mut p.lesion,
            &mut p.lesion_dir,
            &mut p.tractogram,
            &mut p.features,
            &mut p.clinical,
            &mut p.output,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn tracking_params(&self) -> anyhow::Result<TrackingParams> {
        let t = &self.tracking;
        let d = TrackingParams::default();
        let params = TrackingParams {
            qa_threshold: t.qa_threshold.unwrap_or(d.qa_threshold),
            angular_threshold_deg: t.angular_threshold_deg.unwrap_or(d.angular_threshold_deg),
            step_mm: t.step_mm.unwrap_or(d.step_mm),
            smoothing: t.smoothing.unwrap_or(d.smoothing),
            min_length_mm: t.min_length_mm.unwrap_or(d.min_length_mm),
            max_length_mm: t.max_length_mm.unwrap_or(d.max_length_mm),
            tip_iterations: t.tip_iterations.unwrap_or(d.tip_iterations),
            max_tracts: match t.max_tracts {
                Some(0) => None,
                Some(n) => Some(n),
                None => d.max_tracts,
            },
        };
        params.validate()?;
        Ok(params)
    }

    pub fn forest_spec(&self) -> anyhow::Result<ForestSpec> {
        let f = &self.forest;
        let d = ForestSpec::default();
        let spec = ForestSpec {
            n_trees: f.n_trees.unwrap_or(d.n_trees),
            max_depth: f.max_depth.unwrap_or(d.max_depth),
            min_samples_split: f.min_samples_split.unwrap_or(d.min_samples_split),
            mtry: f.mtry.or(d.mtry),
            rng_seed: self.seed(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Requested feature kinds in canonical order; all five when unset.
    pub fn kinds(&self, flag: &[String]) -> anyhow::Result<Vec<FeatureKind>> {
        let names = if flag.is_empty() { self.features.kinds.clone() } else { Some(flag.to_vec()) };
        let Some(names) = names else {
            return Ok(FeatureKind::ALL.to_vec());
        };
        let mut picked = Vec::new();
        for n in &names {
            match FeatureKind::parse(n) {
                Some(k) => picked.push(k),
                None => bail!("unknown feature kind `{n}`"),
            }
        }
        Ok(FeatureKind::ALL.into_iter().filter(|k| picked.contains(k)).collect())
    }
}

/// Flag value if given, else the config value, else an error naming both.
pub fn require(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    match flag.as_ref().or(cfg.as_ref()) {
        Some(p) => Ok(p.clone()),
        None => bail!("no {what} given (flag or config paths.{what})"),
    }
}
