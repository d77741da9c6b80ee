//! Deterministic Euler streamline tractography over a peak field, lesion ROI
//! filtering and support-based tract pruning.

mod trk;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::odf::OdfField;
use crate::volume::{GridSpec, Volume};

pub use self::trk::{read_trk, write_summary, write_trk, TrkFile};

/// Tracking configuration. Defaults reproduce the reference run:
/// QA termination at 0.15958, 90° angular threshold, 0.5 mm steps,
/// smoothing 0.5, 3–500 mm length window, one pruning pass and a cap of
/// 2,235,858 accepted tracts. Seeds are placed at voxel centres in
/// lexicographic (x, y, z) order; there is no random seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingParams {
    pub qa_threshold: f64,
    pub angular_threshold_deg: f64,
    pub step_mm: f64,
    pub smoothing: f64,
    pub min_length_mm: f64,
    pub max_length_mm: f64,
    pub tip_iterations: usize,
    pub max_tracts: Option<usize>,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            qa_threshold: 0.15958,
            angular_threshold_deg: 90.0,
            step_mm: 0.5,
            smoothing: 0.5,
            min_length_mm: 3.0,
            max_length_mm: 500.0,
            tip_iterations: 1,
            max_tracts: Some(2_235_858),
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.qa_threshold,
            self.angular_threshold_deg,
            self.step_mm,
            self.smoothing,
            self.min_length_mm,
            self.max_length_mm,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("tracking parameters must be finite"));
        }
        if self.step_mm <= 0.0 {
            return Err(Error::validation("step_mm must be positive"));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(Error::validation("smoothing must lie in [0, 1]"));
        }
        if self.min_length_mm >= self.max_length_mm {
            return Err(Error::validation("min_length_mm must be below max_length_mm"));
        }
        Ok(())
    }
}

/// Ordered world-mm polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub points: Vec<Vector3<f64>>,
}

impl Streamline {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Streamline { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length in mm.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn endpoints(&self) -> Option<(&Vector3<f64>, &Vector3<f64>)> {
        Some((self.points.first()?, self.points.last()?))
    }
}

/// A set of streamlines with the geometry and settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tractogram {
    pub streamlines: Vec<Streamline>,
    /// Reference grid (the field's), used for TRK headers.
    pub grid: GridSpec,
    pub params: TrackingParams,
    pub field_id: String,
}

impl Tractogram {
    pub fn new(
        streamlines: Vec<Streamline>,
        grid: GridSpec,
        params: TrackingParams,
        field_id: impl Into<String>,
    ) -> Self {
        Tractogram { streamlines, grid, params, field_id: field_id.into() }
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    fn with_streamlines(&self, streamlines: Vec<Streamline>) -> Tractogram {
        Tractogram {
            streamlines,
            grid: self.grid.clone(),
            params: self.params.clone(),
            field_id: self.field_id.clone(),
        }
    }
}

/// Follows the field from `seed` in both `init_dir` and `-init_dir`.
///
/// Each step interpolates a direction, blends in the previous step direction
/// with weight `smoothing`, and advances `step_mm`. A leg stops when the
/// interpolation terminates, the next point leaves the brain mask, or the
/// combined length would pass `max_length_mm`. Returns `None` when the seed is
/// outside the mask or the result is shorter than `min_length_mm`.
pub fn propagate(
    field: &OdfField,
    seed: &Vector3<f64>,
    init_dir: &Vector3<f64>,
    params: &TrackingParams,
) -> Option<Streamline> {
    if !field.contains(seed) {
        return None;
    }
    let max_steps = (params.max_length_mm / params.step_mm + 1e-9).floor() as usize;
    let forward = leg(field, seed, init_dir, params, max_steps);
    let backward = leg(field, seed, &(-init_dir), params, max_steps - forward.len());

    let mut points = Vec::with_capacity(forward.len() + backward.len() + 1);
    points.extend(backward.into_iter().rev());
    points.push(*seed);
    points.extend(forward);
    let length = (points.len() - 1) as f64 * params.step_mm;
    (points.len() >= 2 && length >= params.min_length_mm).then(|| Streamline::new(points))
}

fn leg(
    field: &OdfField,
    seed: &Vector3<f64>,
    init_dir: &Vector3<f64>,
    params: &TrackingParams,
    budget: usize,
) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    let mut point = *seed;
    let mut dir = *init_dir;
    let s = params.smoothing;
    while out.len() < budget {
        let Some((next_dir, _qa)) =
            field.interpolate_direction(&point, &dir, params.qa_threshold, params.angular_threshold_deg)
        else {
            break;
        };
        let blended = (1.0 - s) * next_dir + s * dir;
        let norm = blended.norm();
        if norm <= f64::EPSILON {
            break;
        }
        let step_dir = blended / norm;
        let next = point + params.step_mm * step_dir;
        if !field.contains(&next) {
            break;
        }
        out.push(next);
        point = next;
        dir = step_dir;
    }
    out
}

const SEED_CHUNK: usize = 2048;

/// Whole-brain tracking: one seed at the centre of every brain-mask voxel, in
/// lexicographic (x, y, z) order, one attempt per qualifying peak of the seed
/// voxel. Stops once `max_tracts` streamlines have been accepted; output order
/// is seed order regardless of the rayon thread count.
pub fn track_whole_brain(field: &OdfField, params: &TrackingParams) -> Tractogram {
    let grid = field.grid();
    let [nx, ny, nz] = grid.dims();
    let mut seeds = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if field.in_mask([x, y, z]) {
                    seeds.push([x, y, z]);
                }
            }
        }
    }

    let cap = params.max_tracts.unwrap_or(usize::MAX);
    let mut accepted: Vec<Streamline> = Vec::new();
    for chunk in seeds.chunks(SEED_CHUNK) {
        if accepted.len() >= cap {
            break;
        }
        let batch: Vec<Vec<Streamline>> = chunk
            .par_iter()
            .map(|&idx| {
                let seed = grid.voxel_to_world(idx);
                field
                    .peaks_at(idx)
                    .iter()
                    .filter(|p| p.qa >= params.qa_threshold)
                    .filter_map(|p| propagate(field, &seed, &p.dir, params))
                    .collect()
            })
            .collect();
        accepted.extend(batch.into_iter().flatten());
    }
    accepted.truncate(cap);
    Tractogram::new(accepted, grid.clone(), params.clone(), "")
}

/// Keeps the streamlines with at least one point inside a nonzero `roi` voxel.
pub fn filter_roi(t: &Tractogram, roi: &Volume) -> Tractogram {
    let kept =
        t.streamlines.iter().filter(|s| s.points.iter().any(|p| roi.value_at_world(p) != 0.0)).cloned().collect();
    t.with_streamlines(kept)
}

/// Simplified topology-informed pruning. Each pass counts, per `roi`-grid
/// voxel, how many streamlines visit it, then drops every streamline that
/// visits a voxel no other streamline visits, unless that voxel is inside
/// `roi`. Stops early at a fixed point.
pub fn prune_tip(t: &Tractogram, roi: &Volume, iterations: usize) -> Tractogram {
    let grid = roi.grid();
    let mut current = t.streamlines.clone();
    for _ in 0..iterations {
        let visited: Vec<Vec<usize>> = current
            .par_iter()
            .map(|s| {
                let mut v: Vec<usize> = s
                    .points
                    .iter()
                    .filter_map(|p| grid.containing_voxel(p))
                    .map(|idx| grid.linear_index(idx))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let mut support = vec![0u32; grid.len()];
        for voxels in &visited {
            for &v in voxels {
                support[v] += 1;
            }
        }
        let before = current.len();
        current = current
            .into_iter()
            .zip(&visited)
            .filter(|(_, voxels)| !voxels.iter().any(|&v| support[v] == 1 && roi.data()[v] == 0.0))
            .map(|(s, _)| s)
            .collect();
        if current.len() == before {
            break;
        }
    }
    t.with_streamlines(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odf::{make_phantom, PhantomSpec};
    use crate::volume::VolumeKind;

    fn straight(n: usize) -> OdfField {
        make_phantom(&PhantomSpec::straight([n; 3], [1.0; 3], Vector3::x(), 1.0)).unwrap()
    }

    #[test]
    fn defaults_match_reference_configuration() {
        let p = TrackingParams::default();
        assert_eq!(p.qa_threshold, 0.15958);
        assert_eq!(p.angular_threshold_deg, 90.0);
        assert_eq!(p.step_mm, 0.5);
        assert_eq!(p.smoothing, 0.5);
        assert_eq!(p.min_length_mm, 3.0);
        assert_eq!(p.max_length_mm, 500.0);
        assert_eq!(p.tip_iterations, 1);
        assert_eq!(p.max_tracts, Some(2_235_858));
        p.validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            TrackingParams { step_mm: 0.0, ..Default::default() },
            TrackingParams { smoothing: 1.5, ..Default::default() },
            TrackingParams { min_length_mm: 600.0, ..Default::default() },
            TrackingParams { qa_threshold: f64::NAN, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn straight_streamline_spans_mask() {
        let f = straight(20);
        let seed = Vector3::new(10.0, 10.0, 10.0);
        let s = propagate(&f, &seed, &Vector3::x(), &TrackingParams::default()).unwrap();
        for w in s.points.windows(2) {
            assert!(((w[1] - w[0]).norm() - 0.5).abs() < 1e-6);
            assert!((w[1] - w[0]).normalize().dot(&Vector3::x()) > 1.0 - 1e-12);
        }
        // mask spans world x in [-0.5, 19.5)
        assert!((s.length() - 20.0).abs() <= 0.5 + 1e-9, "length {}", s.length());
        let (a, b) = s.endpoints().unwrap();
        assert!(a.x <= -0.5 + 0.5 + 1e-9 && b.x >= 19.5 - 0.5 - 1e-9);
    }

    #[test]
    fn seed_outside_mask_gives_nothing() {
        let f = straight(5);
        assert!(propagate(&f, &Vector3::new(10.0, 0.0, 0.0), &Vector3::x(), &TrackingParams::default()).is_none());
    }

    #[test]
    fn short_corridor_fails_length_gate() {
        let f = straight(10);
        let corridor = Volume::from_fn(f.grid().clone(), VolumeKind::Mask, |[x, y, z]| {
            if (4..6).contains(&x) && y == 5 && z == 5 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let f = f.restricted_to(&corridor).unwrap();
        let seed = f.grid().voxel_to_world([4, 5, 5]);
        assert!(propagate(&f, &seed, &Vector3::x(), &TrackingParams::default()).is_none());
        let lenient = TrackingParams { min_length_mm: 1.0, ..Default::default() };
        assert!(propagate(&f, &seed, &Vector3::x(), &lenient).is_some());
    }

    #[test]
    fn max_length_caps_both_legs_together() {
        let f = straight(30);
        let p = TrackingParams { max_length_mm: 10.0, ..Default::default() };
        let s = propagate(&f, &Vector3::new(15.0, 5.0, 5.0), &Vector3::x(), &p).unwrap();
        assert_eq!(s.len(), 21);
        assert!((s.length() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn whole_brain_one_streamline_per_voxel() {
        let f = straight(6);
        let t = track_whole_brain(&f, &TrackingParams::default());
        assert_eq!(t.len(), 216);
    }

    #[test]
    fn cap_keeps_first_in_enumeration_order() {
        let f = straight(6);
        let all = track_whole_brain(&f, &TrackingParams::default());
        let capped = track_whole_brain(&f, &TrackingParams { max_tracts: Some(5), ..Default::default() });
        assert_eq!(capped.streamlines, all.streamlines[..5].to_vec());
        // lexicographic order: z varies fastest, so the first seeds share x = 0, y = 0
        assert_eq!(capped.streamlines[1].points.iter().filter(|p| p.z == 1.0).count(), capped.streamlines[1].len());
    }

    #[test]
    fn low_qa_gives_empty_tractogram() {
        let f = make_phantom(&PhantomSpec::straight([5; 3], [1.0; 3], Vector3::x(), 0.1)).unwrap();
        assert!(track_whole_brain(&f, &TrackingParams::default()).is_empty());
    }

    #[test]
    fn filter_roi_whole_and_empty() {
        let f = straight(6);
        let t = track_whole_brain(&f, &TrackingParams::default());
        let all = Volume::from_fn(f.grid().clone(), VolumeKind::Mask, |_| 1.0).unwrap();
        let none = Volume::zeros(f.grid().clone(), VolumeKind::Mask);
        assert_eq!(filter_roi(&t, &all), t);
        assert!(filter_roi(&t, &none).is_empty());
    }

    fn line(from: [f64; 3], to: [f64; 3], n: usize) -> Streamline {
        let a = Vector3::from(from);
        let b = Vector3::from(to);
        Streamline::new((0..n).map(|i| a + (b - a) * (i as f64 / (n - 1) as f64)).collect())
    }

    fn tractogram(lines: Vec<Streamline>, grid: &GridSpec) -> Tractogram {
        Tractogram::new(lines, grid.clone(), TrackingParams::default(), "fixture")
    }

    #[test]
    fn prune_zero_iterations_is_identity() {
        let g = GridSpec::with_voxel_size([10; 3], [1.0; 3]).unwrap();
        let t = tractogram(vec![line([0.0, 0.0, 0.0], [9.0, 0.0, 0.0], 19)], &g);
        let roi = Volume::zeros(g, VolumeKind::Mask);
        assert_eq!(prune_tip(&t, &roi, 0), t);
    }

    #[test]
    fn identical_pair_survives() {
        let g = GridSpec::with_voxel_size([10; 3], [1.0; 3]).unwrap();
        let s = line([0.0, 2.0, 2.0], [9.0, 2.0, 2.0], 19);
        let t = tractogram(vec![s.clone(), s], &g);
        let roi = Volume::zeros(g, VolumeKind::Mask);
        assert_eq!(prune_tip(&t, &roi, 3).len(), 2);
    }

    #[test]
    fn stray_removed_bundle_kept() {
        let g = GridSpec::with_voxel_size([10; 3], [1.0; 3]).unwrap();
        let mut lines: Vec<Streamline> = (0..4).map(|_| line([0.0, 2.0, 2.0], [9.0, 2.0, 2.0], 19)).collect();
        // crosses the bundle at (4, 2, 2) but otherwise runs through unvisited voxels
        lines.insert(2, line([4.0, 2.0, 0.0], [4.0, 2.0, 9.0], 19));
        let t = tractogram(lines, &g);
        let roi = Volume::from_fn(g.clone(), VolumeKind::Mask, |i| if i == [4, 2, 2] { 1.0 } else { 0.0 }).unwrap();
        let pruned = prune_tip(&t, &roi, 1);
        assert_eq!(pruned.len(), 4);
        assert!(pruned.streamlines.iter().all(|s| s.points[0].z == 2.0));
    }

    #[test]
    fn roi_protects_single_support_voxels() {
        let g = GridSpec::with_voxel_size([10; 3], [1.0; 3]).unwrap();
        let t = tractogram(vec![line([0.0, 5.0, 5.0], [9.0, 5.0, 5.0], 19)], &g);
        let row = Volume::from_fn(g.clone(), VolumeKind::Mask, |[_, y, z]| (y == 5 && z == 5) as u8 as f64).unwrap();
        assert_eq!(prune_tip(&t, &row, 1).len(), 1);
        let partial =
            Volume::from_fn(g, VolumeKind::Mask, |[x, y, z]| (x < 5 && y == 5 && z == 5) as u8 as f64).unwrap();
        assert!(prune_tip(&t, &partial, 1).is_empty());
    }
}
