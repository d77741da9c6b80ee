//! Normative fibre-orientation field: per-voxel peak directions with their
//! quantitative anisotropy (QA), plus direction interpolation for tracking.

mod npk;
mod phantom;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume, VolumeKind};

pub use self::npk::{load_field, save_field};
pub use self::phantom::{make_phantom, PhantomGeometry, PhantomSpec};

/// One orientation peak. Peaks are axes: `dir` and `-dir` are equivalent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub dir: Vector3<f64>,
    pub qa: f64,
}

impl Peak {
    pub fn new(dir: Vector3<f64>, qa: f64) -> Self {
        Peak { dir, qa }
    }
}

const UNIT_TOLERANCE: f64 = 1e-6;

/// Peak field on a grid, with up to `max_peaks` peaks per voxel sorted by
/// descending QA.
#[derive(Debug, Clone, PartialEq)]
pub struct OdfField {
    grid: GridSpec,
    max_peaks: usize,
    counts: Vec<u8>,
    slots: Vec<Peak>,
    brain_mask: Volume,
}

impl OdfField {
    /// Builds a field from per-voxel peak lists (in storage order).
    pub fn new(grid: GridSpec, max_peaks: usize, voxel_peaks: Vec<Vec<Peak>>, brain_mask: Volume) -> Result<Self> {
        if max_peaks == 0 || max_peaks > u8::MAX as usize {
            return Err(Error::validation(format!("max_peaks must be in 1..=255, got {max_peaks}")));
        }
        if voxel_peaks.len() != grid.len() {
            return Err(Error::shape(format!("{} peak lists for a grid of {} voxels", voxel_peaks.len(), grid.len())));
        }
        if brain_mask.kind() != VolumeKind::Mask || !brain_mask.grid().same_grid(&grid, 1e-9) {
            return Err(Error::validation("brain mask must be a mask volume on the field grid"));
        }
        let empty = Peak::new(Vector3::zeros(), 0.0);
        let mut counts = Vec::with_capacity(grid.len());
        let mut slots = Vec::with_capacity(grid.len() * max_peaks);
        for (i, mut peaks) in voxel_peaks.into_iter().enumerate() {
            if peaks.len() > max_peaks {
                return Err(Error::validation(format!(
                    "voxel {i} holds {} peaks, more than max_peaks={max_peaks}",
                    peaks.len()
                )));
            }
            for p in &peaks {
                if !p.qa.is_finite() || p.qa < 0.0 {
                    return Err(Error::validation(format!("voxel {i}: qa must be finite and non-negative")));
                }
                if (p.dir.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::validation(format!(
                        "voxel {i}: peak direction norm {} is not unit",
                        p.dir.norm()
                    )));
                }
            }
            peaks.sort_by(|a, b| b.qa.total_cmp(&a.qa));
            counts.push(peaks.len() as u8);
            slots.extend(peaks.iter().copied());
            slots.extend(std::iter::repeat_n(empty, max_peaks - peaks.len()));
        }
        Ok(OdfField { grid, max_peaks, counts, slots, brain_mask })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn max_peaks(&self) -> usize {
        self.max_peaks
    }

    pub fn brain_mask(&self) -> &Volume {
        &self.brain_mask
    }

    /// Peaks of the voxel at linear index `i`, strongest first.
    pub fn peaks(&self, i: usize) -> &[Peak] {
        let start = i * self.max_peaks;
        &self.slots[start..start + self.counts[i] as usize]
    }

    pub fn peaks_at(&self, idx: [usize; 3]) -> &[Peak] {
        self.peaks(self.grid.linear_index(idx))
    }

    pub fn in_mask(&self, idx: [usize; 3]) -> bool {
        self.brain_mask.get(idx) != 0.0
    }

    /// True if the point falls in a brain-mask voxel.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.grid.containing_voxel(p).is_some_and(|idx| self.in_mask(idx))
    }

    /// Returns a copy of this field restricted to `mask` (voxels outside lose
    /// their peaks).
    pub fn restricted_to(&self, mask: &Volume) -> Result<OdfField> {
        if !mask.grid().same_grid(&self.grid, 1e-9) {
            return Err(Error::validation("restriction mask must share the field grid"));
        }
        let mask = mask.to_mask();
        let peaks = (0..self.grid.len())
            .map(|i| if mask.data()[i] != 0.0 { self.peaks(i).to_vec() } else { Vec::new() })
            .collect();
        OdfField::new(self.grid.clone(), self.max_peaks, peaks, mask)
    }

    /// Trilinear direction interpolation at a world point.
    ///
    /// Each of the eight neighbouring voxels contributes its peak best aligned
    /// with `prev_dir` (among peaks with `qa >= qa_threshold`), flipped into
    /// `prev_dir`'s hemisphere. Returns `None` to signal termination: no
    /// neighbour qualifies, the blended QA drops below the threshold, the
    /// turn exceeds `angular_threshold_deg`, or the point is off-grid.
    pub fn interpolate_direction(
        &self,
        point: &Vector3<f64>,
        prev_dir: &Vector3<f64>,
        qa_threshold: f64,
        angular_threshold_deg: f64,
    ) -> Option<(Vector3<f64>, f64)> {
        let v = self.grid.world_to_voxel(point);
        let dims = self.grid.dims();
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..3 {
            if !(v[axis] >= -0.5 && v[axis] <= dims[axis] as f64 - 0.5) {
                return None;
            }
            let f = v[axis].floor();
            base[axis] = f as i64;
            frac[axis] = v[axis] - f;
        }

        let mut dir_acc = Vector3::zeros();
        let mut qa_acc = 0.0;
        let mut any = false;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            let mut inside = true;
            for axis in 0..3 {
                let hi = (corner >> axis) & 1 == 1;
                w *= if hi { frac[axis] } else { 1.0 - frac[axis] };
                let c = base[axis] + hi as i64;
                if c < 0 || c >= dims[axis] as i64 {
                    inside = false;
                }
                idx[axis] = c.max(0) as usize;
            }
            if w == 0.0 || !inside {
                continue;
            }
            let Some((dir, qa)) = best_aligned(self.peaks_at(idx), prev_dir, qa_threshold) else {
                continue;
            };
            dir_acc += w * dir;
            qa_acc += w * qa;
            any = true;
        }
        if !any || qa_acc < qa_threshold {
            return None;
        }
        let norm = dir_acc.norm();
        if norm <= f64::EPSILON {
            return None;
        }
        let dir = dir_acc / norm;
        if prev_dir.dot(&dir) < angular_threshold_deg.to_radians().cos() {
            return None;
        }
        Some((dir, qa_acc))
    }
}

/// The qualifying peak with the largest |cos| to `reference`, sign-aligned.
fn best_aligned(peaks: &[Peak], reference: &Vector3<f64>, qa_threshold: f64) -> Option<(Vector3<f64>, f64)> {
    let mut best: Option<(f64, &Peak)> = None;
    for p in peaks.iter().filter(|p| p.qa >= qa_threshold) {
        let cos = p.dir.dot(reference);
        if best.is_none_or(|(b, _)| cos.abs() > b.abs()) {
            best = Some((cos, p));
        }
    }
    best.map(|(cos, p)| (if cos < 0.0 { -p.dir } else { p.dir }, p.qa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_x(n: usize, qa: f64) -> OdfField {
        make_phantom(&PhantomSpec::straight([n; 3], [1.0; 3], Vector3::x(), qa)).unwrap()
    }

    #[test]
    fn constant_field_is_fixed_point() {
        let f = uniform_x(6, 0.8);
        let (d, qa) = f.interpolate_direction(&Vector3::new(2.3, 1.7, 3.1), &Vector3::x(), 0.15958, 90.0).unwrap();
        assert_abs_diff_eq!(d, Vector3::x(), epsilon = 1e-12);
        assert_abs_diff_eq!(qa, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn antipodal_prev_dir_flips_result() {
        let f = uniform_x(6, 0.8);
        let (d, _) = f.interpolate_direction(&Vector3::new(2.5, 2.5, 2.5), &(-Vector3::x()), 0.15958, 90.0).unwrap();
        assert_abs_diff_eq!(d, -Vector3::x(), epsilon = 1e-12);
    }

    #[test]
    fn threshold_above_field_terminates() {
        let f = uniform_x(6, 0.1);
        assert!(f.interpolate_direction(&Vector3::new(2.5, 2.5, 2.5), &Vector3::x(), 0.15958, 90.0).is_none());
    }

    #[test]
    fn off_grid_terminates() {
        let f = uniform_x(4, 1.0);
        assert!(f.interpolate_direction(&Vector3::new(-0.6, 1.0, 1.0), &Vector3::x(), 0.1, 90.0).is_none());
        assert!(f.interpolate_direction(&Vector3::new(1.0, 3.6, 1.0), &Vector3::x(), 0.1, 90.0).is_none());
        assert!(f.interpolate_direction(&Vector3::new(3.4, 1.0, 1.0), &Vector3::x(), 0.1, 90.0).is_some());
    }

    #[test]
    fn perpendicular_turn_rejected_by_angle() {
        let f = uniform_x(4, 1.0);
        let prev = Vector3::new(1.0, 1.0, 0.0).normalize();
        assert!(f.interpolate_direction(&Vector3::new(1.5, 1.5, 1.5), &prev, 0.1, 30.0).is_none());
        assert!(f.interpolate_direction(&Vector3::new(1.5, 1.5, 1.5), &prev, 0.1, 46.0).is_some());
    }

    #[test]
    fn voxel_centre_returns_best_aligned_peak() {
        let grid = GridSpec::with_voxel_size([3, 3, 3], [1.0; 3]).unwrap();
        let a = Vector3::new(1.0, 0.2, 0.0).normalize();
        let b = Vector3::new(0.1, 1.0, 0.3).normalize();
        let peaks = (0..27).map(|_| vec![Peak::new(a, 0.9), Peak::new(b, 0.5)]).collect();
        let mask = Volume::from_fn(grid.clone(), VolumeKind::Mask, |_| 1.0).unwrap();
        let f = OdfField::new(grid, 2, peaks, mask).unwrap();
        let centre = Vector3::new(1.0, 1.0, 1.0);
        let (d, qa) = f.interpolate_direction(&centre, &(-Vector3::y()), 0.1, 90.0).unwrap();
        assert_abs_diff_eq!(d, -b, epsilon = 1e-12);
        assert_eq!(qa, 0.5);
        // raising the threshold removes the weaker peak
        let (d, _) = f.interpolate_direction(&centre, &(-Vector3::y()), 0.6, 90.0).unwrap();
        assert_abs_diff_eq!(d, -a, epsilon = 1e-12);
    }

    #[test]
    fn peaks_sorted_by_descending_qa() {
        let grid = GridSpec::with_voxel_size([1, 1, 1], [1.0; 3]).unwrap();
        let mask = Volume::from_fn(grid.clone(), VolumeKind::Mask, |_| 1.0).unwrap();
        let f = OdfField::new(
            grid,
            3,
            vec![vec![Peak::new(Vector3::x(), 0.2), Peak::new(Vector3::y(), 0.7), Peak::new(Vector3::z(), 0.4)]],
            mask,
        )
        .unwrap();
        let qas: Vec<f64> = f.peaks(0).iter().map(|p| p.qa).collect();
        assert_eq!(qas, vec![0.7, 0.4, 0.2]);
    }

    #[test]
    fn non_unit_direction_rejected() {
        let grid = GridSpec::with_voxel_size([1, 1, 1], [1.0; 3]).unwrap();
        let mask = Volume::from_fn(grid.clone(), VolumeKind::Mask, |_| 1.0).unwrap();
        let err = OdfField::new(grid, 1, vec![vec![Peak::new(Vector3::new(0.5, 0.0, 0.0), 1.0)]], mask);
        assert!(matches!(err, Err(Error::Validation(_))));
    }
}
