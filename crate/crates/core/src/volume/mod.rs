//! Three-dimensional voxel grids with an affine voxel → world (mm) mapping.
//!
//! Data is stored with x varying fastest, matching the on-disk NIfTI order.

mod nifti;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

pub use self::nifti::{load_volume, save_volume};

/// Geometry of a voxel grid without any data attached.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: [usize; 3],
    voxel_size: [f64; 3],
    affine: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl GridSpec {
    /// Builds a grid from its dimensions and voxel → world affine. Voxel sizes
    /// are the column norms of the affine's linear part.
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape(format!("grid dimensions must be positive, got {dims:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("affine contains non-finite entries"));
        }
        let bottom = affine.row(3);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(Error::validation("affine bottom row must be [0 0 0 1]"));
        }
        let linear: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
        if linear.determinant().abs() < 1e-12 {
            return Err(Error::validation("affine is not invertible"));
        }
        let inverse = affine.try_inverse().ok_or_else(|| Error::validation("affine is not invertible"))?;
        let voxel_size = [linear.column(0).norm(), linear.column(1).norm(), linear.column(2).norm()];
        Ok(GridSpec { dims, voxel_size, affine, inverse })
    }

    /// Axis-aligned grid with the first voxel centre at the world origin.
    pub fn with_voxel_size(dims: [usize; 3], voxel_size: [f64; 3]) -> Result<Self> {
        if voxel_size.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::validation(format!("voxel sizes must be positive, got {voxel_size:?}")));
        }
        let affine = Matrix4::from_diagonal(&Vector4::new(voxel_size[0], voxel_size[1], voxel_size[2], 1.0));
        Self::new(dims, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn inverse_affine(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one voxel in mm³ (absolute determinant of the linear part).
    pub fn voxel_volume(&self) -> f64 {
        self.affine.fixed_view::<3, 3>(0, 0).determinant().abs()
    }

    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn unravel(&self, linear: usize) -> [usize; 3] {
        let x = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World coordinate of a voxel centre.
    pub fn voxel_to_world(&self, idx: [usize; 3]) -> Vector3<f64> {
        self.continuous_to_world(&Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64))
    }

    /// World coordinate of a fractional voxel index.
    pub fn continuous_to_world(&self, idx: &Vector3<f64>) -> Vector3<f64> {
        let h = self.affine * Vector4::new(idx.x, idx.y, idx.z, 1.0);
        Vector3::new(h.x, h.y, h.z)
    }

    /// Fractional voxel index of a world point.
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = self.inverse * Vector4::new(p.x, p.y, p.z, 1.0);
        Vector3::new(h.x, h.y, h.z)
    }

    /// Index of the voxel whose extent contains `p`, if it lies on the grid.
    pub fn containing_voxel(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let v = self.world_to_voxel(p);
        self.round_index(&v)
    }

    pub(crate) fn round_index(&self, v: &Vector3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let r = (v[axis] + 0.5).floor();
            if !(r >= 0.0 && r < self.dims[axis] as f64) {
                return None;
            }
            out[axis] = r as usize;
        }
        Some(out)
    }

    /// True when both grids have the same dims and affines agree within `tol`.
    pub fn same_grid(&self, other: &GridSpec, tol: f64) -> bool {
        self.dims == other.dims && self.affine.iter().zip(other.affine.iter()).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// What the voxel values of a volume mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    Scalar,
    /// Non-negative integer region labels; 0 is background.
    Label,
    /// Binary {0, 1}.
    Mask,
}

/// A 3-D image on a [`GridSpec`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: GridSpec,
    data: Vec<f64>,
    kind: VolumeKind,
}

impl Volume {
    pub fn new(grid: GridSpec, data: Vec<f64>, kind: VolumeKind) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::shape(format!(
                "data length {} does not match grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("volume contains non-finite values"));
        }
        match kind {
            VolumeKind::Mask if data.iter().any(|&v| v != 0.0 && v != 1.0) => {
                return Err(Error::validation("mask volumes may only contain 0 and 1"));
            }
            VolumeKind::Label if data.iter().any(|&v| v < 0.0 || v.fract() != 0.0) => {
                return Err(Error::validation("label volumes may only contain non-negative integers"));
            }
            _ => {}
        }
        Ok(Volume { grid, data, kind })
    }

    pub fn zeros(grid: GridSpec, kind: VolumeKind) -> Self {
        let data = vec![0.0; grid.len()];
        Volume { grid, data, kind }
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(grid: GridSpec, kind: VolumeKind, mut f: impl FnMut([usize; 3]) -> f64) -> Result<Self> {
        let data = (0..grid.len()).map(|i| f(grid.unravel(i))).collect();
        Self::new(grid, data, kind)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.data[self.grid.linear_index(idx)]
    }

    /// Value of the voxel containing `p`, or 0 off-grid.
    pub fn value_at_world(&self, p: &Vector3<f64>) -> f64 {
        self.grid.containing_voxel(p).map_or(0.0, |idx| self.get(idx))
    }

    pub fn voxel_to_world(&self, idx: [usize; 3]) -> Vector3<f64> {
        self.grid.voxel_to_world(idx)
    }

    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.grid.world_to_voxel(p)
    }

    /// Binarises: every nonzero voxel becomes 1.
    pub fn to_mask(&self) -> Volume {
        let data = self.data.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
        Volume { grid: self.grid.clone(), data, kind: VolumeKind::Mask }
    }

    /// Reinterprets the volume as a label image, validating the values.
    pub fn to_label(&self) -> Result<Volume> {
        Volume::new(self.grid.clone(), self.data.clone(), VolumeKind::Label)
    }

    /// Linear indices of all nonzero voxels in storage order.
    pub fn nonzero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Nearest-neighbour resampling of `src` onto `target`. Voxels whose centre
/// maps outside `src` are 0.
pub fn resample_nearest(src: &Volume, target: &GridSpec) -> Volume {
    let to_src = src.grid.inverse_affine() * target.affine();
    let data = (0..target.len())
        .map(|i| {
            let [x, y, z] = target.unravel(i);
            let h = to_src * Vector4::new(x as f64, y as f64, z as f64, 1.0);
            src.grid.round_index(&Vector3::new(h.x, h.y, h.z)).map_or(0.0, |idx| src.get(idx))
        })
        .collect();
    Volume { grid: target.clone(), data, kind: src.kind }
}
