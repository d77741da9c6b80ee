//! Synthetic peak fields with known geometry.

use nalgebra::Vector3;

use super::{OdfField, Peak};
use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume, VolumeKind};

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomGeometry {
    /// Every voxel holds one peak along `axis`.
    Straight { axis: Vector3<f64> },
    /// Concentric-circle tangents in the plane through `center` with normal
    /// `normal`; the mask is the ring `|r - radius| <= half_width`,
    /// `|offset along normal| <= half_thickness`.
    Arc { center: Vector3<f64>, radius: f64, normal: Vector3<f64>, half_width: f64, half_thickness: f64 },
    /// Two slabs through the grid centre, one along each axis. Voxels in the
    /// overlap carry both peaks.
    Crossing { axis_a: Vector3<f64>, axis_b: Vector3<f64>, half_width: f64, half_thickness: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub qa_value: f64,
    pub geometry: PhantomGeometry,
}

impl PhantomSpec {
    pub fn straight(dims: [usize; 3], voxel_size: [f64; 3], axis: Vector3<f64>, qa_value: f64) -> Self {
        PhantomSpec { dims, voxel_size, qa_value, geometry: PhantomGeometry::Straight { axis } }
    }

    /// Ring of the given radius in the xy-plane, centred on the grid.
    pub fn arc_xy(dims: [usize; 3], voxel_size: [f64; 3], radius: f64, half_width: f64, qa_value: f64) -> Self {
        let center = grid_center(dims, voxel_size);
        PhantomSpec {
            dims,
            voxel_size,
            qa_value,
            geometry: PhantomGeometry::Arc {
                center,
                radius,
                normal: Vector3::z(),
                half_width,
                half_thickness: f64::INFINITY,
            },
        }
    }

    pub fn crossing(
        dims: [usize; 3],
        voxel_size: [f64; 3],
        axis_a: Vector3<f64>,
        axis_b: Vector3<f64>,
        half_width: f64,
        half_thickness: f64,
        qa_value: f64,
    ) -> Self {
        PhantomSpec {
            dims,
            voxel_size,
            qa_value,
            geometry: PhantomGeometry::Crossing { axis_a, axis_b, half_width, half_thickness },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::validation("phantom dims must be positive"));
        }
        if self.voxel_size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::validation("phantom voxel sizes must be positive"));
        }
        if !(self.qa_value > 0.0 && self.qa_value.is_finite()) {
            return Err(Error::validation("qa_value must be positive"));
        }
        let max_voxel = self.voxel_size.iter().copied().fold(0.0, f64::max);
        match &self.geometry {
            PhantomGeometry::Straight { axis } => nonzero(axis, "axis"),
            PhantomGeometry::Arc { radius, normal, half_width, half_thickness, .. } => {
                nonzero(normal, "normal")?;
                if !radius.is_finite() || *radius <= max_voxel {
                    return Err(Error::validation(format!(
                        "arc radius {radius} must exceed the voxel size {max_voxel}"
                    )));
                }
                if !positive(*half_width) || !positive(*half_thickness) {
                    return Err(Error::validation("arc half_width and half_thickness must be positive"));
                }
                Ok(())
            }
            PhantomGeometry::Crossing { axis_a, axis_b, half_width, half_thickness } => {
                nonzero(axis_a, "axis_a")?;
                nonzero(axis_b, "axis_b")?;
                if axis_a.normalize().cross(&axis_b.normalize()).norm() < 1e-6 {
                    return Err(Error::validation("crossing axes must not be parallel"));
                }
                if !positive(*half_width) || !positive(*half_thickness) {
                    return Err(Error::validation("crossing half_width and half_thickness must be positive"));
                }
                Ok(())
            }
        }
    }
}

fn nonzero(v: &Vector3<f64>, what: &str) -> Result<()> {
    if v.norm() > 1e-12 && v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be a nonzero finite vector")))
    }
}

fn grid_center(dims: [usize; 3], voxel_size: [f64; 3]) -> Vector3<f64> {
    Vector3::new(
        (dims[0] as f64 - 1.0) * 0.5 * voxel_size[0],
        (dims[1] as f64 - 1.0) * 0.5 * voxel_size[1],
        (dims[2] as f64 - 1.0) * 0.5 * voxel_size[2],
    )
}

fn positive(v: f64) -> bool {
    v > 0.0
}

/// Generates the phantom on an axis-aligned grid whose first voxel centre is
/// the world origin.
pub fn make_phantom(spec: &PhantomSpec) -> Result<OdfField> {
    spec.validate()?;
    let grid = GridSpec::with_voxel_size(spec.dims, spec.voxel_size)?;
    let qa = spec.qa_value;
    let grid_mid = grid_center(spec.dims, spec.voxel_size);

    let peaks_for = |p: Vector3<f64>| -> Vec<Peak> {
        match &spec.geometry {
            PhantomGeometry::Straight { axis } => vec![Peak::new(axis.normalize(), qa)],
            PhantomGeometry::Arc { center, radius, normal, half_width, half_thickness } => {
                let n = normal.normalize();
                let rel = p - center;
                let along = rel.dot(&n);
                let in_plane = rel - along * n;
                let r = in_plane.norm();
                if along.abs() > *half_thickness || (r - radius).abs() > *half_width || r < 1e-9 {
                    return Vec::new();
                }
                vec![Peak::new(n.cross(&in_plane).normalize(), qa)]
            }
            PhantomGeometry::Crossing { axis_a, axis_b, half_width, half_thickness } => {
                let a = axis_a.normalize();
                let b = axis_b.normalize();
                let n = a.cross(&b).normalize();
                let rel = p - grid_mid;
                let thick = rel.dot(&n).abs() <= *half_thickness;
                // in-plane offsets perpendicular to each bundle
                let perp_a = n.cross(&a);
                let perp_b = n.cross(&b);
                let mut out = Vec::new();
                if thick && rel.dot(&perp_a).abs() <= *half_width {
                    out.push(Peak::new(a, qa));
                }
                if thick && rel.dot(&perp_b).abs() <= *half_width {
                    out.push(Peak::new(b, qa));
                }
                out
            }
        }
    };

    let voxel_peaks: Vec<Vec<Peak>> =
        (0..grid.len()).map(|i| peaks_for(grid.voxel_to_world(grid.unravel(i)))).collect();
    let mask = Volume::new(
        grid.clone(),
        voxel_peaks.iter().map(|p| if p.is_empty() { 0.0 } else { 1.0 }).collect(),
        VolumeKind::Mask,
    )?;
    let max_peaks = if matches!(spec.geometry, PhantomGeometry::Crossing { .. }) { 2 } else { 1 };
    OdfField::new(grid, max_peaks, voxel_peaks, mask)
}
