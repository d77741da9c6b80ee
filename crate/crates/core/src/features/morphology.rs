//! Shape descriptors of a binary lesion mask.
//!
//! Output order: major axis, minor axis, major/minor ratio, solidity,
//! roundness (sphericity), surface area. Axis lengths are `4 * sqrt(lambda)`
//! of the second-moment tensor of the lesion treated as solid voxels
//! (voxel-centre covariance plus each voxel's own `s^2 / 12` moment), so a
//! one-voxel-thick lesion still has a finite minor axis.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::hull::convex_hull_volume;
use super::{require_mask, FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::volume::Volume;

pub fn morphological_feature(lesion: &Volume) -> Result<FeatureVector> {
    require_mask(lesion)?;
    let grid = lesion.grid();
    let voxels: Vec<[usize; 3]> = lesion.nonzero_indices().map(|i| grid.unravel(i)).collect();
    if voxels.is_empty() {
        return Err(Error::degenerate("empty lesion has no shape"));
    }
    let n = voxels.len() as f64;
    let linear: Matrix3<f64> = grid.affine().fixed_view::<3, 3>(0, 0).into_owned();
    let voxel_volume = grid.voxel_volume();
    let volume = n * voxel_volume;

    let centres: Vec<Vector3<f64>> = voxels.iter().map(|&idx| grid.voxel_to_world(idx)).collect();
    let mean = centres.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for c in &centres {
        let d = c - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    cov += linear * Matrix3::from_diagonal_element(1.0 / 12.0) * linear.transpose();
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let lambda_max = eig.max().max(0.0);
    let lambda_min = eig.min().max(0.0);
    let major = 4.0 * lambda_max.sqrt();
    let minor = 4.0 * lambda_min.sqrt();
    let ratio = if minor > 1e-12 { major / minor } else { 0.0 };

    let lattice: Vec<[i64; 3]> = hull_candidates(&voxels);
    let hull = convex_hull_volume(&lattice) * voxel_volume;
    let solidity = if hull > 0.0 { (volume / hull).min(1.0) } else { 1.0 };

    let surface = exposed_face_area(lesion, &linear);
    let roundness = PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / surface;

    Ok(FeatureVector::new(FeatureKind::Morphological, vec![major, minor, ratio, solidity, roundness, surface]))
}

/// Per (y, z) row only the two extreme voxels can be hull vertices.
fn hull_candidates(voxels: &[[usize; 3]]) -> Vec<[i64; 3]> {
    let mut rows: std::collections::BTreeMap<(usize, usize), (usize, usize)> = Default::default();
    for &[x, y, z] in voxels {
        rows.entry((y, z))
            .and_modify(|(lo, hi)| {
                *lo = (*lo).min(x);
                *hi = (*hi).max(x);
            })
            .or_insert((x, x));
    }
    rows.into_iter()
        .flat_map(|((y, z), (lo, hi))| [[lo as i64, y as i64, z as i64], [hi as i64, y as i64, z as i64]])
        .collect()
}

/// Voxel faces shared with background (or the grid edge), in mm².
fn exposed_face_area(lesion: &Volume, linear: &Matrix3<f64>) -> f64 {
    let grid = lesion.grid();
    let dims = grid.dims();
    let face_area = [
        linear.column(1).cross(&linear.column(2)).norm(),
        linear.column(0).cross(&linear.column(2)).norm(),
        linear.column(0).cross(&linear.column(1)).norm(),
    ];
    let filled = |idx: [usize; 3]| lesion.get(idx) != 0.0;
    let mut area = 0.0;
    for i in lesion.nonzero_indices() {
        let idx = grid.unravel(i);
        for axis in 0..3 {
            for up in [false, true] {
                let neighbour = if up {
                    (idx[axis] + 1 < dims[axis]).then(|| {
                        let mut n = idx;
                        n[axis] += 1;
                        n
                    })
                } else {
                    (idx[axis] > 0).then(|| {
                        let mut n = idx;
                        n[axis] -= 1;
                        n
                    })
                };
                if !neighbour.is_some_and(filled) {
                    area += face_area[axis];
                }
            }
        }
    }
    area
}
