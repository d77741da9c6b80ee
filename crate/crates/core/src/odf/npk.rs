//! `NPK1` peak-field container.
//!
//! Little-endian layout: magic `NPK1`, u32 version (1), u32 dims[3],
//! f32 voxel_size[3], f64 affine[16] (row-major), u32 K; then for every voxel
//! (x fastest) a u8 peak count followed by K slots of f32 dir[3] + f32 qa
//! (unused slots zeroed); then the brain mask as one u8 per voxel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix4, Vector3};

use super::{OdfField, Peak};
use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume, VolumeKind};

const MAGIC: &[u8; 4] = b"NPK1";
const VERSION: u32 = 1;
const FILE_UNIT_TOLERANCE: f64 = 1e-3;

pub fn save_field(field: &OdfField, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for d in grid.dims() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    for s in grid.voxel_size() {
        w.write_f32::<LittleEndian>(s as f32)?;
    }
    let a = grid.affine();
    for r in 0..4 {
        for c in 0..4 {
            w.write_f64::<LittleEndian>(a[(r, c)])?;
        }
    }
    let k = field.max_peaks();
    w.write_u32::<LittleEndian>(k as u32)?;
    for i in 0..grid.len() {
        let peaks = field.peaks(i);
        w.write_u8(peaks.len() as u8)?;
        for slot in 0..k {
            let (dir, qa) = peaks.get(slot).map_or(([0.0; 3], 0.0), |p| ([p.dir.x, p.dir.y, p.dir.z], p.qa));
            for c in dir {
                w.write_f32::<LittleEndian>(c as f32)?;
            }
            w.write_f32::<LittleEndian>(qa as f32)?;
        }
    }
    for &m in field.brain_mask().data() {
        w.write_u8(m as u8)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<OdfField> {
    let mut r = BufReader::new(File::open(path)?);
    read_field(&mut r).map_err(|e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => Error::format("NPK1 file truncated"),
        other => other,
    })
}

fn read_field(r: &mut impl Read) -> Result<OdfField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("bad NPK1 magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported NPK version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut voxel_size = [0f64; 3];
    for s in &mut voxel_size {
        *s = r.read_f32::<LittleEndian>()? as f64;
    }
    let mut affine = Matrix4::zeros();
    for row in 0..4 {
        for col in 0..4 {
            affine[(row, col)] = r.read_f64::<LittleEndian>()?;
        }
    }
    let grid = GridSpec::new(dims, affine)?;
    for (stored, derived) in voxel_size.iter().zip(grid.voxel_size()) {
        if (stored - derived).abs() > 1e-3 * derived.max(1.0) {
            return Err(Error::validation("voxel_size disagrees with the affine"));
        }
    }
    let k = r.read_u32::<LittleEndian>()? as usize;
    if k == 0 || k > u8::MAX as usize {
        return Err(Error::format(format!("peak slot count {k} out of range")));
    }

    let mut voxel_peaks = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let count = r.read_u8()? as usize;
        if count > k {
            return Err(Error::format(format!("voxel {i} claims {count} peaks with only {k} slots")));
        }
        let mut peaks = Vec::with_capacity(count);
        for slot in 0..k {
            let x = r.read_f32::<LittleEndian>()? as f64;
            let y = r.read_f32::<LittleEndian>()? as f64;
            let z = r.read_f32::<LittleEndian>()? as f64;
            let qa = r.read_f32::<LittleEndian>()? as f64;
            if slot >= count {
                continue;
            }
            let dir = Vector3::new(x, y, z);
            let norm = dir.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > FILE_UNIT_TOLERANCE {
                return Err(Error::validation(format!("voxel {i} peak {slot}: direction norm {norm} is not unit")));
            }
            peaks.push(Peak::new(dir / norm, qa));
        }
        voxel_peaks.push(peaks);
    }
    let mut mask = vec![0u8; grid.len()];
    r.read_exact(&mut mask)?;
    if mask.iter().any(|&m| m > 1) {
        return Err(Error::validation("brain mask bytes must be 0 or 1"));
    }
    let mask = Volume::new(grid.clone(), mask.into_iter().map(f64::from).collect(), VolumeKind::Mask)?;
    OdfField::new(grid, k, voxel_peaks, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odf::{make_phantom, PhantomSpec};

    fn assert_fields_close(a: &OdfField, b: &OdfField) {
        assert!(a.grid().same_grid(b.grid(), 0.0));
        assert_eq!(a.brain_mask(), b.brain_mask());
        for i in 0..a.grid().len() {
            let (pa, pb) = (a.peaks(i), b.peaks(i));
            assert_eq!(pa.len(), pb.len(), "voxel {i}");
            for (x, y) in pa.iter().zip(pb) {
                assert!((x.dir - y.dir).abs().max() < 1e-6);
                assert!((x.qa - y.qa).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn straight_phantom_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = make_phantom(&PhantomSpec::straight([4; 3], [1.0; 3], Vector3::x(), 0.5)).unwrap();
        let p = dir.path().join("f.npk");
        save_field(&f, &p).unwrap();
        assert_fields_close(&f, &load_field(&p).unwrap());
    }

    #[test]
    fn mixed_peak_counts_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::with_voxel_size([3, 2, 1], [1.5; 3]).unwrap();
        let peaks = (0..6)
            .map(|i| {
                let mut v = vec![Peak::new(Vector3::x(), 0.9)];
                if i % 2 == 0 {
                    v.push(Peak::new(Vector3::new(0.0, 0.6, 0.8), 0.4));
                }
                if i == 4 {
                    v.push(Peak::new(Vector3::z(), 0.3));
                }
                v
            })
            .collect();
        let mask = Volume::from_fn(grid.clone(), VolumeKind::Mask, |_| 1.0).unwrap();
        let f = OdfField::new(grid, 3, peaks, mask).unwrap();
        let p = dir.path().join("k3.npk");
        save_field(&f, &p).unwrap();
        let back = load_field(&p).unwrap();
        let counts: Vec<usize> = (0..6).map(|i| back.peaks(i).len()).collect();
        assert_eq!(counts, vec![2, 1, 2, 1, 3, 1]);
        assert_fields_close(&f, &back);
    }

    fn tiny_file(dir: [f32; 3]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend(MAGIC);
        b.write_u32::<LittleEndian>(1).unwrap();
        for _ in 0..3 {
            b.write_u32::<LittleEndian>(1).unwrap();
        }
        for _ in 0..3 {
            b.write_f32::<LittleEndian>(1.0).unwrap();
        }
        for r in 0..4 {
            for c in 0..4 {
                b.write_f64::<LittleEndian>(if r == c { 1.0 } else { 0.0 }).unwrap();
            }
        }
        b.write_u32::<LittleEndian>(1).unwrap();
        b.push(1);
        for c in dir {
            b.write_f32::<LittleEndian>(c).unwrap();
        }
        b.write_f32::<LittleEndian>(0.5).unwrap();
        b.push(1);
        b
    }

    #[test]
    fn zero_direction_is_validation_error() {
        assert!(read_field(&mut tiny_file([1.0, 0.0, 0.0]).as_slice()).is_ok());
        let err = read_field(&mut tiny_file([0.0, 0.0, 0.0]).as_slice()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut b = tiny_file([1.0, 0.0, 0.0]);
        b[0] = b'X';
        assert!(matches!(read_field(&mut b.as_slice()), Err(Error::Format(_))));
        let mut b = tiny_file([1.0, 0.0, 0.0]);
        b[4] = 2;
        assert!(matches!(read_field(&mut b.as_slice()), Err(Error::Format(_))));
    }
}
