//! TrackVis `.trk` (version 2) output and a plain-text tractogram summary.
//!
//! Points are written in TrackVis "voxmm" space, `(voxel index + 0.5) *
//! voxel_size`, with the grid affine stored as `vox_to_ras`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix4, Vector3};

use super::{Streamline, Tractogram};
use crate::error::{Error, Result};
use crate::volume::GridSpec;

const HDR_SIZE: usize = 1000;

/// Contents of a TRK file: reference geometry and streamlines in world mm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrkFile {
    pub grid: GridSpec,
    pub streamlines: Vec<Streamline>,
}

fn voxel_order(affine: &Matrix4<f64>) -> [u8; 4] {
    let mut out = [0u8; 4];
    for (col, slot) in out.iter_mut().take(3).enumerate() {
        let column = [affine[(0, col)], affine[(1, col)], affine[(2, col)]];
        let axis = (0..3).max_by(|&a, &b| column[a].abs().total_cmp(&column[b].abs())).unwrap_or(col);
        let positive = column[axis] >= 0.0;
        *slot = match (axis, positive) {
            (0, true) => b'R',
            (0, false) => b'L',
            (1, true) => b'A',
            (1, false) => b'P',
            (2, true) => b'S',
            _ => b'I',
        };
    }
    out
}

pub fn write_trk(t: &Tractogram, path: impl AsRef<Path>) -> Result<()> {
    let grid = &t.grid;
    let dims = grid.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::Unsupported("grid too large for a TRK header".into()));
    }
    let vs = grid.voxel_size();
    let mut h = [0u8; HDR_SIZE];
    h[0..5].copy_from_slice(b"TRACK");
    for (i, &d) in dims.iter().enumerate() {
        LittleEndian::write_i16(&mut h[6 + 2 * i..8 + 2 * i], d as i16);
    }
    for (i, &s) in vs.iter().enumerate() {
        LittleEndian::write_f32(&mut h[12 + 4 * i..16 + 4 * i], s as f32);
    }
    let a = grid.affine();
    for r in 0..4 {
        for c in 0..4 {
            let off = 440 + 16 * r + 4 * c;
            LittleEndian::write_f32(&mut h[off..off + 4], a[(r, c)] as f32);
        }
    }
    h[948..952].copy_from_slice(&voxel_order(a));
    LittleEndian::write_i32(&mut h[988..992], t.len() as i32);
    LittleEndian::write_i32(&mut h[992..996], 2);
    LittleEndian::write_i32(&mut h[996..1000], HDR_SIZE as i32);

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&h)?;
    for s in &t.streamlines {
        w.write_i32::<LittleEndian>(s.len() as i32)?;
        for p in &s.points {
            let v = grid.world_to_voxel(p);
            for axis in 0..3 {
                w.write_f32::<LittleEndian>(((v[axis] + 0.5) * vs[axis]) as f32)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trk(path: impl AsRef<Path>) -> Result<TrkFile> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = [0u8; HDR_SIZE];
    r.read_exact(&mut h).map_err(|_| Error::format("TRK header truncated"))?;
    if &h[0..5] != b"TRACK" {
        return Err(Error::format("missing TRACK id string"));
    }
    if LittleEndian::read_i32(&h[996..1000]) != HDR_SIZE as i32 {
        return Err(Error::format("TRK hdr_size is not 1000 (big-endian files are not supported)"));
    }
    let dims = [0, 1, 2].map(|i| LittleEndian::read_i16(&h[6 + 2 * i..8 + 2 * i]).max(0) as usize);
    let n_scalars = LittleEndian::read_i16(&h[36..38]).max(0) as usize;
    let n_properties = LittleEndian::read_i16(&h[238..240]).max(0) as usize;
    let mut affine = Matrix4::zeros();
    for row in 0..4 {
        for col in 0..4 {
            let off = 440 + 16 * row + 4 * col;
            affine[(row, col)] = LittleEndian::read_f32(&h[off..off + 4]) as f64;
        }
    }
    let grid = if affine[(3, 3)] == 0.0 {
        let vs = [0, 1, 2].map(|i| LittleEndian::read_f32(&h[12 + 4 * i..16 + 4 * i]) as f64);
        GridSpec::with_voxel_size(dims, vs)?
    } else {
        GridSpec::new(dims, affine)?
    };
    let vs = grid.voxel_size();
    let declared = LittleEndian::read_i32(&h[988..992]);

    let mut streamlines = Vec::new();
    loop {
        let n = match r.read_i32::<LittleEndian>() {
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if n < 0 {
            return Err(Error::format("negative point count in TRK body"));
        }
        let mut points = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let mut v = Vector3::zeros();
            for axis in 0..3 {
                let mm = r.read_f32::<LittleEndian>().map_err(|_| Error::format("TRK body truncated"))? as f64;
                v[axis] = mm / vs[axis] - 0.5;
            }
            for _ in 0..n_scalars {
                r.read_f32::<LittleEndian>().map_err(|_| Error::format("TRK body truncated"))?;
            }
            points.push(grid.continuous_to_world(&v));
        }
        for _ in 0..n_properties {
            r.read_f32::<LittleEndian>().map_err(|_| Error::format("TRK body truncated"))?;
        }
        streamlines.push(Streamline::new(points));
    }
    if declared > 0 && declared as usize != streamlines.len() {
        return Err(Error::format(format!(
            "TRK header declares {declared} streamlines, body holds {}",
            streamlines.len()
        )));
    }
    Ok(TrkFile { grid, streamlines })
}

/// Writes `key = value` lines: streamline count, length statistics and the
/// tracking provenance.
pub fn write_summary(t: &Tractogram, path: impl AsRef<Path>) -> Result<()> {
    let lengths: Vec<f64> = t.streamlines.iter().map(Streamline::length).collect();
    let n = lengths.len();
    let (mean, std, min, max) = if n == 0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let mean = lengths.iter().sum::<f64>() / n as f64;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64;
        let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let max = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, var.sqrt(), min, max)
    };
    let p = &t.params;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "field = {:?}", t.field_id)?;
    writeln!(w, "count = {n}")?;
    writeln!(w, "length_mean_mm = {mean}")?;
    writeln!(w, "length_std_mm = {std}")?;
    writeln!(w, "length_min_mm = {min}")?;
    writeln!(w, "length_max_mm = {max}")?;
    writeln!(w, "total_length_mm = {}", lengths.iter().sum::<f64>())?;
    writeln!(w, "qa_threshold = {}", p.qa_threshold)?;
    writeln!(w, "angular_threshold_deg = {}", p.angular_threshold_deg)?;
    writeln!(w, "step_mm = {}", p.step_mm)?;
    writeln!(w, "smoothing = {}", p.smoothing)?;
    writeln!(w, "min_length_mm = {}", p.min_length_mm)?;
    writeln!(w, "max_length_mm = {}", p.max_length_mm)?;
    writeln!(w, "tip_iterations = {}", p.tip_iterations)?;
    match p.max_tracts {
        Some(m) => writeln!(w, "max_tracts = {m}")?,
        None => writeln!(w, "max_tracts = \"none\"")?,
    }
    w.flush()?;
    Ok(())
}
