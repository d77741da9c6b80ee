//! NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Only little-endian, 3-D images are accepted. Gzip is detected from the
//! stream's magic bytes, not the file extension.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4};

use super::{GridSpec, Volume, VolumeKind};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

const INTENT_LABEL: i16 = 1002;
const MASK_INTENT_NAME: &[u8] = b"mask";

/// Reads a NIfTI-1 volume. Voxel values are promoted to `f64` with
/// `scl_slope`/`scl_inter` applied when the slope is nonzero.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let mut raw = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut raw)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        out
    } else {
        raw
    };
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(format!("file too short for a NIfTI-1 header ({} bytes)", bytes.len())));
    }
    let h = &bytes[..HEADER_SIZE];
    let i16_at = |off: usize| LittleEndian::read_i16(&h[off..off + 2]);
    let f32_at = |off: usize| LittleEndian::read_f32(&h[off..off + 4]) as f64;

    if LittleEndian::read_i32(&h[0..4]) != HEADER_SIZE as i32 {
        return Err(Error::format("sizeof_hdr is not 348 (big-endian or not NIfTI-1)"));
    }
    if &h[344..348] != MAGIC {
        return Err(Error::format("missing \"n+1\" magic"));
    }

    let ndim = i16_at(40);
    let dim: Vec<i16> = (0..8).map(|i| i16_at(40 + 2 * i)).collect();
    // trailing singleton dimensions are tolerated
    let extra_axes = (4..=ndim.clamp(0, 7) as usize).any(|i| dim[i] > 1);
    if !(3..=7).contains(&ndim) || extra_axes {
        return Err(Error::shape(format!("expected a 3-D image, header declares {ndim} dimensions")));
    }
    let dims = [1, 2, 3].map(|i| dim[i].max(0) as usize);
    if dims.contains(&0) {
        return Err(Error::format(format!("non-positive dimension in {dims:?}")));
    }

    let datatype = i16_at(70);
    let elem = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
    };

    let pixdim: Vec<f64> = (0..8).map(|i| f32_at(76 + 4 * i)).collect();
    let vox_offset = f32_at(108);
    let slope = f32_at(112);
    let inter = f32_at(116);
    let qform_code = i16_at(252);
    let sform_code = i16_at(254);
    let intent_code = i16_at(68);
    let intent_name = &h[328..344];

    let affine = if sform_code > 0 {
        let mut a = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                a[(r, c)] = f32_at(280 + 16 * r + 4 * c);
            }
        }
        a
    } else if qform_code > 0 {
        qform_affine([f32_at(256), f32_at(260), f32_at(264)], [f32_at(268), f32_at(272), f32_at(276)], &pixdim)
    } else {
        let spacing = |i: usize| if pixdim[i] > 0.0 { pixdim[i] } else { 1.0 };
        let mut a = Matrix4::identity();
        a[(0, 0)] = spacing(1);
        a[(1, 1)] = spacing(2);
        a[(2, 2)] = spacing(3);
        a
    };
    let grid = GridSpec::new(dims, affine)?;

    let offset = if vox_offset >= HEADER_SIZE as f64 { vox_offset as usize } else { DATA_OFFSET };
    let n = grid.len();
    let payload = bytes
        .get(offset..offset + n * elem)
        .ok_or_else(|| Error::format(format!("voxel data truncated: need {} bytes at offset {offset}", n * elem)))?;
    let mut data: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f64).collect(),
        DT_INT16 => payload.chunks_exact(2).map(|c| LittleEndian::read_i16(c) as f64).collect(),
        DT_INT32 => payload.chunks_exact(4).map(|c| LittleEndian::read_i32(c) as f64).collect(),
        DT_FLOAT32 => payload.chunks_exact(4).map(|c| LittleEndian::read_f32(c) as f64).collect(),
        _ => payload.chunks_exact(8).map(LittleEndian::read_f64).collect(),
    };
    if slope != 0.0 && slope.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    let kind = if intent_name.starts_with(MASK_INTENT_NAME) && intent_name[MASK_INTENT_NAME.len()] == 0 {
        VolumeKind::Mask
    } else if intent_code == INTENT_LABEL {
        VolumeKind::Label
    } else {
        VolumeKind::Scalar
    };
    Volume::new(grid, data, kind)
}

/// Affine from the quaternion representation of the header.
fn qform_affine(q: [f64; 3], offset: [f64; 3], pixdim: &[f64]) -> Matrix4<f64> {
    let [b, c, d] = q;
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let rot = Matrix3::new(
        a * a + b * b - c * c - d * d,
        2.0 * (b * c - a * d),
        2.0 * (b * d + a * c),
        2.0 * (b * c + a * d),
        a * a + c * c - b * b - d * d,
        2.0 * (c * d - a * b),
        2.0 * (b * d - a * c),
        2.0 * (c * d + a * b),
        a * a + d * d - b * b - c * c,
    );
    let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let spacing = |i: usize| if pixdim[i] > 0.0 { pixdim[i] } else { 1.0 };
    let scale = [spacing(1), spacing(2), spacing(3) * qfac];
    let mut out = Matrix4::identity();
    for r in 0..3 {
        for col in 0..3 {
            out[(r, col)] = rot[(r, col)] * scale[col];
        }
        out[(r, 3)] = offset[r];
    }
    out
}

/// Writes `v` as NIfTI-1. Label and mask volumes are stored as int32,
/// scalars as float32. A `.gz` extension selects gzip compression.
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(v);
    let file = BufWriter::new(File::create(path)?);
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(&bytes)?;
        file.flush()?;
    }
    Ok(())
}

fn encode(v: &Volume) -> Vec<u8> {
    let grid = v.grid();
    let integer = v.kind() != VolumeKind::Scalar;
    let (datatype, bitpix) = if integer { (DT_INT32, 32) } else { (DT_FLOAT32, 32) };

    let mut h = vec![0u8; DATA_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, x: i16| LittleEndian::write_i16(&mut h[off..off + 2], x);
    let put_f32 = |h: &mut [u8], off: usize, x: f64| LittleEndian::write_f32(&mut h[off..off + 4], x as f32);

    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let dims = grid.dims();
    put_i16(&mut h, 40, 3);
    for (i, &d) in dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * i, d as i16);
    }
    for i in 4..8 {
        put_i16(&mut h, 40 + 2 * i, 1);
    }
    if v.kind() == VolumeKind::Label {
        put_i16(&mut h, 68, INTENT_LABEL);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    for (i, &s) in grid.voxel_size().iter().enumerate() {
        put_f32(&mut h, 80 + 4 * i, s);
    }
    put_f32(&mut h, 108, DATA_OFFSET as f64);
    put_f32(&mut h, 112, 1.0);
    // mm, no time unit
    h[123] = 2;
    put_i16(&mut h, 254, 1);
    let a = grid.affine();
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut h, 280 + 16 * r + 4 * c, a[(r, c)]);
        }
    }
    if v.kind() == VolumeKind::Mask {
        h[328..328 + MASK_INTENT_NAME.len()].copy_from_slice(MASK_INTENT_NAME);
    }
    h[344..348].copy_from_slice(MAGIC);

    h.reserve(v.data().len() * 4);
    for &x in v.data() {
        if integer {
            h.write_i32::<LittleEndian>(x as i32).expect("write to Vec");
        } else {
            h.write_f32::<LittleEndian>(x as f32).expect("write to Vec");
        }
    }
    h
}
