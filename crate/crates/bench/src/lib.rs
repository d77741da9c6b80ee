//! Fixtures shared by the benchmarks.

use nalgebra::Vector3;
use tractfeat::odf::make_phantom;
use tractfeat::{Dataset, OdfField, PhantomSpec};

/// Crossing x/y slabs on an `n`³ 1 mm grid, each slab `n/2` voxels thick.
pub fn crossing_field(n: usize) -> OdfField {
    let hw = n as f64 / 4.0;
    make_phantom(&PhantomSpec::crossing([n; 3], [1.0; 3], Vector3::x(), Vector3::y(), hw, hw, 1.0))
        .expect("valid phantom")
}

/// `m` subjects, `d` dimensions; the target follows the first column.
pub fn dataset(m: usize, d: usize) -> Dataset {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let x: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| next() * 4.0).collect()).collect();
    let y = x.iter().map(|r| r[0].floor().min(4.0) as u8).collect();
    let names = (0..d).map(|i| format!("f{i}")).collect();
    let ids = (0..m).map(|i| format!("s{i:03}")).collect();
    Dataset::new(x, y, names, ids).expect("valid dataset")
}
