//! Convex-hull volume of integer lattice points (voxel indices).
//!
//! Incremental hull with exact integer orientation tests, so coplanar and
//! collinear voxel configurations need no epsilon handling.

use std::collections::HashSet;

type P = [i64; 3];

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P, b: P) -> [i128; 3] {
    let (a, b) = (a.map(i128::from), b.map(i128::from));
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Six times the signed volume of tetrahedron (a, b, c, d); positive when d
/// lies on the side of (a, b, c) its right-hand normal points to.
fn orient(a: P, b: P, c: P, d: P) -> i128 {
    let n = cross(sub(b, a), sub(c, a));
    let w = sub(d, a).map(i128::from);
    n[0] * w[0] + n[1] * w[1] + n[2] * w[2]
}

/// Volume (in index units) of the convex hull of `points`; 0 when the points
/// are coplanar.
pub fn convex_hull_volume(points: &[P]) -> f64 {
    let mut pts: Vec<P> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 4 {
        return 0.0;
    }

    let a = pts[0];
    let Some(b) = pts.iter().copied().find(|&p| p != a) else { return 0.0 };
    let Some(c) = pts.iter().copied().find(|&p| cross(sub(b, a), sub(p, a)) != [0, 0, 0]) else {
        return 0.0;
    };
    let Some(d) = pts.iter().copied().find(|&p| orient(a, b, c, p) != 0) else {
        return 0.0;
    };

    let mut verts = vec![a, b, c, d];
    // faces are oriented so the interior is on the negative side
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for f in [[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]] {
        let opposite = (0..4).find(|v| !f.contains(v)).unwrap_or(0);
        if orient(verts[f[0]], verts[f[1]], verts[f[2]], verts[opposite]) > 0 {
            faces.push([f[0], f[2], f[1]]);
        } else {
            faces.push(f);
        }
    }

    for &p in &pts {
        if [a, b, c, d].contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| orient(verts[f[0]], verts[f[1]], verts[f[2]], p) > 0).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let new_index = verts.len();
        verts.push(p);
        let mut next = Vec::with_capacity(faces.len() + 4);
        for (f, &vis) in faces.iter().zip(&visible) {
            if !vis {
                next.push(*f);
                continue;
            }
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                if !edges.contains(&(v, u)) {
                    next.push([u, v, new_index]);
                }
            }
        }
        faces = next;
    }

    let origin = verts[0];
    let six_vol: i128 = faces.iter().map(|f| -orient(verts[f[0]], verts[f[1]], verts[f[2]], origin)).sum();
    six_vol as f64 / 6.0
}
