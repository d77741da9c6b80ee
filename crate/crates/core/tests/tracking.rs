use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use tractfeat::odf::make_phantom;
use tractfeat::tracking::{filter_roi, propagate, prune_tip, track_whole_brain};
use tractfeat::{OdfField, PhantomSpec, Streamline, TrackingParams, Volume, VolumeKind};

fn menger(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let twice_area = (b - a).cross(&(c - a)).norm();
    2.0 * twice_area / ((b - a).norm() * (c - b).norm() * (c - a).norm())
}

/// Algebraic least-squares circle through xy points; returns the radius.
fn fit_circle_radius(points: &[Vector3<f64>]) -> f64 {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for p in points {
        let row = Vector3::new(p.x, p.y, 1.0);
        a += row * row.transpose();
        b -= row * (p.x * p.x + p.y * p.y);
    }
    let s = a.lu().solve(&b).expect("non-degenerate fit");
    let (cx, cy) = (-s.x / 2.0, -s.y / 2.0);
    (cx * cx + cy * cy - s.z).sqrt()
}

fn arc_field(half_width: f64) -> (OdfField, Vector3<f64>) {
    let field = make_phantom(&PhantomSpec::arc_xy([48, 48, 5], [1.0; 3], 20.0, half_width, 1.0)).unwrap();
    (field, Vector3::new(23.5, 23.5, 2.0))
}

/// Seeds in the middle slice whose centre lies within half a voxel of the ring.
fn ring_seeds(field: &OdfField, center: &Vector3<f64>) -> Vec<[usize; 3]> {
    field
        .brain_mask()
        .nonzero_indices()
        .map(|i| field.grid().unravel(i))
        .filter(|idx| idx[2] == 2)
        .filter(|&idx| ((field.grid().voxel_to_world(idx) - center).xy().norm() - 20.0).abs() <= 0.5)
        .collect()
}

fn track_from(field: &OdfField, idx: [usize; 3], params: &TrackingParams) -> Streamline {
    let seed = field.grid().voxel_to_world(idx);
    propagate(field, &seed, &field.peaks_at(idx)[0].dir, params).expect("ring seed tracks")
}

#[test]
fn straight_phantom_spans_the_mask() {
    let field = make_phantom(&PhantomSpec::straight([20, 3, 3], [1.0; 3], Vector3::x(), 1.0)).unwrap();
    let idx = [10, 1, 1];
    let seed = field.grid().voxel_to_world(idx);
    let s = propagate(&field, &seed, &Vector3::x(), &TrackingParams::default()).unwrap();
    for w in s.points.windows(2) {
        let d = w[1] - w[0];
        assert!((d.norm() - 0.5).abs() < 1e-6);
        assert!((d.normalize() - Vector3::x()).norm() < 1e-9);
    }
    // centres span 0..19; containment reaches -0.5 and 19.5 exclusive of rounding up
    assert!((s.length() - 19.5).abs() <= 0.5 + 1e-9, "length {}", s.length());
}

#[test]
fn arc_curvature_matches_radius() {
    let params = TrackingParams { smoothing: 0.0, ..Default::default() };
    for hw in [1.0, 1.5, 2.0] {
        let (field, center) = arc_field(hw);
        let seeds = ring_seeds(&field, &center);
        assert!(!seeds.is_empty());
        for idx in seeds {
            let s = track_from(&field, idx, &params);
            let kappa = 1.0 / fit_circle_radius(&s.points);
            assert!((kappa - 0.05).abs() <= 0.05 * 0.05, "hw {hw} seed {idx:?}: curvature {kappa}");
        }
    }
}

#[test]
fn smoothed_arc_turns_at_the_local_radius() {
    let (field, center) = arc_field(2.0);
    let params = TrackingParams::default();
    for idx in ring_seeds(&field, &center) {
        let s = track_from(&field, idx, &params);
        let seed = field.grid().voxel_to_world(idx);
        let si = s.points.iter().position(|p| *p == seed).unwrap();
        // skip the start-up of each leg and the last steps near the mask edge
        let n = s.points.len();
        let mut rel = Vec::new();
        for i in 1..n - 1 {
            if i.abs_diff(si) < 8 || i < 8 || i + 8 >= n {
                continue;
            }
            let r = (s.points[i] - center).xy().norm();
            let k = menger(&s.points[i - 1], &s.points[i], &s.points[i + 1]);
            rel.push((k * r - 1.0).abs());
        }
        rel.sort_by(f64::total_cmp);
        let median = rel[rel.len() / 2];
        assert!(median < 0.02, "seed {idx:?}: median deviation {median}");
    }
}

#[test]
fn min_length_rejects_a_short_corridor() {
    let field = make_phantom(&PhantomSpec::straight([2, 1, 1], [1.0; 3], Vector3::x(), 1.0)).unwrap();
    let t = track_whole_brain(&field, &TrackingParams::default());
    assert!(t.is_empty());
}

fn crossing_field(n: usize, hw: f64, ht: f64) -> OdfField {
    make_phantom(&PhantomSpec::crossing([n; 3], [1.0; 3], Vector3::x(), Vector3::y(), hw, ht, 1.0)).unwrap()
}

#[test]
fn filter_matches_brute_force_column() {
    let field = crossing_field(16, 2.0, 2.0);
    let t = track_whole_brain(&field, &TrackingParams::default());
    let roi = Volume::from_fn(field.grid().clone(), VolumeKind::Mask, |[x, y, z]| {
        f64::from(x == 8 && (6..=9).contains(&y) && (6..=9).contains(&z))
    })
    .unwrap();
    let kept = filter_roi(&t, &roi);
    let expected: Vec<&Streamline> = t
        .streamlines
        .iter()
        .filter(|s| {
            s.points.iter().any(|p| {
                let v = field.grid().world_to_voxel(p);
                let [x, y, z] = [v.x, v.y, v.z].map(|c| (c + 0.5).floor());
                x == 8.0 && (6.0..=9.0).contains(&y) && (6.0..=9.0).contains(&z)
            })
        })
        .collect();
    assert!(!expected.is_empty());
    assert_eq!(kept.streamlines.iter().collect::<Vec<_>>(), expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tracked_streamlines_hold_invariants(
        n in 8usize..14,
        hw in 1.0f64..3.0,
        ht in 1.0f64..3.0,
        smoothing in 0.0f64..1.0,
        angle in 30.0f64..90.0,
    ) {
        let field = crossing_field(n, hw, ht);
        let params = TrackingParams { smoothing, angular_threshold_deg: angle, ..Default::default() };
        let t = track_whole_brain(&field, &params);
        let again = track_whole_brain(&field, &params);
        prop_assert_eq!(&t, &again);

        let cos = angle.to_radians().cos();
        let [nx, ny, nz] = field.grid().dims();
        for s in &t.streamlines {
            prop_assert!(s.length() >= params.min_length_mm - 1e-9);
            for w in s.points.windows(2) {
                prop_assert!(((w[1] - w[0]).norm() - 0.5).abs() < 1e-6);
            }
            for w in s.points.windows(3) {
                let a = (w[1] - w[0]).normalize();
                let b = (w[2] - w[1]).normalize();
                prop_assert!(a.dot(&b) >= cos - 1e-9);
            }
            for p in &s.points {
                prop_assert!(field.contains(p));
                prop_assert!(p.x >= -0.5 && p.y >= -0.5 && p.z >= -0.5);
                prop_assert!(p.x < nx as f64 && p.y < ny as f64 && p.z < nz as f64);
            }
        }

        let roi = Volume::from_fn(field.grid().clone(), VolumeKind::Mask, |[x, _, _]| f64::from(x == n / 2)).unwrap();
        let kept = filter_roi(&t, &roi);
        prop_assert!(kept.streamlines.iter().all(|s| t.streamlines.contains(s)));

        let pruned = prune_tip(&kept, &roi, 50);
        prop_assert!(pruned.streamlines.iter().all(|s| kept.streamlines.contains(s)));
        prop_assert_eq!(prune_tip(&pruned, &roi, 50), pruned);
    }
}
