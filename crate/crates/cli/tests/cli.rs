use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{Matrix4, Vector3, Vector4};
use tractfeat::odf::{load_field, make_phantom, save_field};
use tractfeat::tracking::{read_trk, track_whole_brain, write_trk};
use tractfeat::volume::save_volume;
use tractfeat::{GridSpec, PhantomSpec, Streamline, TrackingParams, Tractogram, Volume, VolumeKind};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tractfeat")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn phantom_straight_has_one_peak_per_voxel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.npk");
    let o = run(&["phantom", "--kind", "straight", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let field = load_field(&out).unwrap();
    assert_eq!(field.brain_mask().count_nonzero(), 1000);
    assert!(String::from_utf8_lossy(&o.stdout).contains("voxels_in_mask\t1000"));
}

#[test]
fn phantom_rejects_zero_radius() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["phantom", "--kind", "arc", "--radius", "0", "--out", p(&dir.path().join("a.npk"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radius"));
}

#[test]
fn track_full_brain_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let field =
        make_phantom(&PhantomSpec::crossing([16; 3], [1.0; 3], Vector3::x(), Vector3::y(), 3.0, 3.0, 1.0)).unwrap();
    let fp = dir.path().join("f.npk");
    save_field(&field, &fp).unwrap();
    let out = dir.path().join("out");
    let o = run(&["track", "--field", p(&fp), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trk = read_trk(out.join("tracts.trk")).unwrap();
    let expected = track_whole_brain(&field, &TrackingParams::default());
    assert_eq!(trk.streamlines.len(), expected.len());
    let summary = fs::read_to_string(out.join("tracts_summary.txt")).unwrap();
    assert!(summary.contains(&format!("count = {}", expected.len())), "{summary}");
}

#[test]
fn track_empty_lesion_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let field = make_phantom(&PhantomSpec::straight([8; 3], [1.0; 3], Vector3::x(), 1.0)).unwrap();
    let fp = dir.path().join("f.npk");
    save_field(&field, &fp).unwrap();
    let lp = dir.path().join("empty.nii.gz");
    save_volume(&Volume::zeros(field.grid().clone(), VolumeKind::Mask), &lp).unwrap();
    let out = dir.path().join("out");
    let o = run(&["track", "--field", p(&fp), "--lesion", p(&lp), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("WARN"));
    assert!(read_trk(out.join("tracts.trk")).unwrap().streamlines.is_empty());

    let o = run(&["--strict", "track", "--field", p(&fp), "--lesion", p(&lp), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn track_missing_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.npk");
    let o = run(&["track", "--field", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.npk"));
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(run(&["track", "--bogus"]).status.code(), Some(2));
}

/// Two regions side by side along x; three tracts cross between them, one
/// stays in region 1, one ends on background.
fn two_region_fixture(dir: &Path) {
    let grid = GridSpec::new([6, 2, 2], Matrix4::from_diagonal(&Vector4::new(2.0, 2.0, 2.0, 1.0))).unwrap();
    let atlas = Volume::from_fn(grid.clone(), VolumeKind::Label, |[x, _, _]| match x {
        0..=2 => 1.0,
        3 | 4 => 2.0,
        _ => 0.0,
    })
    .unwrap();
    save_volume(&atlas, dir.join("atlas.nii.gz")).unwrap();
    fs::create_dir_all(dir.join("lesions")).unwrap();
    // lesion covers the x = 2 and x = 3 slabs: 4 voxels of 8 mm³ in each region
    let lesion =
        Volume::from_fn(grid.clone(), VolumeKind::Mask, |[x, _, _]| f64::from(u8::from(x == 2 || x == 3))).unwrap();
    save_volume(&lesion, dir.join("lesions").join("subj.nii.gz")).unwrap();

    let line = |x0: f64, x1: f64| {
        let n = ((x1 - x0).abs() / 0.5).round() as usize;
        Streamline::new((0..=n).map(|k| Vector3::new(x0 + (x1 - x0) * k as f64 / n as f64, 1.0, 1.0)).collect())
    };
    let t = Tractogram::new(
        vec![line(0.0, 8.0), line(1.0, 7.5), line(8.5, 2.0), line(0.5, 4.0), line(4.0, 10.0)],
        grid,
        TrackingParams::default(),
        "fixture",
    );
    write_trk(&t, dir.join("whole.trk")).unwrap();
}

#[test]
fn features_two_region_chain_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    two_region_fixture(d);
    let config = "[paths]\natlas = \"atlas.nii.gz\"\nlesion_dir = \"lesions\"\ntractogram = \"whole.trk\"\n[tracking]\ntip_iterations = 0\n";
    fs::write(d.join("run.toml"), config).unwrap();
    let out1 = d.join("o1");
    let out2 = d.join("o2");
    for out in [&out1, &out2] {
        let o = run(&["--config", p(&d.join("run.toml")), "features", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(out1.join("features.tsv")).unwrap();
    assert_eq!(a, fs::read(out2.join("features.tsv")).unwrap());

    // ends: (1,2), (1,2), (2,1), (1,1), (2,bg) → d11 = 1, d12 = d21 = 3, d22 = 0
    // D̂ = [[1/3, 1], [1, 0]]; L = [4/3, 1]; γ = [32, 32] mm³ → T = [128/3, 32]
    let table = tractfeat::features::read_feature_table(out1.join("features.tsv")).unwrap();
    let t_cols = table.columns_of(tractfeat::FeatureKind::Tractographic);
    let t: Vec<f64> = t_cols.iter().map(|&c| table.rows[0][c]).collect();
    assert!((t[0] - 128.0 / 3.0).abs() < 1e-12 && (t[1] - 32.0).abs() < 1e-12, "{t:?}");
    let disruption = fs::read_to_string(out1.join("disruption").join("subj.tsv")).unwrap();
    assert_eq!(disruption, "label\t1\t2\n1\t1\t3\n2\t3\t0\n");
}

fn write_table(path: &Path, ids: &[&str], values: &[f64]) {
    let mut s = String::from("subject_id\tvol\n");
    for (id, v) in ids.iter().zip(values) {
        s.push_str(&format!("{id}\t{v}\n"));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn evaluate_perfect_feature_and_window() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ids: Vec<String> = (0..20).map(|i| format!("s{i:02}")).collect();
    let grades: Vec<u8> = (0..20).map(|i| (i % 5) as u8).collect();
    // `late` is outside the 80-100 day window and its value would break the perfect fit
    let mut id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    id_refs.push("late");
    let mut values: Vec<f64> = grades.iter().map(|&g| f64::from(g) * 10.0).collect();
    values.push(0.0);
    write_table(&d.join("f.tsv"), &id_refs, &values);
    let mut clinical = String::from("subject_id\tmRS\tdays_to_mRS\n");
    for (id, g) in ids.iter().zip(&grades) {
        clinical.push_str(&format!("{id}\t{g}\t90\n"));
    }
    clinical.push_str("late\t4\t200\n");
    fs::write(d.join("c.tsv"), clinical).unwrap();
    let out = d.join("eval");
    let o = run(&[
        "evaluate",
        "--features",
        p(&d.join("f.tsv")),
        "--clinical",
        p(&d.join("c.tsv")),
        "--out",
        p(&out),
        "--kinds",
        "volumetric",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = fs::read_to_string(out.join("comparison.tsv")).unwrap();
    assert!(cmp.contains("volumetric\t1\t0\t0\t1"), "{cmp}");
    let report = fs::read_to_string(out.join("report_volumetric.tsv")).unwrap();
    assert_eq!(report.lines().count(), 21);
}

#[test]
fn evaluate_names_missing_subject() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_table(&d.join("f.tsv"), &["a", "b", "ghost"], &[1.0, 2.0, 3.0]);
    fs::write(d.join("c.tsv"), "subject_id\tmRS\tdays_to_mRS\na\t1\t90\nb\t2\t90\n").unwrap();
    let o = run(&[
        "evaluate",
        "--features",
        p(&d.join("f.tsv")),
        "--clinical",
        p(&d.join("c.tsv")),
        "--out",
        p(&d.join("e")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ghost"));
}
