use endorecon::core::{DepthKind, DepthMap, PointCloud, Raster};
use endorecon::npy::{self, NpyArray};
use endorecon::{images, ply, report};
use proptest::prelude::*;

fn raster(w: usize, h: usize, values: Vec<f64>) -> Raster<f64> {
    Raster::from_vec(w, h, values).unwrap()
}

fn sized_values(max_side: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        (Just(w), Just(h), prop::collection::vec(any::<f64>(), w * h))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn npy_files_round_trip_bit_exactly((w, h, values) in sized_values(12)) {
        let dir = tempfile::tempdir().unwrap();
        let r = raster(w, h, values);
        let path = dir.path().join("a.npy");

        npy::write_npy(&path, &NpyArray::from_raster_f64(&r)).unwrap();
        let back = npy::read_npy(&path).unwrap().to_raster();
        prop_assert_eq!(back.shape(), (w, h));
        for (a, b) in back.as_slice().iter().zip(r.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        npy::write_npy(&path, &NpyArray::from_raster_f32(&r)).unwrap();
        let back = npy::read_npy(&path).unwrap().to_raster();
        for (a, b) in back.as_slice().iter().zip(r.as_slice()) {
            prop_assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
    }

    #[test]
    fn depth_png_round_trips_within_half_a_unit(
        (w, h, values) in (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..600.0], w * h))
        }),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let unit = 0.01;
        let map = DepthMap::new(raster(w, h, values.clone()), DepthKind::Depth);
        images::write_depth_png16(&path, &map, unit).unwrap();
        let back = images::read_depth_png(&path, unit).unwrap();
        for (i, v) in values.iter().enumerate() {
            let (u, y) = (i % w, i / w);
            let stored = (v / unit).round();
            prop_assert_eq!(back.is_valid(u, y), stored > 0.0);
            if stored > 0.0 {
                prop_assert!((back.values.at(u, y) - v).abs() <= unit / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn ply_files_keep_nine_significant_digits(
        pts in prop::collection::vec(prop::array::uniform3(-1e4f64..1e4), 1..50),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud::from_arrays(&pts);
        ply::write_ply(&path, &cloud).unwrap();
        let back = ply::read_ply(&path).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        for (a, b) in back.points.iter().zip(&cloud.points) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-8 * b[k].abs());
            }
        }
    }
}

#[test]
fn rgb_depth_png_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    images::write_rgb(&path, &Raster::filled(3, 2, [1u8, 2, 3])).unwrap();
    let err = images::read_depth_png(&path, 1.0).unwrap_err();
    assert!(err.to_string().contains("grayscale"), "{err}");
}

#[test]
fn eight_bit_depth_png_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g8.png");
    images::write_gray8(&path, &Raster::from_vec(2, 1, vec![0u8, 200]).unwrap()).unwrap();
    let map = images::read_depth_png(&path, 0.5).unwrap();
    assert!(!map.is_valid(0, 0));
    assert_eq!(map.values.at(1, 0), 100.0);
}

#[test]
fn npy_file_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.npy");
    std::fs::write(&path, b"\x93NUMPY\x01\x00\x10\x00{'descr': '<f8'").unwrap();
    let err = npy::read_npy(&path).unwrap_err().to_string();
    assert!(err.contains("broken.npy"), "{err}");
    assert!(err.contains("malformed header") || err.contains("truncated"), "{err}");
}

#[test]
fn heatmap_files_share_one_range() {
    let dir = tempfile::tempdir().unwrap();
    let heat = Raster::from_vec(3, 1, vec![0.0, 0.5, 2.0]).unwrap();
    let written = report::write_heatmap(dir.path(), "h", &heat).unwrap();
    assert_eq!(written.len(), 3);
    let range: report::HeatmapRange = report::read_json(&dir.path().join("h.json")).unwrap();
    assert_eq!((range.min, range.max), (0.0, 2.0));
    let raw = npy::read_npy(&dir.path().join("h.npy")).unwrap().to_raster();
    assert_eq!(raw.as_slice(), heat.as_slice());
    let gray = images::read_depth_png(&dir.path().join("h.png"), 1.0).unwrap();
    assert_eq!(gray.values.as_slice(), &[0.0, 64.0, 255.0]);
}
