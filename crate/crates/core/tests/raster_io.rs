use std::fs;

use nsci_cd::raster::{
    decode_raster, load_mask, load_raster, save_mask, save_raster, to_intensity, BinaryMask, MultibandRaster, Scaling,
};
use nsci_cd::Error;
use proptest::prelude::*;

fn raster(w: usize, h: usize, b: usize, data: Vec<f64>) -> MultibandRaster {
    MultibandRaster::new(w, h, b, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raw_float_round_trip_is_bit_exact(samples in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 16 * 16 * 9)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.sdf");
        let r = raster(16, 16, 9, samples.iter().map(|&v| v as f64).collect());
        save_raster(&r, &path, Scaling::RawFloat).unwrap();
        let back = load_raster(&path).unwrap();
        prop_assert_eq!((back.width(), back.height(), back.bands()), (16, 16, 9));
        for (a, b) in r.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn eight_bit_formats_round_trip(
        (w, h, b, data) in (1usize..7, 1usize..7, 1usize..5).prop_flat_map(|(w, h, b)| {
            (Just(w), Just(h), Just(b), prop::collection::vec(0u8..=255, w * h * b))
        })
    ) {
        let dir = tempfile::tempdir().unwrap();
        let r = raster(w, h, b, data.iter().map(|&v| v as f64).collect());
        let mut exts = vec!["tif", "sdf"];
        if b == 1 {
            exts.push("pgm");
        }
        if b <= 4 {
            exts.push("png");
        }
        for ext in exts {
            let path = dir.path().join(format!("x.{ext}"));
            save_raster(&r, &path, Scaling::ClampTo8Bit).unwrap();
            let back = load_raster(&path).unwrap();
            prop_assert_eq!(&back, &r, "{}", ext);
        }
    }

    #[test]
    fn intensity_is_idempotent(data in prop::collection::vec(-1e3f64..1e3, 4 * 3 * 3)) {
        let r = raster(4, 3, 3, data);
        let once = to_intensity(&r);
        prop_assert_eq!(to_intensity(&once), once);
    }
}

#[test]
fn tiny_pgm_decodes_literally() {
    let bytes = [b"P5\n2 2\n255\n".as_slice(), &[0, 128, 255, 64]].concat();
    let r = decode_raster(&bytes).unwrap();
    assert_eq!((r.width(), r.height(), r.bands()), (2, 2, 1));
    assert_eq!(r.data(), &[0.0, 128.0, 255.0, 64.0]);
}

#[test]
fn sixteen_bit_pgm_keeps_depth() {
    let bytes = [b"P5 2 1 65535\n".as_slice(), &[0x12, 0x34, 0xff, 0xff]].concat();
    assert_eq!(decode_raster(&bytes).unwrap().data(), &[4660.0, 65535.0]);
}

#[test]
fn zeros_clamp_to_black_and_normalize_spans_range() {
    let dir = tempfile::tempdir().unwrap();
    let black = dir.path().join("black.png");
    save_raster(&MultibandRaster::zeros(3, 3, 1), &black, Scaling::ClampTo8Bit).unwrap();
    assert!(load_raster(&black).unwrap().data().iter().all(|&v| v == 0.0));

    let unit = raster(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]);
    let stretched = dir.path().join("unit.pgm");
    save_raster(&unit, &stretched, Scaling::NormalizeTo8Bit).unwrap();
    assert_eq!(load_raster(&stretched).unwrap().data(), &[0.0, 64.0, 128.0, 255.0]);
}

#[test]
fn truncated_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let r = raster(8, 8, 3, (0..192).map(|v| v as f64).collect());
    for ext in ["sdf", "png", "tif"] {
        let path = dir.path().join(format!("full.{ext}"));
        save_raster(&r, &path, Scaling::ClampTo8Bit).unwrap();
        let bytes = fs::read(&path).unwrap();
        let cut = dir.path().join(format!("cut.{ext}"));
        fs::write(&cut, &bytes[..bytes.len() * 2 / 3]).unwrap();
        match load_raster(&cut) {
            Err(Error::Io { path, .. }) => assert_eq!(path, cut),
            other => panic!("{ext}: expected an I/O error, got {other:?}"),
        }
    }
}

#[test]
fn unwritable_path_and_unknown_extension() {
    let r = MultibandRaster::zeros(2, 2, 1);
    assert!(matches!(
        save_raster(&r, "/nonexistent-dir/x.png", Scaling::ClampTo8Bit),
        Err(Error::Io { .. })
    ));
    assert!(matches!(
        save_raster(&r, "x.jpg", Scaling::ClampTo8Bit),
        Err(Error::Format(_))
    ));
    assert!(matches!(decode_raster(b"GIF89a"), Err(Error::Format(_))));
}

#[test]
fn mask_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pgm");
    save_raster(&raster(3, 1, 1, vec![0.0, 100.0, 200.0]), &path, Scaling::ClampTo8Bit).unwrap();
    assert_eq!(load_mask(&path, Some(127.5)).unwrap().labels(), &[0, 0, 1]);
    // default threshold is half the maximum, 100, and the rule is strict
    assert_eq!(load_mask(&path, None).unwrap().labels(), &[0, 0, 1]);

    let zeros = dir.path().join("z.png");
    save_raster(&MultibandRaster::zeros(4, 4, 1), &zeros, Scaling::ClampTo8Bit).unwrap();
    assert_eq!(load_mask(&zeros, None).unwrap().count_changed(), 0);

    let mask = BinaryMask::from_fn(5, 4, |x, y| x == y);
    let saved = dir.path().join("mask.png");
    save_mask(&mask, &saved).unwrap();
    assert_eq!(load_mask(&saved, None).unwrap(), mask);

    let rgb = dir.path().join("rgb.png");
    save_raster(&MultibandRaster::zeros(2, 2, 3), &rgb, Scaling::ClampTo8Bit).unwrap();
    assert!(matches!(load_mask(&rgb, None), Err(Error::Format(_))));
}
