use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use nsci_cd_ffi::*;

fn last_error() -> String {
    let p = nsci_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn gradient_image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> *mut NsciRaster {
    let data: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| f(x, y))
        .collect();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { nsci_raster_new(w, h, 1, data.as_ptr(), &mut out) },
        NsciStatus::Ok
    );
    out
}

fn texture(x: usize, y: usize) -> f64 {
    let (x, y) = (x as f64, y as f64);
    100.0 + 40.0 * (0.7 * x + 0.3 * y).sin() + 30.0 * (0.2 * x - 0.9 * y).cos()
}

#[test]
fn raster_round_trip_and_dims() {
    let r = gradient_image(5, 4, |x, y| (x + 10 * y) as f64);
    let (mut w, mut h, mut b) = (0, 0, 0);
    unsafe {
        assert_eq!(nsci_raster_dims(r, &mut w, &mut h, &mut b), NsciStatus::Ok);
        assert_eq!((w, h, b), (5, 4, 1));
        let mut buf = vec![0.0; 20];
        assert_eq!(nsci_raster_copy_data(r, buf.as_mut_ptr(), 20), NsciStatus::Ok);
        assert_eq!(buf[7], 12.0);
        assert_eq!(nsci_raster_copy_data(r, buf.as_mut_ptr(), 19), NsciStatus::Shape);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("r.sdf").to_str().unwrap()).unwrap();
        assert_eq!(
            nsci_raster_save(r, path.as_ptr(), NsciScaling::RawFloat),
            NsciStatus::Ok
        );
        let mut back = ptr::null_mut();
        assert_eq!(nsci_raster_load(path.as_ptr(), &mut back), NsciStatus::Ok);
        let mut again = vec![0.0; 20];
        nsci_raster_copy_data(back, again.as_mut_ptr(), 20);
        assert_eq!(buf, again);
        nsci_raster_free(back);
        nsci_raster_free(r);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        let missing = CString::new("/definitely/not/here.png").unwrap();
        assert_eq!(nsci_raster_load(missing.as_ptr(), &mut out), NsciStatus::Io);
        assert!(out.is_null());
        assert!(last_error().contains("not/here.png"));

        assert_eq!(nsci_raster_new(2, 2, 1, ptr::null(), &mut out), NsciStatus::NullPointer);
        let nan = [f64::NAN; 4];
        assert_eq!(nsci_raster_new(2, 2, 1, nan.as_ptr(), &mut out), NsciStatus::Format);

        let tiny = gradient_image(2, 2, |x, _| x as f64);
        let params = nsci_cfog_params_default();
        let mut f = ptr::null_mut();
        assert_eq!(nsci_cfog_extract(tiny, &params, &mut f), NsciStatus::Shape);
        nsci_raster_free(tiny);

        // freeing NULL is a no-op
        nsci_raster_free(ptr::null_mut());
        nsci_features_free(ptr::null_mut());
        nsci_forest_free(ptr::null_mut());
    }
}

#[test]
fn self_pair_features_are_perfect_matches() {
    let (w, h) = (24, 20);
    let img = gradient_image(w, h, texture);
    unsafe {
        let params = nsci_cfog_params_default();
        let mut f = ptr::null_mut();
        assert_eq!(nsci_cfog_extract(img, &params, &mut f), NsciStatus::Ok);
        let (mut fw, mut fh, mut d) = (0, 0, 0);
        nsci_features_dims(f, &mut fw, &mut fh, &mut d);
        assert_eq!((fw, fh, d), (w, h, 9));

        let np = nsci_neighborhood_params_default();
        let n = w * h;
        let (mut r, mut a, mut b, mut me) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![1.0; n]);
        assert_eq!(
            nsci_nsci(f, f, &np, r.as_mut_ptr(), a.as_mut_ptr(), b.as_mut_ptr(), n),
            NsciStatus::Ok
        );
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(a.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(b.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(nsci_matching_error(f, f, &np, me.as_mut_ptr(), n), NsciStatus::Ok);
        assert!(me.iter().all(|&v| v == 0.0));

        let bad = NsciNeighborhoodParams { template_size: 4, ..np };
        assert_eq!(
            nsci_matching_error(f, f, &bad, me.as_mut_ptr(), n),
            NsciStatus::InvalidArgument
        );
        nsci_features_free(f);
        nsci_raster_free(img);
    }
}

#[test]
fn forest_train_predict_save_load() {
    // label is 1 exactly when the first feature exceeds 0.5
    let n = 200;
    let mut x = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let f0 = i as f64 / n as f64;
        x.extend([f0, ((i * 37) % 11) as f64]);
        y.push(u8::from(f0 > 0.5));
    }
    unsafe {
        let params = NsciForestParams {
            trees: 9,
            ..nsci_forest_params_default()
        };
        let mut model = ptr::null_mut();
        assert_eq!(
            nsci_forest_train(x.as_ptr(), y.as_ptr(), n, 2, &params, &mut model),
            NsciStatus::Ok
        );
        assert_eq!(nsci_forest_n_features(model), 2);

        let (mut class, mut votes) = (9u8, [0usize; 2]);
        let probe = [0.9, 3.0];
        assert_eq!(
            nsci_forest_predict(model, probe.as_ptr(), 2, &mut class, votes.as_mut_ptr()),
            NsciStatus::Ok
        );
        assert_eq!(class, 1);
        assert_eq!(votes[0] + votes[1], 9);
        assert_eq!(
            nsci_forest_predict(model, probe.as_ptr(), 1, &mut class, ptr::null_mut()),
            NsciStatus::Shape
        );

        let mut labels = vec![0u8; n];
        assert_eq!(
            nsci_forest_predict_rows(model, x.as_ptr(), n, labels.as_mut_ptr()),
            NsciStatus::Ok
        );
        assert_eq!(labels, y);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.sdrf").to_str().unwrap()).unwrap();
        assert_eq!(nsci_forest_save(model, path.as_ptr()), NsciStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(nsci_forest_load(path.as_ptr(), &mut loaded), NsciStatus::Ok);
        let mut again = vec![0u8; n];
        nsci_forest_predict_rows(loaded, x.as_ptr(), n, again.as_mut_ptr());
        assert_eq!(again, labels);

        let ones = vec![1u8; n];
        let mut degenerate = ptr::null_mut();
        assert_eq!(
            nsci_forest_train(x.as_ptr(), ones.as_ptr(), n, 2, &params, &mut degenerate),
            NsciStatus::DegenerateTraining
        );
        assert!(degenerate.is_null());
        nsci_forest_free(loaded);
        nsci_forest_free(model);
    }
}

#[test]
fn metrics_hand_case() {
    let mut m = NsciMetrics {
        oa: 0.0,
        fa: 0.0,
        md: 0.0,
        kc: 0.0,
    };
    assert_eq!(unsafe { nsci_metrics(40, 10, 10, 40, &mut m) }, NsciStatus::Ok);
    assert_eq!((m.oa, m.fa, m.md, m.kc), (80.0, 20.0, 20.0, 0.6));
    assert_eq!(unsafe { nsci_metrics(0, 0, 0, 0, &mut m) }, NsciStatus::EmptyInput);
    assert_eq!(
        unsafe { nsci_metrics(1, 0, 0, 1, ptr::null_mut()) },
        NsciStatus::NullPointer
    );
}

fn exported_functions() -> Vec<String> {
    let src = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    src.lines()
        .filter_map(|l| {
            let l = l.trim_start();
            let rest = l
                .strip_prefix("pub unsafe extern \"C\" fn ")
                .or_else(|| l.strip_prefix("pub extern \"C\" fn "))?;
            Some(rest.split('(').next().unwrap().to_string())
        })
        .collect()
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nsci_cd.h")).unwrap();
    let exports = exported_functions();
    assert!(exports.len() >= 20, "{exports:?}");
    for f in &exports {
        let declared = [' ', '*'].iter().any(|c| header.contains(&format!("{c}{f}(")));
        assert!(declared, "{f} missing from header");
    }
    for ty in [
        "typedef struct NsciRaster NsciRaster;",
        "typedef struct NsciForest NsciForest;",
        "NSCI_STATUS_OK = 0",
    ] {
        assert!(header.contains(ty), "{ty}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nsci_cd.h");
    let status = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "cc rejected the header"),
        Err(e) => panic!("no C compiler to check the header: {e}"),
    }
}
