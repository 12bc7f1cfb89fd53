//! C interface to `nsci-cd`.
//!
//! Rasters, feature stacks and forests cross the boundary as opaque handles
//! that the caller must release with the matching `*_free` function. Every
//! fallible call returns an [`NsciStatus`]; on failure a description is
//! available from [`nsci_last_error_message`] on the same thread. Panics are
//! caught and reported as [`NsciStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nsci_cd::cfog::{self, BandMode, CfogParams, FeatureStack};
use nsci_cd::eval::{self, ConfusionMatrix};
use nsci_cd::forest::{self, Forest, ForestParams, Sample};
use nsci_cd::neighborhood::{self, NeighborhoodParams, TemplateSource};
use nsci_cd::raster::{self, MultibandRaster, Scaling};
use nsci_cd::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsciStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    DegenerateTraining = 6,
    EmptyInput = 7,
    Internal = 8,
}

/// A multiband raster, band-sequential.
pub struct NsciRaster(MultibandRaster);

/// A per-pixel descriptor volume.
pub struct NsciFeatures(FeatureStack);

/// A trained random forest.
pub struct NsciForest(Forest);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsciScaling {
    /// Round and clamp to 8 bits.
    Clamp = 0,
    /// Stretch the global min/max onto 8 bits.
    Normalize = 1,
    /// 32-bit floats in the SDF format.
    RawFloat = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsciCfogParams {
    pub orientations: usize,
    pub sigma: f64,
    pub epsilon: f64,
    /// One descriptor per band, concatenated, instead of one of the band mean.
    pub per_band: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsciNeighborhoodParams {
    pub nsci_window: usize,
    pub template_size: usize,
    pub search_size: usize,
    pub variance_floor: f64,
    /// Take the matching template from the second stack instead of the first.
    pub template_from_second: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NsciForestParams {
    pub trees: usize,
    /// 0 selects the square root of the feature count.
    pub mtry: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsciMetrics {
    pub oa: f64,
    pub fa: f64,
    pub md: f64,
    pub kc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NsciStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => NsciStatus::Io,
            Error::Format(_) => NsciStatus::Format,
            Error::Shape(_) | Error::Size(_) => NsciStatus::Shape,
            Error::DegenerateTraining(_) => NsciStatus::DegenerateTraining,
            Error::EmptyInput(_) => NsciStatus::EmptyInput,
            Error::Spec(_) | Error::Config(_) => NsciStatus::InvalidArgument,
            Error::Invariant(_) => NsciStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> NsciStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsciStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NsciStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(NsciStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(NsciStatus::InvalidArgument, message.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_len(len: usize, want: usize, what: &str) -> Outcome {
    if len != want {
        return Err(Failure(
            NsciStatus::Shape,
            format!("{what} holds {len} values, expected {want}"),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nsci_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- rasters

/// Copies `width * height * bands` band-sequential samples into a new raster.
///
/// # Safety
/// `data` must point to that many readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_new(
    width: usize,
    height: usize,
    bands: usize,
    data: *const f64,
    out: *mut *mut NsciRaster,
) -> NsciStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(bands))
            .ok_or_else(|| invalid("raster size overflows"))?;
        let samples = input(data, n, "data")?;
        put(
            out,
            NsciRaster(MultibandRaster::new(width, height, bands, samples.to_vec())?),
        )
    })
}

/// Reads a PGM, PNG, TIFF or SDF file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_load(path: *const c_char, out: *mut *mut NsciRaster) -> NsciStatus {
    guard(|| put(out, NsciRaster(raster::load_raster(path_arg(path)?)?)))
}

/// Writes a raster; 8-bit modes pick the encoding from the file extension.
///
/// # Safety
/// `raster` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_save(
    raster: *const NsciRaster,
    path: *const c_char,
    scaling: NsciScaling,
) -> NsciStatus {
    guard(|| {
        let r = deref(raster, "raster")?;
        let scaling = match scaling {
            NsciScaling::Clamp => Scaling::ClampTo8Bit,
            NsciScaling::Normalize => Scaling::NormalizeTo8Bit,
            NsciScaling::RawFloat => Scaling::RawFloat,
        };
        Ok(raster::save_raster(&r.0, path_arg(path)?, scaling)?)
    })
}

/// # Safety
/// `raster` must be a live handle; each output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_dims(
    raster: *const NsciRaster,
    width: *mut usize,
    height: *mut usize,
    bands: *mut usize,
) -> NsciStatus {
    guard(|| {
        let r = &deref(raster, "raster")?.0;
        for (p, v) in [(width, r.width()), (height, r.height()), (bands, r.bands())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies all samples, band-sequential, into `out` of exactly `len` doubles.
///
/// # Safety
/// `raster` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_copy_data(raster: *const NsciRaster, out: *mut f64, len: usize) -> NsciStatus {
    guard(|| {
        let r = &deref(raster, "raster")?.0;
        check_len(len, r.data().len(), "output buffer")?;
        output(out, len, "out")?.copy_from_slice(r.data());
        Ok(())
    })
}

/// # Safety
/// `raster` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsci_raster_free(raster: *mut NsciRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

// --------------------------------------------------------------- features

#[no_mangle]
pub extern "C" fn nsci_cfog_params_default() -> NsciCfogParams {
    let p = CfogParams::default();
    NsciCfogParams {
        orientations: p.orientations,
        sigma: p.sigma,
        epsilon: p.epsilon,
        per_band: false,
    }
}

/// Structure descriptor of a raster.
///
/// # Safety
/// `raster` must be a live handle, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_cfog_extract(
    raster: *const NsciRaster,
    params: *const NsciCfogParams,
    out: *mut *mut NsciFeatures,
) -> NsciStatus {
    guard(|| {
        let r = deref(raster, "raster")?;
        let p = deref(params, "params")?;
        let cp = CfogParams {
            orientations: p.orientations,
            sigma: p.sigma,
            epsilon: p.epsilon,
        };
        let mode = if p.per_band {
            BandMode::PerBand
        } else {
            BandMode::Intensity
        };
        put(out, NsciFeatures(cfog::extract_cfog_bands(&r.0, &cp, mode)?))
    })
}

/// # Safety
/// `features` must be a live handle; each output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn nsci_features_dims(
    features: *const NsciFeatures,
    width: *mut usize,
    height: *mut usize,
    depth: *mut usize,
) -> NsciStatus {
    guard(|| {
        let f = &deref(features, "features")?.0;
        for (p, v) in [(width, f.width()), (height, f.height()), (depth, f.depth())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the channel-major descriptor values into `out` of exactly `len` doubles.
///
/// # Safety
/// `features` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsci_features_copy_data(
    features: *const NsciFeatures,
    out: *mut f64,
    len: usize,
) -> NsciStatus {
    guard(|| {
        let f = &deref(features, "features")?.0;
        check_len(len, f.data().len(), "output buffer")?;
        output(out, len, "out")?.copy_from_slice(f.data());
        Ok(())
    })
}

/// # Safety
/// `features` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsci_features_free(features: *mut NsciFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

// ----------------------------------------------------------- neighborhood

#[no_mangle]
pub extern "C" fn nsci_neighborhood_params_default() -> NsciNeighborhoodParams {
    let p = NeighborhoodParams::default();
    NsciNeighborhoodParams {
        nsci_window: p.nsci_window,
        template_size: p.template,
        search_size: p.search,
        variance_floor: p.variance_floor,
        template_from_second: false,
    }
}

fn neighborhood_params(p: &NsciNeighborhoodParams) -> NeighborhoodParams {
    NeighborhoodParams {
        nsci_window: p.nsci_window,
        template: p.template_size,
        search: p.search_size,
        variance_floor: p.variance_floor,
        template_source: if p.template_from_second {
            TemplateSource::Second
        } else {
            TemplateSource::First
        },
    }
}

/// Per-pixel correlation `r`, slope `a` and intercept `b`, each written
/// row-major into a buffer of `len = width * height` doubles.
///
/// # Safety
/// Both handles must be live, `params` readable, and each output buffer must
/// hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsci_nsci(
    first: *const NsciFeatures,
    second: *const NsciFeatures,
    params: *const NsciNeighborhoodParams,
    r: *mut f64,
    a: *mut f64,
    b: *mut f64,
    len: usize,
) -> NsciStatus {
    guard(|| {
        let (f1, f2) = (deref(first, "first")?, deref(second, "second")?);
        let p = neighborhood_params(deref(params, "params")?);
        check_len(len, f1.0.width() * f1.0.height(), "output buffers")?;
        let map = neighborhood::nsci(&f1.0, &f2.0, &p)?;
        output(r, len, "r")?.copy_from_slice(&map.r);
        output(a, len, "a")?.copy_from_slice(&map.a);
        output(b, len, "b")?.copy_from_slice(&map.b);
        Ok(())
    })
}

/// Per-pixel matching error written row-major into `len = width * height` doubles.
///
/// # Safety
/// Both handles must be live, `params` readable and `me` must hold `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nsci_matching_error(
    first: *const NsciFeatures,
    second: *const NsciFeatures,
    params: *const NsciNeighborhoodParams,
    me: *mut f64,
    len: usize,
) -> NsciStatus {
    guard(|| {
        let (f1, f2) = (deref(first, "first")?, deref(second, "second")?);
        let p = neighborhood_params(deref(params, "params")?);
        check_len(len, f1.0.width() * f1.0.height(), "output buffer")?;
        let map = neighborhood::matching_error(&f1.0, &f2.0, &p)?;
        output(me, len, "me")?.copy_from_slice(&map.me);
        Ok(())
    })
}

// ----------------------------------------------------------------- forest

#[no_mangle]
pub extern "C" fn nsci_forest_params_default() -> NsciForestParams {
    let p = ForestParams::default();
    NsciForestParams {
        trees: p.trees,
        mtry: p.mtry,
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        seed: p.seed,
        bootstrap: p.bootstrap,
    }
}

/// Trains on `n_samples` row-major feature vectors of `n_features` values
/// with labels 0 (unchanged) or 1 (changed).
///
/// # Safety
/// `features` must hold `n_samples * n_features` doubles, `labels` must hold
/// `n_samples` bytes, `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_train(
    features: *const f64,
    labels: *const u8,
    n_samples: usize,
    n_features: usize,
    params: *const NsciForestParams,
    out: *mut *mut NsciForest,
) -> NsciStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let total = n_samples
            .checked_mul(n_features)
            .ok_or_else(|| invalid("training set size overflows"))?;
        let x = input(features, total, "features")?;
        if n_samples > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        let y: &[u8] = if n_samples == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(labels, n_samples)
        };
        if n_features == 0 && n_samples > 0 {
            return Err(invalid("n_features must be positive"));
        }
        let samples: Vec<Sample> = y
            .iter()
            .enumerate()
            .map(|(i, &l)| Sample::new(x[i * n_features..(i + 1) * n_features].to_vec(), l))
            .collect();
        let params = ForestParams {
            trees: p.trees,
            mtry: p.mtry,
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            seed: p.seed,
            bootstrap: p.bootstrap,
        };
        put(out, NsciForest(forest::train(&samples, &params)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_load(path: *const c_char, out: *mut *mut NsciForest) -> NsciStatus {
    guard(|| put(out, NsciForest(Forest::load(path_arg(path)?)?)))
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_save(model: *const NsciForest, path: *const c_char) -> NsciStatus {
    guard(|| Ok(deref(model, "model")?.0.save(path_arg(path)?)?))
}

/// Feature count the model expects, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_n_features(model: *const NsciForest) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_features())
}

/// Majority vote for one feature vector; `votes` receives the unchanged
/// and changed tree counts when not NULL.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `n_features` doubles, `class`
/// must be writable and `votes`, if not NULL, must hold two writable values.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_predict(
    model: *const NsciForest,
    x: *const f64,
    n_features: usize,
    class: *mut u8,
    votes: *mut usize,
) -> NsciStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let x = input(x, n_features, "x")?;
        let p = m.0.predict(x)?;
        *class.as_mut().ok_or_else(|| null("class"))? = p.class;
        if !votes.is_null() {
            std::slice::from_raw_parts_mut(votes, 2).copy_from_slice(&p.votes);
        }
        Ok(())
    })
}

/// Classifies `n_rows` row-major vectors into `labels`.
///
/// # Safety
/// `model` must be a live handle, `rows` must hold `n_rows` times the model's
/// feature count doubles and `labels` `n_rows` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_predict_rows(
    model: *const NsciForest,
    rows: *const f64,
    n_rows: usize,
    labels: *mut u8,
) -> NsciStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let d = m.0.n_features();
        let total = n_rows.checked_mul(d).ok_or_else(|| invalid("row count overflows"))?;
        let classes = m.0.predict_rows(input(rows, total, "rows")?)?;
        output(labels, n_rows, "labels")?.copy_from_slice(&classes);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsci_forest_free(model: *mut NsciForest) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------- metrics

/// Accuracy percentages and kappa from confusion counts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nsci_metrics(tp: u64, fp: u64, fn_: u64, tn: u64, out: *mut NsciMetrics) -> NsciStatus {
    guard(|| {
        let m = eval::metrics(&ConfusionMatrix::new(tp, fp, fn_, tn))?;
        *out.as_mut().ok_or_else(|| null("out"))? = NsciMetrics {
            oa: m.oa,
            fa: m.fa,
            md: m.md,
            kc: m.kc,
        };
        Ok(())
    })
}
