//! C ABI over `aligned_xai`.
//!
//! Every fallible function returns an [`AxStatus`]. On failure a message is
//! stored per thread and can be read with [`ax_last_error_message`]. Objects
//! cross the boundary as opaque handles ([`AxModel`], [`AxFloatMap`]) that the
//! caller releases with the matching `_free` function.
//!
//! Images are passed as row-major, channel-innermost `float` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aligned_xai::gradcam::{gradcam, ExplanationMap, Normalization, Provenance};
use aligned_xai::metrics::{roc_auc, ScoredLabelSet};
use aligned_xai::model::{load_checkpoint, predict, ModelParams};
use aligned_xai::peppr::{erased_count, importance_order};
use aligned_xai::report::{read_float_map, write_float_map};
use aligned_xai::{aggregate, Error, Image};

/// Result codes. `AX_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Contract = 5,
    Numeric = 6,
    Metric = 7,
    EmptyInput = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxDirection {
    Erasure = 0,
    Restoration = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxNormalization {
    MaxOne = 0,
    Raw = 1,
}

/// A trained classifier loaded from a checkpoint.
pub struct AxModel {
    params: ModelParams<f32>,
}

/// A single-channel, non-negative importance map.
pub struct AxFloatMap {
    map: ExplanationMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AxStatus {
    match err {
        Error::Io { .. } => AxStatus::Io,
        Error::Format { .. } | Error::Parse { .. } => AxStatus::Format,
        Error::Contract(_) => AxStatus::Contract,
        Error::Numeric(_) | Error::Training { .. } => AxStatus::Numeric,
        Error::Metric(_) => AxStatus::Metric,
        Error::EmptyInput(_) => AxStatus::EmptyInput,
        Error::Config(_) | Error::Prerequisite(_) => AxStatus::InvalidArgument,
    }
}

enum Fail {
    Status(AxStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(AxStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail::Status(AxStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AxStatus::Ok,
        Ok(Err(Fail::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            AxStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn model_arg<'a>(m: *const AxModel) -> Result<&'a AxModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn map_arg<'a>(m: *const AxFloatMap) -> Result<&'a AxFloatMap, Fail> {
    m.as_ref().ok_or_else(|| null("map"))
}

fn model_image(model: &AxModel, pixels: &[f32]) -> Result<Image, Fail> {
    let a = &model.params.arch;
    Image::from_vec(
        a.input_height,
        a.input_width,
        a.input_channels,
        pixels.to_vec(),
    )
    .map_err(Fail::from)
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ax_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ax_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an `AXM1` checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ax_model_load(path: *const c_char, out: *mut *mut AxModel) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let params = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(AxModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ax_model_load`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ax_model_free(model: *mut AxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input height, width and channel count, and the number of labels.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_model_shape(
    model: *const AxModel,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
    n_labels: *mut usize,
) -> AxStatus {
    guard(|| {
        let a = &model_arg(model)?.params.arch;
        *out_arg(height, "height")? = a.input_height;
        *out_arg(width, "width")? = a.input_width;
        *out_arg(channels, "channels")? = a.input_channels;
        *out_arg(n_labels, "n_labels")? = a.n_labels;
        Ok(())
    })
}

/// Per-label probabilities for one image of `pixels_len` floats, written to
/// `probs`, which must hold `probs_len >= n_labels` values.
///
/// # Safety
/// Buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn ax_model_predict(
    model: *const AxModel,
    pixels: *const f32,
    pixels_len: usize,
    probs: *mut f64,
    probs_len: usize,
) -> AxStatus {
    guard(|| {
        let model = model_arg(model)?;
        let img = model_image(model, slice_arg(pixels, pixels_len, "pixels")?)?;
        let n = model.params.arch.n_labels;
        if probs.is_null() {
            return Err(null("probs"));
        }
        if probs_len < n {
            return Err(invalid(format!("probs holds {probs_len} values, need {n}")));
        }
        let p = predict(&model.params, std::slice::from_ref(&img))?;
        std::slice::from_raw_parts_mut(probs, n).copy_from_slice(&p[0]);
        Ok(())
    })
}

/// GradCAM map of `label` for one image.
///
/// # Safety
/// Buffers must be valid for the given lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_gradcam(
    model: *const AxModel,
    pixels: *const f32,
    pixels_len: usize,
    label: usize,
    normalization: AxNormalization,
    out: *mut *mut AxFloatMap,
) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = model_arg(model)?;
        let img = model_image(model, slice_arg(pixels, pixels_len, "pixels")?)?;
        let norm = match normalization {
            AxNormalization::MaxOne => Normalization::MaxOne,
            AxNormalization::Raw => Normalization::Raw,
        };
        let map = gradcam(&model.params, &img, label, "ffi", norm)?;
        *out = Box::into_raw(Box::new(AxFloatMap { map }));
        Ok(())
    })
}

/// Builds a map from `height * width` non-negative finite values.
///
/// # Safety
/// `data` must hold `height * width` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_new(
    height: usize,
    width: usize,
    data: *const f32,
    out: *mut *mut AxFloatMap,
) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let n = height
            .checked_mul(width)
            .ok_or_else(|| invalid("size overflows"))?;
        let data = slice_arg(data, n, "data")?.to_vec();
        let map =
            ExplanationMap::new(height, width, data, Normalization::Raw, Provenance::Overall)?;
        *out = Box::into_raw(Box::new(AxFloatMap { map }));
        Ok(())
    })
}

/// Reads a single-channel `AXF1` float map.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_read(
    path: *const c_char,
    out: *mut *mut AxFloatMap,
) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let img = read_float_map(&path_arg(path)?)?;
        let map = ExplanationMap::from_image(&img, Provenance::Overall)?;
        *out = Box::into_raw(Box::new(AxFloatMap { map }));
        Ok(())
    })
}

/// # Safety
/// `map` must be valid and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_write(
    map: *const AxFloatMap,
    path: *const c_char,
) -> AxStatus {
    guard(|| {
        let map = map_arg(map)?;
        write_float_map(&map.map.to_image(), &path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_shape(
    map: *const AxFloatMap,
    height: *mut usize,
    width: *mut usize,
) -> AxStatus {
    guard(|| {
        let m = &map_arg(map)?.map;
        *out_arg(height, "height")? = m.height;
        *out_arg(width, "width")? = m.width;
        Ok(())
    })
}

/// Borrowed pointer to the row-major values; valid while the map lives.
/// Null for a null map.
///
/// # Safety
/// `map` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_data(map: *const AxFloatMap) -> *const f32 {
    map.as_ref().map_or(ptr::null(), |m| m.map.data.as_ptr())
}

/// # Safety
/// `map` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ax_float_map_free(map: *mut AxFloatMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// ROC AUC of `scores` against 0/1 `truths` (non-zero counts as positive),
/// ties scored one half.
///
/// # Safety
/// Both buffers must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_roc_auc(
    scores: *const f64,
    truths: *const u8,
    n: usize,
    out: *mut f64,
) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = slice_arg(scores, n, "scores")?;
        let t: Vec<bool> = slice_arg(truths, n, "truths")?
            .iter()
            .map(|&v| v != 0)
            .collect();
        *out = roc_auc(&ScoredLabelSet::new(s, &t, 0))?;
        Ok(())
    })
}

/// Label-wise global explanation `(1/n) Σ p_i · E_i` of `n` maps.
///
/// # Safety
/// `maps` and `weights` must hold `n` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ax_label_global(
    maps: *const *const AxFloatMap,
    weights: *const f64,
    n: usize,
    out: *mut *mut AxFloatMap,
) -> AxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let handles = slice_arg(maps, n, "maps")?;
        let w = slice_arg(weights, n, "weights")?;
        let owned = handles
            .iter()
            .map(|&h| map_arg(h).map(|m| m.map.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let g = aggregate::label_global(&owned, w, 0)?;
        *out = Box::into_raw(Box::new(AxFloatMap { map: g.map }));
        Ok(())
    })
}

/// Retained-pixel mask of `map` after erasing the fraction `erased` of least
/// important pixels (ties broken by index). `Restoration` gives the
/// complement. Writes 1 for retained, 0 for removed.
///
/// # Safety
/// `mask` must hold `mask_len >= height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn ax_quantile_mask(
    map: *const AxFloatMap,
    erased: f64,
    direction: AxDirection,
    mask: *mut u8,
    mask_len: usize,
) -> AxStatus {
    guard(|| {
        let m = &map_arg(map)?.map;
        if !(0.0..=1.0).contains(&erased) {
            return Err(invalid(format!("erased fraction {erased} outside [0, 1]")));
        }
        let n = m.len();
        if mask.is_null() {
            return Err(null("mask"));
        }
        if mask_len < n {
            return Err(invalid(format!("mask holds {mask_len} bytes, need {n}")));
        }
        let out = std::slice::from_raw_parts_mut(mask, n);
        let (kept, removed) = match direction {
            AxDirection::Erasure => (1, 0),
            AxDirection::Restoration => (0, 1),
        };
        out.fill(kept);
        for &p in importance_order(&m.data)
            .iter()
            .take(erased_count(erased, n))
        {
            out[p] = removed;
        }
        Ok(())
    })
}
