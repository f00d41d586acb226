use std::ffi::{CStr, CString};
use std::ptr;

use aligned_xai::gradcam::{gradcam, Normalization};
use aligned_xai::model::{predict, save_checkpoint, ArchitectureDescriptor, ModelParams};
use aligned_xai::Image;
use aligned_xai_ffi::*;

fn last_error() -> String {
    let p = ax_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_map(h: usize, w: usize, data: &[f32]) -> *mut AxFloatMap {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { ax_float_map_new(h, w, data.as_ptr(), &mut m) },
        AxStatus::Ok
    );
    m
}

fn map_values(m: *const AxFloatMap) -> Vec<f32> {
    let (mut h, mut w) = (0, 0);
    assert_eq!(
        unsafe { ax_float_map_shape(m, &mut h, &mut w) },
        AxStatus::Ok
    );
    unsafe { std::slice::from_raw_parts(ax_float_map_data(m), h * w) }.to_vec()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ax_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn roc_auc_counts_ties_as_half() {
    let scores = [0.9, 0.5, 0.5, 0.1];
    let truths = [1u8, 1, 0, 0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { ax_roc_auc(scores.as_ptr(), truths.as_ptr(), 4, &mut out) },
        AxStatus::Ok
    );
    assert_eq!(out, 0.875);
}

#[test]
fn roc_auc_single_class_is_a_metric_error() {
    let scores = [0.2, 0.4];
    let truths = [1u8, 1];
    let mut out = 0.0;
    let s = unsafe { ax_roc_auc(scores.as_ptr(), truths.as_ptr(), 2, &mut out) };
    assert_eq!(s, AxStatus::Metric);
    assert!(!last_error().is_empty());
}

#[test]
fn null_output_sets_message() {
    let scores = [0.2, 0.4];
    let truths = [1u8, 0];
    let s = unsafe { ax_roc_auc(scores.as_ptr(), truths.as_ptr(), 2, ptr::null_mut()) };
    assert_eq!(s, AxStatus::NullPointer);
    assert!(last_error().contains("out"));
}

#[test]
fn float_map_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.axf").to_str().unwrap()).unwrap();
    let data: Vec<f32> = (0..12).map(|v| v as f32 * 0.25).collect();
    let m = new_map(3, 4, &data);
    assert_eq!(
        unsafe { ax_float_map_write(m, path.as_ptr()) },
        AxStatus::Ok
    );
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { ax_float_map_read(path.as_ptr(), &mut back) },
        AxStatus::Ok
    );
    assert_eq!(map_values(back), data);
    unsafe {
        ax_float_map_free(m);
        ax_float_map_free(back);
    }
}

#[test]
fn reading_a_missing_file_is_an_io_error() {
    let path = CString::new("/nonexistent/m.axf").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { ax_float_map_read(path.as_ptr(), &mut m) },
        AxStatus::Io
    );
    assert!(m.is_null());
}

#[test]
fn negative_map_values_are_rejected() {
    let mut m = ptr::null_mut();
    let s = unsafe { ax_float_map_new(1, 2, [0.5f32, -1.0].as_ptr(), &mut m) };
    assert_ne!(s, AxStatus::Ok);
    assert!(m.is_null());
}

#[test]
fn label_global_is_the_weighted_mean() {
    let a = new_map(1, 3, &[1.0, 0.0, 2.0]);
    let b = new_map(1, 3, &[0.0, 4.0, 2.0]);
    let maps = [a as *const AxFloatMap, b as *const AxFloatMap];
    let weights = [0.5, 1.0];
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { ax_label_global(maps.as_ptr(), weights.as_ptr(), 2, &mut g) },
        AxStatus::Ok
    );
    assert_eq!(map_values(g), [0.25, 2.0, 1.5]);
    let bad = [1.5, 1.0];
    let mut g2 = ptr::null_mut();
    assert_eq!(
        unsafe { ax_label_global(maps.as_ptr(), bad.as_ptr(), 2, &mut g2) },
        AxStatus::Contract
    );
    unsafe {
        ax_float_map_free(a);
        ax_float_map_free(b);
        ax_float_map_free(g);
    }
}

#[test]
fn quantile_masks_are_complementary() {
    let m = new_map(2, 3, &[0.3, 0.1, 0.1, 0.9, 0.0, 0.5]);
    let (mut e, mut r) = ([9u8; 6], [9u8; 6]);
    unsafe {
        assert_eq!(
            ax_quantile_mask(m, 0.5, AxDirection::Erasure, e.as_mut_ptr(), 6),
            AxStatus::Ok
        );
        assert_eq!(
            ax_quantile_mask(m, 0.5, AxDirection::Restoration, r.as_mut_ptr(), 6),
            AxStatus::Ok
        );
    }
    // three least important: index 4 (0.0), then the tied 0.1 at 1 and 2
    assert_eq!(e, [1, 0, 0, 1, 0, 1]);
    assert!(e.iter().zip(&r).all(|(a, b)| a + b == 1));
    let mut short = [0u8; 5];
    let s = unsafe { ax_quantile_mask(m, 0.5, AxDirection::Erasure, short.as_mut_ptr(), 5) };
    assert_eq!(s, AxStatus::InvalidArgument);
    let s = unsafe { ax_quantile_mask(m, 1.5, AxDirection::Erasure, e.as_mut_ptr(), 6) };
    assert_eq!(s, AxStatus::InvalidArgument);
    unsafe { ax_float_map_free(m) };
}

#[test]
fn model_predict_and_gradcam_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.axm");
    let arch = ArchitectureDescriptor::default_for(16, 16, 1, 2);
    let params = ModelParams::<f32>::init(&arch, 5).unwrap();
    save_checkpoint(&params, &file).unwrap();
    let pixels: Vec<f32> = (0..256).map(|i| ((i * 37) % 101) as f32 / 100.0).collect();
    let img = Image::from_vec(16, 16, 1, pixels.clone()).unwrap();

    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { ax_model_load(path.as_ptr(), &mut model) },
        AxStatus::Ok
    );
    let (mut h, mut w, mut c, mut l) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { ax_model_shape(model, &mut h, &mut w, &mut c, &mut l) },
        AxStatus::Ok
    );
    assert_eq!((h, w, c, l), (16, 16, 1, 2));

    let mut probs = [0.0; 2];
    let s =
        unsafe { ax_model_predict(model, pixels.as_ptr(), pixels.len(), probs.as_mut_ptr(), 2) };
    assert_eq!(s, AxStatus::Ok);
    assert_eq!(
        probs.to_vec(),
        predict(&params, std::slice::from_ref(&img)).unwrap()[0]
    );

    let mut cam = ptr::null_mut();
    let s = unsafe {
        ax_gradcam(
            model,
            pixels.as_ptr(),
            pixels.len(),
            1,
            AxNormalization::Raw,
            &mut cam,
        )
    };
    assert_eq!(s, AxStatus::Ok);
    let want = gradcam(&params, &img, 1, "x", Normalization::Raw).unwrap();
    assert_eq!(map_values(cam), want.data);

    let s = unsafe { ax_model_predict(model, pixels.as_ptr(), 10, probs.as_mut_ptr(), 2) };
    assert_ne!(s, AxStatus::Ok);
    let mut none = ptr::null_mut();
    let s = unsafe {
        ax_gradcam(
            model,
            pixels.as_ptr(),
            pixels.len(),
            7,
            AxNormalization::Raw,
            &mut none,
        )
    };
    assert_ne!(s, AxStatus::Ok);
    assert!(none.is_null());
    unsafe {
        ax_float_map_free(cam);
        ax_model_free(model);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/aligned_xai.h"
    ))
    .unwrap();
    for f in [
        "ax_last_error_message",
        "ax_version",
        "ax_model_load",
        "ax_model_predict",
        "ax_gradcam",
        "ax_float_map_new",
        "ax_roc_auc",
        "ax_label_global",
        "ax_quantile_mask",
        "AX_STATUS_NULL_POINTER",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}
