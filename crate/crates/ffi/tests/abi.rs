use std::ffi::{CStr, CString};
use std::ptr;

use tgvd::pipeline::{add_noise, synthetic_image};
use tgvd_ffi::*;

fn handle(values: &[f64], rows: usize, cols: usize) -> *mut TgvdImage {
    let mut out = ptr::null_mut();
    let status = unsafe { tgvd_image_new(rows, cols, values.as_ptr(), &mut out) };
    assert_eq!(status, TgvdStatus::Ok);
    assert!(!out.is_null());
    out
}

fn data(image: *const TgvdImage) -> Vec<f64> {
    let n = unsafe { tgvd_image_rows(image) * tgvd_image_cols(image) };
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { tgvd_image_copy_data(image, v.as_mut_ptr(), n) }, TgvdStatus::Ok);
    v
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tgvd_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn image_lifecycle() {
    let values: Vec<f64> = (0..12).map(|k| k as f64 / 12.0).collect();
    let img = handle(&values, 3, 4);
    unsafe {
        assert_eq!(tgvd_image_rows(img), 3);
        assert_eq!(tgvd_image_cols(img), 4);
    }
    assert_eq!(data(img), values);
    let mut short = vec![0.0; 5];
    assert_eq!(
        unsafe { tgvd_image_copy_data(img, short.as_mut_ptr(), short.len()) },
        TgvdStatus::InvalidArgument
    );
    unsafe {
        tgvd_image_free(img);
        tgvd_image_free(ptr::null_mut());
    }
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tgvd_image_new(2, 2, ptr::null(), &mut out) }, TgvdStatus::NullPointer);
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { tgvd_denoise(ptr::null(), ptr::null(), &mut out, ptr::null_mut()) },
        TgvdStatus::NullPointer
    );
    assert_eq!(unsafe { tgvd_psnr(ptr::null(), ptr::null(), ptr::null_mut()) }, TgvdStatus::NullPointer);
    assert_eq!(unsafe { tgvd_image_rows(ptr::null()) }, 0);
    let msg = unsafe { CStr::from_ptr(tgvd_status_message(TgvdStatus::NullPointer)) };
    assert!(!msg.to_bytes().is_empty());
}

#[test]
fn zero_sized_image_is_rejected() {
    let mut out = ptr::null_mut();
    let values = [0.0; 1];
    assert_eq!(unsafe { tgvd_image_new(0, 3, values.as_ptr(), &mut out) }, TgvdStatus::InvalidArgument);
    assert!(out.is_null());
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.pgm").to_str().unwrap()).unwrap();
    let values: Vec<f64> = (0..20).map(|k| k as f64 * 10.0 / 255.0).collect();
    let img = handle(&values, 4, 5);
    assert_eq!(unsafe { tgvd_image_save_pgm(img, path.as_ptr()) }, TgvdStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { tgvd_image_load_pgm(path.as_ptr(), &mut back) }, TgvdStatus::Ok);
    let got = data(back);
    for (a, b) in got.iter().zip(&values) {
        assert!((a - b).abs() < 1e-12);
    }
    let missing = CString::new(dir.path().join("nope.pgm").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { tgvd_image_load_pgm(missing.as_ptr(), &mut none) }, TgvdStatus::Io);
    assert!(last_error().contains("nope.pgm"));
    unsafe {
        tgvd_image_free(img);
        tgvd_image_free(back);
    }
}

#[test]
fn denoise_improves_psnr() {
    let clean = synthetic_image("smooth", 24).unwrap();
    let noisy = add_noise(&clean, "smooth", 0.1, 1);
    let c = handle(clean.as_slice(), 24, 24);
    let f = handle(noisy.as_slice(), 24, 24);

    let mut opts = tgvd_options_default();
    opts.method = TgvdMethod::Dgtgv;
    let mut out = ptr::null_mut();
    let mut summary = TgvdSummary {
        iterations: 0,
        relative_gap: f64::NAN,
        wall_time_s: 0.0,
        converged: 0,
        sigma_hat: 0.0,
    };
    assert_eq!(unsafe { tgvd_denoise(f, &opts, &mut out, &mut summary) }, TgvdStatus::Ok);
    assert_eq!(summary.converged, 1);
    assert!(summary.iterations > 0);
    assert!(summary.relative_gap <= opts.gap_tol);
    assert!(summary.sigma_hat > 0.0);

    let (mut before, mut after) = (0.0, 0.0);
    unsafe {
        assert_eq!(tgvd_psnr(f, c, &mut before), TgvdStatus::Ok);
        assert_eq!(tgvd_psnr(out, c, &mut after), TgvdStatus::Ok);
    }
    assert!(after > before, "{after} <= {before}");
    unsafe {
        tgvd_image_free(out);
        tgvd_image_free(f);
        tgvd_image_free(c);
    }
}

#[test]
fn iteration_cap_reports_not_converged() {
    let clean = synthetic_image("eye", 16).unwrap();
    let noisy = add_noise(&clean, "eye", 0.1, 0);
    let f = handle(noisy.as_slice(), 16, 16);
    let mut opts = tgvd_options_default();
    opts.method = TgvdMethod::Mtgv;
    opts.max_iters = 3;
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tgvd_denoise(f, &opts, &mut out, ptr::null_mut()) }, TgvdStatus::NotConverged);
    assert!(!out.is_null());
    assert!(last_error().contains("relative gap"));
    unsafe {
        tgvd_image_free(out);
        tgvd_image_free(f);
    }
}

#[test]
fn bad_options_are_invalid() {
    let noisy = add_noise(&synthetic_image("ramp", 8).unwrap(), "ramp", 0.1, 0);
    let f = handle(noisy.as_slice(), 8, 8);
    let mut opts = tgvd_options_default();
    opts.gap_tol = -1.0;
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tgvd_denoise(f, &opts, &mut out, ptr::null_mut()) }, TgvdStatus::InvalidArgument);
    assert!(out.is_null());
    unsafe { tgvd_image_free(f) };
}

#[test]
fn noise_estimate_matches_core() {
    let clean = synthetic_image("ramp", 32).unwrap();
    let noisy = add_noise(&clean, "ramp", 0.1, 5);
    let f = handle(noisy.as_slice(), 32, 32);
    let (mut sigma, mut delta1) = (0.0, 0.0);
    assert_eq!(unsafe { tgvd_estimate_noise(f, &mut sigma, &mut delta1) }, TgvdStatus::Ok);
    let e = tgvd::pipeline::estimate_noise_mad(&noisy).unwrap();
    assert_eq!(sigma, e.sigma);
    assert_eq!(delta1, e.delta1);
    unsafe { tgvd_image_free(f) };

    let tiny = handle(&[0.0; 9], 3, 3);
    assert_eq!(
        unsafe { tgvd_estimate_noise(tiny, &mut sigma, ptr::null_mut()) },
        TgvdStatus::InvalidArgument
    );
    unsafe { tgvd_image_free(tiny) };
}
