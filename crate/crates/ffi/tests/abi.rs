use std::ffi::CStr;
use std::ptr;

use ibdwaves_ffi::*;

fn params(sigma: f64, delta: f64) -> *mut IbdParams {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ibd_params_unit_rates(sigma, delta, &mut p) }, IbdStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe { ibd_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn params_round_trip() {
    let p = params(4.0, 0.05);
    let (mut s, mut a, mut b) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { ibd_params_derived(p, &mut s, &mut a, &mut b) }, IbdStatus::Ok);
    assert!((s - 4.0).abs() < 1e-14);
    assert!((b - 0.2).abs() < 1e-14);
    assert!((a * b - 0.25).abs() < 1e-14);
    unsafe { ibd_params_free(p) };
    unsafe { ibd_params_free(ptr::null_mut()) };
}

#[test]
fn invalid_input_reports_codes_and_messages() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ibd_params_new(1.0, -1.0, 1.0, 0.05, 1.0, &mut p) }, IbdStatus::InvalidParameter);
    assert!(p.is_null());
    assert!(!last_error().is_empty());

    let mut v = 0.0;
    assert_eq!(unsafe { ibd_uptw_min_speed(ptr::null(), 2.0, &mut v) }, IbdStatus::NullPointer);
    let q = params(0.5, 0.05);
    assert_ne!(unsafe { ibd_uptw_min_speed(q, 0.5, &mut v) }, IbdStatus::Ok);
    assert_eq!(unsafe { ibd_uptw_min_speed(q, 2.0, ptr::null_mut()) }, IbdStatus::NullPointer);
    assert_eq!(unsafe { ibd_uptw_min_speed(q, 2.0, &mut v) }, IbdStatus::Ok);
    assert_eq!(unsafe { ibd_last_error(ptr::null_mut(), 0) }, 0);
    unsafe { ibd_params_free(q) };
}

#[test]
fn leading_order_speeds() {
    let p = params(4.0, 0.05);
    let (mut up, mut low, mut full) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { ibd_uptw_min_speed(p, 4.0, &mut up) }, IbdStatus::Ok);
    assert_eq!(unsafe { ibd_lptw_min_speed(p, 4.0, &mut low) }, IbdStatus::Ok);
    assert_eq!(unsafe { ibd_fptw_speed(p, 0.75, 1e-10, &mut full) }, IbdStatus::Ok);
    assert!((up - 2.4f64.sqrt()).abs() < 1e-9);
    assert!((low / up - 5.0).abs() < 1e-6);
    assert!((full - 0.319559).abs() < 1e-5, "{full}");
    unsafe { ibd_params_free(p) };
}

#[test]
fn profile_handle_exposes_the_wave() {
    let p = params(4.0, 0.05);
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { ibd_profile_solve(p, IbdWaveKind::Uptw, 4.0, &mut w) }, IbdStatus::Ok);
    let (mut n, mut speed) = (0usize, 0.0);
    assert_eq!(unsafe { ibd_profile_info(w, &mut n, &mut speed) }, IbdStatus::Ok);
    assert!((speed - 1.5492).abs() < 0.03);
    let mut small = vec![0.0; n - 1];
    assert_eq!(
        unsafe { ibd_profile_copy(w, small.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), n - 1) },
        IbdStatus::BufferTooSmall
    );
    let (mut z, mut i) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { ibd_profile_copy(w, z.as_mut_ptr(), ptr::null_mut(), i.as_mut_ptr(), n) }, IbdStatus::Ok);
    assert!(z.windows(2).all(|s| s[1] > s[0]));
    assert!((i[0] - 0.8).abs() < 1e-4 && (i[n - 1] - 0.6).abs() < 1e-4);
    unsafe { ibd_profile_free(w) };
    unsafe { ibd_params_free(p) };
}

#[test]
fn simulation_handle_tracks_a_front() {
    let p = params(4.0, 0.05);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ibd_simulate(p, 1.0, 0.8, -10.0, 70.0, 801, 40.0, 1.0, &mut s) }, IbdStatus::Ok);
    let (mut n, mut k) = (0usize, 0usize);
    assert_eq!(unsafe { ibd_simulation_info(s, &mut n, &mut k) }, IbdStatus::Ok);
    assert_eq!((n, k), (801, 41));
    let mut i = vec![0.0; n];
    assert_eq!(unsafe { ibd_simulation_final(s, IbdField::I, i.as_mut_ptr(), n) }, IbdStatus::Ok);
    assert!(i.iter().all(|v| (0.0..=1.0).contains(v)));
    let mut v = 0.0;
    assert_eq!(unsafe { ibd_simulation_front_speed(s, IbdField::M, 0.5, 0.5, &mut v) }, IbdStatus::Ok);
    assert!(v > 1.4 && v < 1.6, "{v}");
    assert_eq!(unsafe { ibd_simulation_front_speed(s, IbdField::M, 0.5, 2.0, &mut v) }, IbdStatus::InvalidParameter);
    unsafe { ibd_simulation_free(s) };
    unsafe { ibd_params_free(p) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ibd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
