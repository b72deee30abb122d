use std::ffi::{CStr, CString};
use std::ptr;

use fibrig_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fibrig_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn layout_round_trip() {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { fibrig_layout_new(1, 8, 0.25, 0.4, &mut l) }, FibrigStatus::Ok);
    assert!(last_error().is_empty());
    let mut rigid = false;
    let centre = [1.0 / 16.0, 1.0 / 16.0, 0.5];
    assert_eq!(unsafe { fibrig_layout_is_rigid(l, centre.as_ptr(), &mut rigid) }, FibrigStatus::Ok);
    assert!(rigid);
    let corner = [0.0, 0.0, 0.5];
    assert_eq!(unsafe { fibrig_layout_is_rigid(l, corner.as_ptr(), &mut rigid) }, FibrigStatus::Ok);
    assert!(!rigid);
    let mut n = 0usize;
    let omega = [0.0, 0.0, 1.0, 1.0];
    assert_eq!(unsafe { fibrig_layout_interior_cells(l, omega.as_ptr(), &mut n) }, FibrigStatus::Ok);
    assert_eq!(n, 64);
    unsafe { fibrig_layout_free(l) };
}

#[test]
fn invalid_arguments_report_errors() {
    let mut l = ptr::null_mut();
    assert_eq!(unsafe { fibrig_layout_new(1, 8, 0.7, 0.4, &mut l) }, FibrigStatus::InvalidArgument);
    assert!(l.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { fibrig_layout_new(1, 8, 0.25, 0.4, ptr::null_mut()) }, FibrigStatus::NullPointer);
    let mut f = ptr::null_mut();
    let bad = CString::new("sphere").unwrap();
    assert_eq!(unsafe { fibrig_limit_new(bad.as_ptr(), &mut f) }, FibrigStatus::InvalidArgument);
    assert!(last_error().contains("sphere"));
    let neg = [-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut out = [0.0; 9];
    assert_eq!(unsafe { fibrig_project_so3(neg.as_ptr(), out.as_mut_ptr()) }, FibrigStatus::Computation);
    assert!(unsafe { fibrig_dist_so3(ptr::null()) }.is_nan());
    unsafe {
        fibrig_layout_free(ptr::null_mut());
        fibrig_field_free(ptr::null_mut());
        fibrig_string_free(ptr::null_mut());
    }
}

#[test]
fn fields_and_rotations() {
    let name = CString::new("shear=1").unwrap();
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { fibrig_limit_new(name.as_ptr(), &mut u) }, FibrigStatus::Ok);
    let x = [1.0, 1.0, 1.0];
    let mut v = [0.0; 3];
    assert_eq!(unsafe { fibrig_field_eval(u, x.as_ptr(), v.as_mut_ptr()) }, FibrigStatus::Ok);
    assert_eq!(v, [1.0, 2.0, 1.0]);
    unsafe { fibrig_field_free(u) };

    let mut l = ptr::null_mut();
    assert_eq!(unsafe { fibrig_layout_new(1, 8, 0.25, 0.4, &mut l) }, FibrigStatus::Ok);
    let twist = CString::new("twist").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { fibrig_sequence_new(twist.as_ptr(), l, &mut s) }, FibrigStatus::Ok);
    let fiber = [1.0 + 1.0 / 16.0, 0.5 + 1.0 / 16.0, 0.3];
    let mut g = [0.0; 9];
    assert_eq!(unsafe { fibrig_field_gradient(s, fiber.as_ptr(), 1e-4, g.as_mut_ptr()) }, FibrigStatus::Ok);
    assert!(unsafe { fibrig_dist_so3(g.as_ptr()) } < 1e-12);
    unsafe {
        fibrig_field_free(s);
        fibrig_layout_free(l);
    }

    let f = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert!((unsafe { fibrig_dist_so3(f.as_ptr()) } - 1.0).abs() < 1e-14);
    let mut r = [0.0; 9];
    assert_eq!(unsafe { fibrig_project_so3(f.as_ptr(), r.as_mut_ptr()) }, FibrigStatus::Ok);
    let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert!(r.iter().zip(id).all(|(a, b)| (a - b).abs() < 1e-14));

    let z = [0.0; 9];
    let mut a2 = [0.0; 9];
    a2[2] = 1.0;
    let mut rhs = 0.0;
    assert_eq!(unsafe { fibrig_lemma31_rhs(2.0, 1.0, 1.0, 1.0, 0.0, z.as_ptr(), a2.as_ptr(), &mut rhs) }, FibrigStatus::Ok);
    assert!((rhs - 1.0 / 12.0).abs() < 1e-16);
}

#[test]
fn verify_selected_criteria() {
    let ids = [3u32, 4, 11];
    let mut json = ptr::null_mut();
    let mut passed = false;
    assert_eq!(unsafe { fibrig_verify_json(ids.as_ptr(), ids.len(), ptr::null(), &mut json, &mut passed) }, FibrigStatus::Ok);
    assert!(passed);
    let s = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { fibrig_string_free(json) };
    let v: Vec<u64> = ids.iter().map(|&i| i as u64).collect();
    let parsed: Vec<u64> = s.match_indices("\"id\": ").map(|(i, _)| s[i + 6..].split(',').next().unwrap().trim().parse().unwrap()).collect();
    assert_eq!(parsed, v);
    let bad = [13u32];
    assert_eq!(
        unsafe { fibrig_verify_json(bad.as_ptr(), 1, ptr::null(), &mut json, &mut passed) },
        FibrigStatus::InvalidArgument
    );
}
