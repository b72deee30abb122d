//! C ABI for fibrig.
//!
//! Every fallible call returns a [`FibrigStatus`]; on failure the message is
//! kept per thread and read with [`fibrig_last_error`]. Handles are opaque
//! and released with their `_free` function. Matrices are 3×3 row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use fibrig::approx_identity::ApproxIdentity;
use fibrig::config::Config;
use fibrig::fields::VectorField;
use fibrig::geometry::{Eps, FiberLayout, Rect2};
use fibrig::limit::{preset, to_rotation_form, Lift, Preset};
use fibrig::linalg::{Mat3, Vec2, Vec3};
use fibrig::rigidity::{dist_so3, lemma31_rhs, project_so3};
use fibrig::sequence::build;
use fibrig::Error;
use nalgebra::Matrix3;

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FibrigStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Computation = 3,
    Io = 4,
    Panic = 5,
}

/// Fiber layout handle.
pub struct FibrigLayout {
    inner: FiberLayout,
}

/// Deformation field handle.
pub struct FibrigField {
    inner: Arc<dyn VectorField>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FibrigStatus {
    match e {
        Error::InvalidParameter(_) | Error::Parse(_) | Error::TranslationTooLarge { .. } | Error::TraceViolation(_) => {
            FibrigStatus::InvalidArgument
        }
        Error::Io(_) => FibrigStatus::Io,
        _ => FibrigStatus::Computation,
    }
}

fn guard<F: FnOnce() -> Result<(), (FibrigStatus, String)>>(f: F) -> FibrigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FibrigStatus::Ok
        }
        Ok(Err((s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            FibrigStatus::Panic
        }
    }
}

fn lib<T>(r: fibrig::Result<T>) -> Result<T, (FibrigStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FibrigStatus, String) {
    (FibrigStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read<const N: usize>(p: *const f64, what: &str) -> Result<[f64; N], (FibrigStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut a = [0.0; N];
    // SAFETY: the caller provides N readable doubles
    a.copy_from_slice(unsafe { std::slice::from_raw_parts(p, N) });
    Ok(a)
}

unsafe fn write(p: *mut f64, v: &[f64], what: &str) -> Result<(), (FibrigStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller provides v.len() writable doubles
    unsafe { std::slice::from_raw_parts_mut(p, v.len()) }.copy_from_slice(v);
    Ok(())
}

fn mat(a: [f64; 9]) -> Mat3 {
    Matrix3::from_row_slice(&a)
}

fn rows(m: &Mat3) -> [f64; 9] {
    let mut a = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            a[3 * i + j] = m[(i, j)];
        }
    }
    a
}

unsafe fn text(p: *const c_char, what: &str) -> Result<String, (FibrigStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller provides a NUL-terminated string
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (FibrigStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn eps(num: u64, den: u64) -> Result<Eps, (FibrigStatus, String)> {
    lib(Eps::new(num, den))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fibrig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fibrig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Periodic layout with cell size `num/den`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fibrig_layout_new(num: u64, den: u64, alpha: f64, delta: f64, out: *mut *mut FibrigLayout) -> FibrigStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(FiberLayout::periodic(eps(num, den)?, alpha, delta))?;
        // SAFETY: checked non-null above
        unsafe { *out = Box::into_raw(Box::new(FibrigLayout { inner })) };
        Ok(())
    })
}

/// # Safety
/// `layout` must come from [`fibrig_layout_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fibrig_layout_free(layout: *mut FibrigLayout) {
    if !layout.is_null() {
        // SAFETY: created by Box::into_raw in fibrig_layout_new
        drop(unsafe { Box::from_raw(layout) });
    }
}

/// Whether `x` (3 doubles) lies in the rigid fibers.
///
/// # Safety
/// Pointers must be valid; `x` holds 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn fibrig_layout_is_rigid(layout: *const FibrigLayout, x: *const f64, out: *mut bool) -> FibrigStatus {
    guard(|| {
        // SAFETY: checked for null before dereferencing
        let l = unsafe { layout.as_ref() }.ok_or_else(|| null("layout"))?;
        let x = unsafe { read::<3>(x, "x") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = l.inner.is_rigid(&Vec3::from(x)) };
        Ok(())
    })
}

/// Number of cells whose closure lies in the rectangle `omega = (x0, y0, x1, y1)`.
///
/// # Safety
/// Pointers must be valid; `omega` holds 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn fibrig_layout_interior_cells(layout: *const FibrigLayout, omega: *const f64, out: *mut usize) -> FibrigStatus {
    guard(|| {
        let l = unsafe { layout.as_ref() }.ok_or_else(|| null("layout"))?;
        let o = unsafe { read::<4>(omega, "omega") }?;
        let r = lib(Rect2::new([o[0], o[1]], [o[2], o[3]]))?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = l.inner.interior_cells(&r).len() };
        Ok(())
    })
}

unsafe fn parse_preset(name: *const c_char) -> Result<Preset, (FibrigStatus, String)> {
    let s = unsafe { text(name, "preset") }?;
    lib(s.parse::<Preset>())
}

/// Limit deformation of a named preset on its default domain.
///
/// # Safety
/// `name` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fibrig_limit_new(name: *const c_char, out: *mut *mut FibrigField) -> FibrigStatus {
    guard(|| {
        let p = unsafe { parse_preset(name) }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(p.field(&p.default_domain()))?;
        unsafe { *out = Box::into_raw(Box::new(FibrigField { inner })) };
        Ok(())
    })
}

/// Exact sequence member `u_ε` of a named preset for the given layout,
/// with zero translation.
///
/// # Safety
/// Pointers must be valid; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fibrig_sequence_new(name: *const c_char, layout: *const FibrigLayout, out: *mut *mut FibrigField) -> FibrigStatus {
    guard(|| {
        let p = unsafe { parse_preset(name) }?;
        let l = unsafe { layout.as_ref() }.ok_or_else(|| null("layout"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = p.default_domain();
        let rf = lib(preset(&p, &d).and_then(|df| to_rotation_form(&df, Lift::R, None)))?;
        let id = lib(ApproxIdentity::for_layout(&l.inner, d.omega))?;
        let u = lib(build(&rf, &l.inner, &id, Vec2::zeros()))?;
        unsafe { *out = Box::into_raw(Box::new(FibrigField { inner: Arc::new(u) })) };
        Ok(())
    })
}

/// # Safety
/// `field` must come from a `fibrig_*_new` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn fibrig_field_free(field: *mut FibrigField) {
    if !field.is_null() {
        // SAFETY: created by Box::into_raw
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Writes `u(x)` to `out` (3 doubles).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fibrig_field_eval(field: *const FibrigField, x: *const f64, out: *mut f64) -> FibrigStatus {
    guard(|| {
        let f = unsafe { field.as_ref() }.ok_or_else(|| null("field"))?;
        let x = Vec3::from(unsafe { read::<3>(x, "x") }?);
        let v = f.inner.value(&x);
        unsafe { write(out, v.as_slice(), "out") }
    })
}

/// Writes `∇u(x)` to `out` (9 doubles, row-major); finite differences with
/// step `h` when the field has no closed-form gradient.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fibrig_field_gradient(field: *const FibrigField, x: *const f64, h: f64, out: *mut f64) -> FibrigStatus {
    guard(|| {
        let f = unsafe { field.as_ref() }.ok_or_else(|| null("field"))?;
        let x = Vec3::from(unsafe { read::<3>(x, "x") }?);
        let g = lib(fibrig::fields::grad(&*f.inner, &x, h))?;
        unsafe { write(out, &rows(&g), "out") }
    })
}

/// `dist(F, SO(3))` of a row-major 3×3 matrix; NaN for a null pointer.
///
/// # Safety
/// `f` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn fibrig_dist_so3(f: *const f64) -> f64 {
    match unsafe { read::<9>(f, "f") } {
        Ok(a) => dist_so3(&mat(a)),
        Err(_) => f64::NAN,
    }
}

/// Nearest rotation of a row-major 3×3 matrix with positive determinant.
///
/// # Safety
/// `f` and `out` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn fibrig_project_so3(f: *const f64, out: *mut f64) -> FibrigStatus {
    guard(|| {
        let a = unsafe { read::<9>(f, "f") }?;
        let r = lib(project_so3(&mat(a)))?;
        unsafe { write(out, &rows(&r), "out") }
    })
}

/// Lower bound of the neighboring-rotation estimate.
///
/// # Safety
/// `a1`, `a2` hold 9 doubles each; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn fibrig_lemma31_rhs(
    p: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    m: f64,
    a1: *const f64,
    a2: *const f64,
    out: *mut f64,
) -> FibrigStatus {
    guard(|| {
        let valid = p >= 1.0 && l1 > 0.0 && l2 > 0.0 && l3 > 0.0;
        if !valid {
            return Err((FibrigStatus::InvalidArgument, "need p ≥ 1 and positive lengths".into()));
        }
        let (a1, a2) = (mat(unsafe { read::<9>(a1, "a1") }?), mat(unsafe { read::<9>(a2, "a2") }?));
        unsafe { write(out, &[lemma31_rhs(p, l1, l2, l3, m, &a1, &a2)], "out") }
    })
}

/// Runs the listed acceptance criteria (all when `n == 0`) with the default
/// configuration, or with `config_toml` when non-null. The JSON report is
/// returned in `out_json` (release with [`fibrig_string_free`]) and
/// `passed` receives the overall verdict.
///
/// # Safety
/// `ids` holds `n` values; `config_toml` is null or NUL-terminated;
/// `out_json` and `passed` are valid.
#[no_mangle]
pub unsafe extern "C" fn fibrig_verify_json(
    ids: *const u32,
    n: usize,
    config_toml: *const c_char,
    out_json: *mut *mut c_char,
    passed: *mut bool,
) -> FibrigStatus {
    guard(|| {
        if out_json.is_null() || passed.is_null() {
            return Err(null("output pointer"));
        }
        if n > 0 && ids.is_null() {
            return Err(null("ids"));
        }
        let ids: Vec<u32> = if n == 0 { Vec::new() } else { unsafe { std::slice::from_raw_parts(ids, n) }.to_vec() };
        if let Some(bad) = ids.iter().find(|i| !(1..=12).contains(*i)) {
            return Err((FibrigStatus::InvalidArgument, format!("no criterion {bad}")));
        }
        let cfg = if config_toml.is_null() { Config::default() } else { lib(Config::from_toml(&unsafe { text(config_toml, "config") }?))? };
        let r = fibrig::verify::run(&cfg, &ids);
        let s = CString::new(r.to_json()).map_err(|_| (FibrigStatus::Computation, "report contains NUL".to_string()))?;
        unsafe {
            *passed = r.passed();
            *out_json = s.into_raw();
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn fibrig_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: created by CString::into_raw
        drop(unsafe { CString::from_raw(s) });
    }
}
