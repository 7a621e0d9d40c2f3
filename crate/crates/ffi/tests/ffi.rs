use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use motivic_vitushkin_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut std::ffi::c_char) -> serde_json::Value {
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    mv_string_free(p);
    v
}

unsafe fn parse(text: &str, field: Option<&str>) -> (MvStatus, *mut MvSet) {
    let mut out = ptr::null_mut();
    let f = field.map(cs);
    let st = mv_set_parse(cs(text).as_ptr(), f.as_ref().map_or(ptr::null(), |f| f.as_ptr()), &mut out);
    (st, out)
}

#[test]
fn handle_roundtrip() {
    unsafe {
        let (st, s) = parse("box(B(0,1))", Some("F2"));
        assert_eq!(st, MvStatus::Ok);
        let (mut n, mut d) = (0, 0);
        assert_eq!(mv_set_dims(s, &mut n, &mut d), MvStatus::Ok);
        assert_eq!((n, d), (1, 1));
        let mut out = ptr::null_mut();
        assert_eq!(mv_measure_json(s, -1, &mut out), MvStatus::Ok);
        assert_eq!(take(out)["display"], "L^-1");
        assert_eq!(mv_count_measure_json(s, 3, &mut out), MvStatus::Ok);
        let v = take(out);
        assert_eq!((v["num"].as_str(), v["den"].as_str()), (Some("1"), Some("2")));
        mv_set_free(s);
    }
}

#[test]
fn riso_and_v0() {
    unsafe {
        let (_, s) = parse("graph(y = 0, x in B(0,0)) | graph(y = t*x, x in B(0,0))", Some("F3"));
        let mut out = ptr::null_mut();
        assert_eq!(mv_riso_json(s, &mut out), MvStatus::Ok);
        let v = take(out);
        assert_eq!(v["items"].as_array().unwrap().len(), 1);
        assert_eq!(mv_v0_at_q_json(s, &mut out), MvStatus::Ok);
        assert_eq!(take(out)["num"], "1");
        mv_set_free(s);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let (st, s) = parse("graph(y = ", Some("Q"));
        assert_eq!(st, MvStatus::Syntax);
        assert!(s.is_null());
        let msg = CStr::from_ptr(mv_last_error()).to_str().unwrap();
        assert!(msg.starts_with("SyntaxError"), "{msg}");
        let (st, _) = parse("box(B(0,1))", Some("F6"));
        assert_ne!(st, MvStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(mv_riso_json(ptr::null(), &mut out), MvStatus::NullPointer);
        let (_, s) = parse("box(B(0,1))", Some("Q"));
        assert_eq!(mv_count_measure_json(s, 3, &mut out), MvStatus::BaseFieldMismatch);
        let mut b = false;
        assert_eq!(mv_is_nonneg(cs("L - 2").as_ptr(), &mut b), MvStatus::Ok);
        assert!(!b);
        assert_eq!(mv_is_nonneg(cs("L - 2").as_ptr(), ptr::null_mut()), MvStatus::NullPointer);
        mv_set_free(s);
        mv_set_free(ptr::null_mut());
        mv_string_free(ptr::null_mut());
    }
}

#[test]
fn crofton_through_abi() {
    unsafe {
        let (_, s) = parse("graph(y = x^2, x in B(0,0))", Some("F3"));
        let mut ok = false;
        assert_eq!(mv_crofton_check(s, 6, 20_000, 42, 0.05, &mut ok, ptr::null_mut()), MvStatus::Ok);
        assert!(ok);
        mv_set_free(s);
    }
}

/// Compiles tests/c/smoke.c against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile.join("libmotivic_vitushkin_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = std::env::temp_dir().join(format!("mv_smoke_{}", std::process::id()));
    let st = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("cc runs");
    assert!(st.success());
    let out = Command::new(&exe).output().unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
