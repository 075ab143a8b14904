use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use syncforensics_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> serde_json::Value {
    assert!(!p.is_null());
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    sf_string_free(p);
    v
}

unsafe fn last_error() -> String {
    let p = sf_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

#[test]
fn engine_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("repo");
    let (fa, fb) = (tmp.path().join("A"), tmp.path().join("B"));
    for d in [&repo, &fa, &fb] {
        std::fs::create_dir_all(d).unwrap();
    }
    let p = |x: &PathBuf| c(x.to_str().unwrap());
    unsafe {
        let ea = sf_engine_new(p(&tmp.path().join("ua")).as_ptr(), 1000);
        let eb = sf_engine_new(p(&tmp.path().join("ub")).as_ptr(), 1000);
        assert!(!ea.is_null() && !eb.is_null());
        let mut out = ptr::null_mut();

        assert_eq!(sf_engine_init(ea, p(&fa).as_ptr(), p(&repo).as_ptr(), c("pw").as_ptr(), &mut out), SfStatus::Ok);
        let init = take(out);
        let link = init["encrypted_link"].as_str().unwrap().to_string();

        std::fs::write(fa.join("f.bin"), vec![9u8; 40_000]).unwrap();
        assert_eq!(sf_engine_status(ea, p(&fa).as_ptr(), &mut out), SfStatus::Ok);
        assert_eq!(take(out)["added"][0], "f.bin");
        assert_eq!(sf_engine_up(ea, p(&fa).as_ptr(), &mut out), SfStatus::Ok);
        assert_eq!(take(out)["uploaded"], true);
        assert_eq!(sf_engine_up(ea, p(&fa).as_ptr(), &mut out), SfStatus::Ok);
        assert_eq!(take(out)["uploaded"], false);

        let st = sf_engine_connect(eb, p(&fb).as_ptr(), c(&link).as_ptr(), c("nope").as_ptr(), &mut out);
        assert_eq!(st, SfStatus::Authentication);
        assert!(last_error().contains("authentication failed"));
        assert_eq!(sf_engine_connect(eb, p(&fb).as_ptr(), c(&link).as_ptr(), c("pw").as_ptr(), &mut out), SfStatus::Ok);
        take(out);
        assert_eq!(sf_engine_down(eb, p(&fb).as_ptr(), &mut out), SfStatus::Ok);
        assert_eq!(take(out)["written"][0], "f.bin");
        assert_eq!(std::fs::read(fb.join("f.bin")).unwrap(), vec![9u8; 40_000]);

        assert_eq!(sf_engine_up(eb, p(&repo).as_ptr(), &mut out), SfStatus::NotInitialized);
        sf_engine_free(ea);
        sf_engine_free(eb);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        let mut out = ptr::null_mut();
        assert!(sf_engine_new(ptr::null(), 0).is_null());
        assert!(last_error().contains("null"));
        assert_eq!(sf_engine_status(ptr::null(), c("x").as_ptr(), &mut out), SfStatus::NullArgument);
        assert_eq!(sf_net_parse(ptr::null(), 4, &mut out), SfStatus::NullArgument);
        let bad = [0xffu8, 0xfe, 0];
        let e = sf_engine_new(c("/tmp").as_ptr(), 0);
        assert_eq!(sf_engine_status(e, bad.as_ptr().cast(), &mut out), SfStatus::InvalidUtf8);
        sf_engine_free(e);
        sf_engine_free(ptr::null_mut());
        sf_string_free(ptr::null_mut());
        sf_carver_free(ptr::null_mut());
    }
}

#[test]
fn carver_and_net() {
    let config = b"<config><machineName>abcXYZ</machineName><displayName>d</displayName>\
<connection type=\"local\"><property name=\"path\">/r</property></connection></config>";
    let mut blob = vec![0u8; 100_000];
    blob.extend_from_slice(config);
    blob.extend(vec![0u8; 50_000]);
    unsafe {
        let h = sf_carver_new(4);
        let mut out = ptr::null_mut();
        assert_eq!(sf_carver_scan(h, blob.as_ptr(), blob.len(), &mut out), SfStatus::Ok);
        let v = take(out);
        let hits = v["strong"].as_array().unwrap().len() + v["weak"].as_array().unwrap().len();
        assert_eq!(hits, 1, "{v}");
        assert_eq!(v["strong"][0]["offset"].as_u64().or(v["weak"][0]["offset"].as_u64()), Some(100_000));
        sf_carver_free(h);

        let stream = b"GET /r/master HTTP/1.1\r\nHost: h\r\n\r\nHTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n";
        assert_eq!(sf_net_parse(stream.as_ptr(), stream.len(), &mut out), SfStatus::Ok);
        let v = take(out);
        assert_eq!(v["extraction"]["transactions"].as_array().unwrap().len(), 1);
        assert_eq!(v["salts"].as_array().unwrap().len(), 0);
    }
}

/// The generated header must compile as C and link against the static library.
#[test]
fn header_compiles_and_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libsyncforensics_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("t.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "syncforensics.h"
int main(void) {
    char *out = NULL;
    if (sf_engine_status(NULL, "x", &out) != SF_STATUS_NULL_ARGUMENT) return 1;
    if (sf_last_error() == NULL) return 2;
    SfCarver *c = sf_carver_new(2);
    const char blob[] = "junk<config><machineName>m</machineName></config>junk";
    if (sf_carver_scan(c, (const uint8_t *)blob, strlen(blob), &out) != SF_STATUS_OK) return 3;
    if (strstr(out, "\"offset\":4") == NULL) return 4;
    sf_string_free(out);
    sf_carver_free(c);
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("t");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("a C compiler");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok", "exit {:?}", run.status);
}
