use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mashup_core::synthbench::{gen_archive, gen_profile, CaseSpec, ClusterBlueprint, FootageBlueprint, MusicBlueprint};
use mashup_ffi::*;

/// 16 shots in two sources, 8 s at 120 BPM.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = CaseSpec {
        seed: 11,
        footage: FootageBlueprint {
            shots_per_source: 8,
            clusters: (0..2).map(|i| ClusterBlueprint { shots: 8, motion: i as f64, ..Default::default() }).collect(),
            ..Default::default()
        },
        music: MusicBlueprint { duration_s: 8.0, sections: vec![], ..Default::default() },
        planted: None,
    };
    let (archive, music) = (dir.join("archive"), dir.join("music.json"));
    gen_archive(&spec, &archive).unwrap();
    gen_profile(&spec, &music).unwrap();
    (archive, music)
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn handles_round_trip_through_the_c_interface() {
    let dir = tempfile::tempdir().unwrap();
    let (archive, music) = fixture(dir.path());
    unsafe {
        let mut lib = ptr::null_mut();
        let mut profile = ptr::null_mut();
        let mut config = ptr::null_mut();
        let mut run = ptr::null_mut();
        assert_eq!(mashup_library_load(cstr(&archive).as_ptr(), &mut lib), MashupStatus::Ok);
        assert_eq!(mashup_profile_load(cstr(&music).as_ptr(), &mut profile), MashupStatus::Ok);
        assert_eq!(mashup_config_new(c"{\"clusters\": 2}".as_ptr(), &mut config), MashupStatus::Ok);
        assert_eq!(mashup_run(lib, profile, config, ptr::null(), &mut run), MashupStatus::Ok);

        let edl = CStr::from_ptr(mashup_run_edl(run));
        let mut report = ptr::null_mut();
        assert_eq!(mashup_report_edl(lib, profile, config, edl.as_ptr(), &mut report), MashupStatus::Ok);
        let again: serde_json::Value = serde_json::from_str(CStr::from_ptr(report).to_str().unwrap()).unwrap();
        let first: serde_json::Value = serde_json::from_str(CStr::from_ptr(mashup_run_report(run)).to_str().unwrap()).unwrap();
        assert_eq!(again["means"], first["means"]);

        mashup_string_free(report);
        mashup_run_free(run);
        mashup_config_free(config);
        mashup_profile_free(profile);
        mashup_library_free(lib);
    }
}

#[test]
fn failures_set_status_and_message() {
    unsafe {
        let mut lib = ptr::null_mut();
        assert_eq!(mashup_library_load(ptr::null(), &mut lib), MashupStatus::NullArgument);
        assert!(CStr::from_ptr(mashup_last_error()).to_str().unwrap().contains("dir"));
        assert_eq!(mashup_library_load(c"/no/such/dir".as_ptr(), &mut lib), MashupStatus::Io);
        assert!(lib.is_null());
        let bad = [0xffu8, 0];
        assert_eq!(mashup_library_load(bad.as_ptr().cast(), &mut lib), MashupStatus::Utf8);
        let mut config = ptr::null_mut();
        assert_eq!(mashup_config_new(c"{not json".as_ptr(), &mut config), MashupStatus::Invalid);
        assert_eq!(mashup_run(ptr::null(), ptr::null(), ptr::null(), ptr::null(), ptr::null_mut()), MashupStatus::NullArgument);
        assert_eq!(mashup_library_shot_count(ptr::null()), 0);
        assert!(mashup_run_edl(ptr::null()).is_null());
        let mut script = ptr::null_mut();
        let status = mashup_render_commands(c"{\"music\":\"\",\"fps\":24,\"entries\":[],\"segments\":[]}".as_ptr(), c"{\"music\":\"m\",\"sources\":{}}".as_ptr(), c"o".as_ptr(), &mut script);
        assert_eq!(status, MashupStatus::Invalid);
    }
}

/// Compiles tests/c/smoke.c against the generated header and the static
/// library built next to this test binary.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let staticlib = deps.join("libmashup_ffi.a");
    assert!(staticlib.exists(), "missing {}", staticlib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let (archive, music) = fixture(dir.path());
    let out = Command::new(&exe).arg(&archive).arg(&music).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
