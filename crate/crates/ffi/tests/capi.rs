use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use threepc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = tpc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn quadratic_run_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(tpc_problem_quadratic_new(5, 12, 0.01, 0.5, 3, &mut p), TpcStatus::Ok);
        let (mut d, mut n) = (0, 0);
        assert_eq!(tpc_problem_shape(p, &mut d, &mut n), TpcStatus::Ok);
        assert_eq!((d, n), (12, 5));
        let mut k = TpcConstants::default();
        assert_eq!(tpc_problem_constants(p, &mut k), TpcStatus::Ok);
        assert!(k.l_minus > 0.0 && (k.mu - 0.01).abs() < 1e-9);

        let cfg = c(r#"{"method": {"method": "ef21", "compressor": {"kind": "top_k", "k": 2}}, "max_rounds": 25}"#);
        let mut run = ptr::null_mut();
        assert_eq!(tpc_run(p, cfg.as_ptr(), &mut run), TpcStatus::Ok);
        assert_eq!(tpc_run_record_count(run), 26);
        let mut rec = TpcRecord::default();
        assert_eq!(tpc_run_record(run, 25, &mut rec), TpcStatus::Ok);
        assert_eq!(rec.t, 25);
        assert_eq!(tpc_run_record(run, 26, &mut rec), TpcStatus::OutOfRange);
        let mut x = vec![0.0; 12];
        assert_eq!(tpc_run_final_iterate(run, x.as_mut_ptr(), 12), TpcStatus::Ok);
        assert!(x.iter().all(|v| v.is_finite()));
        assert_eq!(tpc_run_final_iterate(run, x.as_mut_ptr(), 11), TpcStatus::OutOfRange);
        let mut term = TpcTermination::Converged;
        assert_eq!(tpc_run_termination(run, &mut term), TpcStatus::Ok);
        assert_eq!(term, TpcTermination::MaxRounds);

        // the run used the noncvx rule
        let m = c(r#"{"method": "ef21", "compressor": {"kind": "top_k", "k": 2}}"#);
        let mut tp = TpcTheoryParams::default();
        assert_eq!(tpc_theory_params(m.as_ptr(), 12, 5, &mut tp), TpcStatus::Ok);
        let mut gamma = 0.0;
        assert_eq!(tpc_stepsize(&k, &tp, false, &mut gamma), TpcStatus::Ok);
        assert_eq!(tpc_run_stepsize(run), gamma);

        tpc_run_free(run);
        tpc_problem_free(p);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(
            tpc_problem_quadratic_new(0, 12, 0.01, 0.5, 3, &mut p),
            TpcStatus::InvalidArgument
        );
        assert!(p.is_null());
        assert!(last_error().contains("n must be"));

        assert_eq!(
            tpc_problem_quadratic_new(2, 4, 0.01, 0.5, 3, ptr::null_mut()),
            TpcStatus::NullPointer
        );

        let bad = c(r#"{"method": "ef42"}"#);
        let mut tp = TpcTheoryParams::default();
        assert_eq!(tpc_theory_params(bad.as_ptr(), 4, 2, &mut tp), TpcStatus::Config);
        assert!(!last_error().is_empty());

        let q = c(r#"{"kind": "quadratic", "n": 2, "d": 4, "lambda": 0.1, "s": 0.0}"#);
        assert_eq!(tpc_problem_from_json(q.as_ptr(), 1, &mut p), TpcStatus::Ok);
        let cfg = c(r#"{"method": {"method": "ef21", "compressor": {"kind": "top_k", "k": 9}}}"#);
        let mut run = ptr::null_mut();
        assert_ne!(tpc_run(p, cfg.as_ptr(), &mut run), TpcStatus::Ok);
        assert!(run.is_null());
        tpc_problem_free(p);

        // freeing null is allowed
        tpc_problem_free(ptr::null_mut());
        tpc_run_free(ptr::null_mut());
        assert_eq!(tpc_run_record_count(ptr::null()), 0);
    }
}

#[test]
fn compress_matches_library() {
    let x = [3.0, -1.0, 2.0, 0.5];
    let mut out = [0.0; 4];
    unsafe {
        let top = c(r#"{"kind": "top_k", "k": 1}"#);
        assert_eq!(
            tpc_compress(top.as_ptr(), x.as_ptr(), 4, 0, 1, 0, out.as_mut_ptr()),
            TpcStatus::Ok
        );
        assert_eq!(out, [3.0, 0.0, 0.0, 0.0]);

        // Perm-K blocks from the same seed tile the vector
        let perm = c(r#"{"kind": "cperm_k"}"#);
        let mut sum = [0.0; 4];
        for w in 0..2 {
            assert_eq!(
                tpc_compress(perm.as_ptr(), x.as_ptr(), 4, w, 2, 7, out.as_mut_ptr()),
                TpcStatus::Ok
            );
            for i in 0..4 {
                sum[i] += out[i];
            }
        }
        assert_eq!(sum, x);

        assert_eq!(
            tpc_compress(perm.as_ptr(), x.as_ptr(), 4, 2, 2, 7, out.as_mut_ptr()),
            TpcStatus::OutOfRange
        );
        let big = c(r#"{"kind": "top_k", "k": 5}"#);
        assert_eq!(
            tpc_compress(big.as_ptr(), x.as_ptr(), 4, 0, 1, 0, out.as_mut_ptr()),
            TpcStatus::InvalidArgument
        );
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/threepc.h")
}

fn cc() -> Option<String> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .map(str::to_owned)
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"#include "threepc.h"
int main(void) {
    TpcProblem *p = 0;
    TpcStatus s = tpc_problem_quadratic_new(2, 4, 0.1, 0.0, 1, &p);
    (void)s;
    tpc_problem_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn header_lists_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libthreepc_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "threepc.h"
int main(void) {
    TpcProblem *p = NULL;
    TpcRun *run = NULL;
    TpcRecord rec;
    if (tpc_problem_quadratic_new(4, 8, 0.1, 0.3, 2, &p) != TPC_STATUS_OK) return 1;
    if (tpc_run(p, "{\"method\": {\"method\": \"lag\", \"zeta\": 1.0}, \"max_rounds\": 10}", &run) != TPC_STATUS_OK) return 2;
    if (tpc_run_record(run, tpc_run_record_count(run) - 1, &rec) != TPC_STATUS_OK) return 3;
    tpc_run_free(run);
    run = NULL;
    if (tpc_run(p, "{\"method\": 7}", &run) != TPC_STATUS_CONFIG || run != NULL) return 4;
    printf("%llu %s\n", (unsigned long long)rec.t, tpc_last_error_message() ? "err" : "none");
    tpc_problem_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(cc)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "10 err");
}
