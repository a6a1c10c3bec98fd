use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use disclab::matrix::{op_norm, sample_goe};
use disclab::phase::{tau1, tau_f, Margin};
use disclab::rng::RngStream;
use disclab_ffi::*;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/disclab.h")
}

/// target/<profile>/deps, where the test executable and the freshly built
/// static library both live.
fn deps_dir() -> PathBuf {
    std::env::current_exe().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_is_valid_c_and_cpp() {
    for (lang, std) in [("c", "-std=c99"), ("c++", "-std=c++11")] {
        let status = Command::new("cc")
            .args(["-fsyntax-only", "-Wall", "-Werror", std, "-x", lang])
            .arg(header())
            .status()
            .expect("cc available");
        assert!(status.success(), "{lang}");
    }
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let names: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(names.len() >= 14);
    for n in &names {
        assert!(text.contains(&format!("{n}(")), "{n} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = deps_dir().join("libdisclab_ffi.a");
    if !lib.exists() {
        panic!("static library not built at {}", lib.display());
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "disclab.h"
int main(void) {
    double t = 0.0;
    if (disclab_tau1(1.0, &t) != DISCLAB_STATUS_OK) return 10;
    double upper[3] = {1.0, 2.0, -1.0};
    DisclabSymMatrix *m = NULL;
    if (disclab_sym_matrix_from_upper(2, upper, 3, &m) != DISCLAB_STATUS_OK) return 11;
    double norm = 0.0;
    if (disclab_op_norm(m, &norm) != DISCLAB_STATUS_OK) return 12;
    disclab_sym_matrix_free(m);
    if (disclab_tau1(-1.0, &t) != DISCLAB_STATUS_DOMAIN) return 13;
    char buf[128];
    disclab_last_error(buf, sizeof buf);
    printf("%.17g %.17g %s\n", t, norm, buf);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.trim().splitn(3, ' ').collect();
    // the failed call leaves the earlier output untouched
    assert_eq!(fields[0].parse::<f64>().unwrap(), tau1(Margin::new(1.0).unwrap()));
    assert!((fields[1].parse::<f64>().unwrap() - 5f64.sqrt()).abs() < 1e-14);
    assert!(fields[2].contains("domain"));
}

#[test]
fn handles_round_trip() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(disclab_sym_matrix_goe(7, 3, 0, &mut m), DisclabStatus::Ok);
        let mut d = 0usize;
        assert_eq!(disclab_sym_matrix_dim(m, &mut d), DisclabStatus::Ok);
        assert_eq!(d, 7);
        let mut norm = 0.0;
        assert_eq!(disclab_op_norm(m, &mut norm), DisclabStatus::Ok);
        assert_eq!(norm, op_norm(&sample_goe(7, RngStream::new(3, 0)).unwrap()).unwrap());
        let mut ev = [0.0; 6];
        assert_eq!(disclab_eigenvalues(m, ev.as_mut_ptr(), ev.len()), DisclabStatus::BufferTooSmall);
        let mut ev = [0.0; 7];
        assert_eq!(disclab_eigenvalues(m, ev.as_mut_ptr(), ev.len()), DisclabStatus::Ok);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(norm, ev[0].abs().max(ev[6].abs()));
        disclab_sym_matrix_free(m);
    }
}

#[test]
fn exact_count_matches_core() {
    unsafe {
        let mut a = ptr::null_mut();
        assert_eq!(disclab_sym_matrix_goe(3, 1, 0, &mut a), DisclabStatus::Ok);
        let hs = [a as *const DisclabSymMatrix, a as *const DisclabSymMatrix];
        let (mut z, mut disc) = (0u64, 1.0);
        assert_eq!(disclab_exact_count(hs.as_ptr(), 2, 0.5, &mut z, &mut disc), DisclabStatus::Ok);
        assert_eq!(disc, 0.0);
        assert_eq!(z, 2);

        let mut b = ptr::null_mut();
        assert_eq!(disclab_sym_matrix_from_upper(2, [1.0, 0.0, 1.0].as_ptr(), 3, &mut b), DisclabStatus::Ok);
        let mixed = [a as *const _, b as *const _];
        assert_eq!(disclab_exact_count(mixed.as_ptr(), 2, 1.0, &mut z, &mut disc), DisclabStatus::DimensionMismatch);
        disclab_sym_matrix_free(a);
        disclab_sym_matrix_free(b);
    }
}

#[test]
fn scalars_match_core() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(disclab_tau_f(1.0, &mut v), DisclabStatus::Ok);
        assert_eq!(v, tau_f(Margin::new(1.0).unwrap()));
        assert_eq!(disclab_laplace_quadratic(0.0, 1000, &mut v), DisclabStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(disclab_rho_kappa(2.0, 0.0, &mut v), DisclabStatus::Ok);
        assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(disclab_rho_kappa(1.0, 1.5, &mut v), DisclabStatus::Domain);
        let mut region = DisclabRegion::Sat;
        let mut fails = false;
        assert_eq!(disclab_classify(1.0, 0.01, &mut region, &mut fails), DisclabStatus::Ok);
        assert_eq!(region, DisclabRegion::Unsat);
        assert!(fails);
        assert_eq!(
            disclab_sym_matrix_from_upper(2, [1.0].as_ptr(), 1, &mut ptr::null_mut()),
            DisclabStatus::DimensionMismatch
        );
    }
}
