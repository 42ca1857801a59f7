use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termcov_ffi::*;

fn random_log_prices(dates: usize, maturities: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; dates * maturities];
    for i in 0..dates {
        let mut acc = 0.0;
        for j in 1..maturities {
            acc -= 0.001 * (3.0 + rng.random_range(-1.0..1.0));
            out[i * maturities + j] = acc;
        }
    }
    out
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        let n = tc_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(n > 0);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn pipeline_matches_the_rust_api() {
    let (dates, mats, dn) = (41, 12, 0.1);
    let lp = random_log_prices(dates, mats, 1);
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(tc_panel_from_log_prices(lp.as_ptr(), dates, mats, dn, &mut panel), TcStatus::Ok);
        assert_eq!(tc_panel_rows(panel), dates - 1);
        assert_eq!(tc_panel_cols(panel), mats - 2);

        let mut rule = ptr::null_mut();
        assert_eq!(tc_rule_build(panel, 3.0, &mut rule), TcStatus::Ok);
        assert!(tc_rule_threshold(rule) > 0.0);

        let mut cov = ptr::null_mut();
        assert_eq!(tc_covariation(panel, rule, &mut cov), TcStatus::Ok);
        let ratio = tc_covariation_norm_ratio(cov);
        assert!((0.0..=1.0 + 1e-12).contains(&ratio));

        let mut total = ptr::null_mut();
        assert_eq!(tc_covariation_kernel(cov, TcKernelPart::Total, &mut total), TcStatus::Ok);
        let m = tc_kernel_cells(total);
        let mut values = vec![0.0; m * m];
        assert_eq!(tc_kernel_values(total, values.as_mut_ptr(), values.len()), TcStatus::Ok);

        // Same computation through the Rust API.
        let grid = termcov::curve_panel::GridSpec::new(dn, (mats - 1) as f64 * dn, (dates - 1) as f64 * dn).unwrap();
        let p = termcov::curve_panel::LogBondPanel::new(grid, nalgebra::DMatrix::from_row_slice(dates, mats, &lp)).unwrap();
        let d = termcov::curve_panel::difference_returns(&p).unwrap();
        let q = termcov::covariation::realized_covariation(&d, 0..d.n_rows()).unwrap();
        for a in 0..m {
            for b in 0..m {
                assert!((values[a * m + b] - q.values()[(a, b)]).abs() <= 1e-12 * q.values().amax());
            }
        }
        assert!((tc_kernel_hs_norm(total) - termcov::kernel_space::hs_norm(&q)).abs() < 1e-12);

        let mut eig = vec![0.0; m];
        assert_eq!(tc_kernel_eigenvalues(total, eig.as_mut_ptr(), m), TcStatus::Ok);
        assert!(eig.windows(2).all(|w| w[0] >= w[1]));
        let mut dim = 0usize;
        assert_eq!(tc_kernel_explained_dimension(total, 0.9, &mut dim), TcStatus::Ok);
        assert!(dim >= 1 && dim <= m);
        let mut re = f64::NAN;
        assert_eq!(tc_kernel_relative_error(total, total, &mut re), TcStatus::Ok);
        assert_eq!(re, 0.0);

        tc_kernel_free(total);
        tc_covariation_free(cov);
        tc_rule_free(rule);
        tc_panel_free(panel);
    }
}

#[test]
fn l2_rule_flags_an_injected_jump() {
    let (dates, mats, dn) = (30, 8, 0.1);
    let mut lp = random_log_prices(dates, mats, 2);
    for j in 1..mats {
        lp[15 * mats + j] -= 0.05 * (j * j) as f64;
    }
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(tc_panel_from_log_prices(lp.as_ptr(), dates, mats, dn, &mut panel), TcStatus::Ok);
        let mut rule = ptr::null_mut();
        assert_eq!(tc_rule_l2(1.0, &mut rule), TcStatus::Ok);
        assert_eq!(tc_rule_dimension(rule), 0);
        let mut cov = ptr::null_mut();
        assert_eq!(tc_covariation(panel, rule, &mut cov), TcStatus::Ok);
        let n = tc_covariation_flag_count(cov);
        assert_eq!(n, 2);
        let mut small = [0usize; 1];
        assert_eq!(tc_covariation_flags(cov, small.as_mut_ptr(), 1), TcStatus::BufferTooSmall);
        let mut flags = vec![0usize; n];
        assert_eq!(tc_covariation_flags(cov, flags.as_mut_ptr(), n), TcStatus::Ok);
        assert_eq!(flags, vec![14, 15]);

        let mut jumps = ptr::null_mut();
        let mut kept = ptr::null_mut();
        let mut total = ptr::null_mut();
        tc_covariation_kernel(cov, TcKernelPart::Jumps, &mut jumps);
        tc_covariation_kernel(cov, TcKernelPart::Truncated, &mut kept);
        tc_covariation_kernel(cov, TcKernelPart::Total, &mut total);
        let m = tc_kernel_cells(total);
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m * m];
        let mut c = vec![0.0; m * m];
        tc_kernel_values(jumps, a.as_mut_ptr(), a.len());
        tc_kernel_values(kept, b.as_mut_ptr(), b.len());
        tc_kernel_values(total, c.as_mut_ptr(), c.len());
        for k in 0..m * m {
            assert!((a[k] + b[k] - c[k]).abs() <= 1e-10 * c[k].abs().max(1e-300));
        }
        for h in [jumps, kept, total] {
            tc_kernel_free(h);
        }
        tc_covariation_free(cov);
        tc_rule_free(rule);
        tc_panel_free(panel);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut panel = ptr::null_mut();
        assert_eq!(tc_panel_from_log_prices(ptr::null(), 3, 3, 0.1, &mut panel), TcStatus::NullPointer);
        assert!(last_error().contains("null"));

        let bad = [0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(tc_panel_from_log_prices(bad.as_ptr(), 3, 3, 0.1, &mut panel), TcStatus::Data);
        assert!(last_error().contains("non-finite"));

        let ok = [0.0; 9];
        assert_eq!(tc_panel_from_log_prices(ok.as_ptr(), 3, 3, -1.0, &mut panel), TcStatus::Config);
        assert_eq!(tc_panel_from_yields(ok.as_ptr(), 3, 3, 0.5, ptr::null_mut()), TcStatus::NullPointer);

        assert_eq!(tc_panel_from_log_prices(ok.as_ptr(), 3, 3, 0.5, &mut panel), TcStatus::Ok);
        let mut rule = ptr::null_mut();
        // Two rows are too few for the data-driven rule.
        assert_eq!(tc_rule_build(panel, 3.0, &mut rule), TcStatus::Data);
        assert!(rule.is_null());
        assert_eq!(tc_rule_l2(-1.0, &mut rule), TcStatus::Config);
        tc_panel_free(panel);

        let asym = [1.0, 2.0, 0.0, 1.0];
        let mut k = ptr::null_mut();
        assert_ne!(tc_kernel_new(asym.as_ptr(), 2, 0.5, &mut k), TcStatus::Ok);
        let sym = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(tc_kernel_new(sym.as_ptr(), 2, 0.5, &mut k), TcStatus::Ok);
        let mut out = [0.0; 3];
        assert_eq!(tc_kernel_values(k, out.as_mut_ptr(), 3), TcStatus::BufferTooSmall);
        let mut dim = 0usize;
        assert_eq!(tc_kernel_explained_dimension(k, 1.5, &mut dim), TcStatus::Config);
        tc_kernel_free(k);

        assert_eq!(tc_panel_rows(ptr::null()), 0);
        assert!(tc_rule_threshold(ptr::null()).is_nan());
        tc_panel_free(ptr::null_mut());
        let v = CStr::from_ptr(tc_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn exported_functions() -> Vec<String> {
    let src = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    src.lines()
        .filter_map(|l| {
            let l = l.trim_start();
            let rest = l
                .strip_prefix("pub unsafe extern \"C\" fn ")
                .or_else(|| l.strip_prefix("pub extern \"C\" fn "))?;
            Some(rest.split('(').next().unwrap().to_string())
        })
        .collect()
}

#[test]
fn header_declares_every_exported_function() {
    let header = std::fs::read_to_string(crate_dir().join("include/termcov.h")).unwrap();
    let names = exported_functions();
    assert!(names.len() >= 20, "found only {names:?}");
    for n in &names {
        assert!(header.contains(&format!(" {n}(")) || header.contains(&format!("*{n}(")), "{n} missing from header");
    }
    for t in ["typedef struct TcPanel TcPanel;", "TC_STATUS_NUMERICAL = 4", "TC_STATUS_DATA = 3"] {
        assert!(header.contains(t), "{t}");
    }
}

fn static_library() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libtermcov_ffi.a");
    lib.exists().then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_library() else {
        eprintln!("static library not found next to the test binary; skipping");
        return;
    };
    if !have_cc() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "termcov.h"

int main(void) {
    double lp[5 * 4] = {0};
    for (int i = 0; i < 5; ++i)
        for (int j = 1; j < 4; ++j)
            lp[i * 4 + j] = -0.03 * j - 0.001 * i * j * j;
    TcPanel *panel = NULL;
    if (tc_panel_from_log_prices(lp, 5, 4, 0.25, &panel) != TC_STATUS_OK) return 1;
    TcCovariation *cov = NULL;
    if (tc_covariation(panel, NULL, &cov) != TC_STATUS_OK) return 2;
    TcKernel *k = NULL;
    if (tc_covariation_kernel(cov, TC_KERNEL_PART_TOTAL, &k) != TC_STATUS_OK) return 3;
    double norm = tc_kernel_hs_norm(k);
    TcStatus s = tc_panel_from_log_prices(NULL, 5, 4, 0.25, &panel);
    char msg[64];
    tc_last_error_message(msg, sizeof msg);
    printf("%zu %zu %.6e %d %s\n", tc_panel_rows(panel), tc_kernel_cells(k), norm, (int)s, msg);
    tc_kernel_free(k);
    tc_covariation_free(cov);
    tc_panel_free(panel);
    return isfinite(norm) ? 0 : 4;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include: &Path = &crate_dir().join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(&fields[..2], &["4", "2"]);
    assert_eq!(fields[3], "1");
    assert!(text.contains("null pointer"));
}
