use std::ffi::{CStr, CString};
use std::ptr;

use radiomap_ffi::*;

fn last_error() -> String {
    let p = rm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Noiseless LOS-only measurements from a few users on a 3 x 3 grid.
fn sample() -> (Vec<f64>, Vec<f64>) {
    let mut coords = Vec::new();
    let mut rss = Vec::new();
    for u in 0..4 {
        for a in 0..10 {
            let c = [
                3.0 + 7.0 * u as f64, 4.0, 1.5,
                2.0 + 2.5 * a as f64, 25.0, 40.0 + 3.0 * a as f64,
            ];
            let d = ((c[3] - c[0]).powi(2) + (c[4] - c[1]).powi(2) + (c[5] - c[2]).powi(2)).sqrt();
            coords.extend_from_slice(&c);
            rss.push(-28.0 - 22.0 * d.log10());
        }
    }
    (coords, rss)
}

const CONFIG: &str = r#"{"grid": {"origin_x": 0, "origin_y": 0, "spacing_m": 10, "nx": 3, "ny": 3, "h_max_m": 50},
                         "fit": {"classes": 1}, "kriging": {"enabled": false}}"#;

#[test]
fn fit_predict_save_load() {
    let (coords, rss) = sample();
    let mut data = ptr::null_mut();
    let st = unsafe { rm_dataset_new(coords.as_ptr(), rss.as_ptr(), rss.len(), &mut data) };
    assert_eq!(st, RmStatus::Ok);
    assert_eq!(unsafe { rm_dataset_len(data) }, rss.len());

    let cfg = CString::new(CONFIG).unwrap();
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { rm_map_fit(data, cfg.as_ptr(), &mut map) }, RmStatus::Ok);
    assert_eq!(unsafe { rm_map_classes(map) }, 1);
    let mut theta = [0.0; 4];
    assert_eq!(unsafe { rm_map_theta(map, theta.as_mut_ptr(), 4) }, 4);

    let mut gains = vec![0.0; rss.len()];
    assert_eq!(unsafe { rm_map_gain(map, coords.as_ptr(), rss.len(), gains.as_mut_ptr()) }, RmStatus::Ok);
    for (g, y) in gains.iter().zip(&rss) {
        assert!((g - y).abs() < 1e-6, "{g} vs {y}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rm_map_save(map, path.as_ptr()) }, RmStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { rm_map_load(path.as_ptr(), &mut loaded) }, RmStatus::Ok);
    let mut again = vec![0.0; rss.len()];
    assert_eq!(unsafe { rm_map_gain(loaded, coords.as_ptr(), rss.len(), again.as_mut_ptr()) }, RmStatus::Ok);
    assert_eq!(gains, again);

    unsafe {
        rm_map_free(loaded);
        rm_map_free(map);
        rm_dataset_free(data);
    }
}

#[test]
fn errors_are_reported() {
    let mut data = ptr::null_mut();
    let st = unsafe { rm_dataset_new(ptr::null(), ptr::null(), 3, &mut data) };
    assert_eq!(st, RmStatus::NullPointer);
    assert!(last_error().contains("null"));

    let coords = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let st = unsafe { rm_dataset_new(coords.as_ptr(), [-60.0].as_ptr(), 1, &mut data) };
    assert_eq!(st, RmStatus::InvalidInput);

    let (coords, rss) = sample();
    assert_eq!(unsafe { rm_dataset_new(coords.as_ptr(), rss.as_ptr(), 3, &mut data) }, RmStatus::Ok);
    let cfg = CString::new(CONFIG).unwrap();
    let mut map = ptr::null_mut();
    // three records cannot identify two laws
    assert_eq!(unsafe { rm_map_fit(data, cfg.as_ptr(), &mut map) }, RmStatus::Precondition);
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { rm_map_fit(data, bad.as_ptr(), &mut map) }, RmStatus::Parse);
    unsafe { rm_dataset_free(data) };

    let missing = CString::new("/nonexistent/m.json").unwrap();
    assert_eq!(unsafe { rm_map_load(missing.as_ptr(), &mut map) }, RmStatus::Io);
    assert!(map.is_null());
    unsafe {
        rm_map_free(ptr::null_mut());
        rm_dataset_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(rm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header, when a C
/// compiler is available.
#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        r#"#include "radiomap.h"
#include <stdio.h>
#include <string.h>
int main(void) {
    RmDataset *d = NULL;
    if (rm_dataset_new(NULL, NULL, 2, &d) != RM_STATUS_NULL_POINTER) return 1;
    if (strstr(rm_last_error(), "null") == NULL) return 2;
    double c[6] = {0, 0, 1.5, 30, 40, 51.5};
    double y = -70;
    if (rm_dataset_new(c, &y, 1, &d) != RM_STATUS_OK) return 3;
    if (rm_dataset_len(d) != 1) return 4;
    rm_dataset_free(d);
    printf("%s\n", rm_version());
    return 0;
}
"#,
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg("-o")
        .arg(dir.path().join("t.o"))
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
