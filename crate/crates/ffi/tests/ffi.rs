use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hetreg_ffi::*;

unsafe fn add(ds: *mut HetregDataset, label: &str, design: &[f64], p: usize, y: &[f64]) -> HetregStatus {
    let label = CString::new(label).unwrap();
    hetreg_dataset_add_group(ds, label.as_ptr(), design.as_ptr(), y.len(), p, y.as_ptr())
}

fn last_error() -> String {
    let msg = hetreg_last_error_message();
    assert!(!msg.is_null());
    unsafe { CStr::from_ptr(msg) }.to_string_lossy().into_owned()
}

/// Two intercept-only groups with q0 = 2.4.
fn means_analysis() -> (*mut HetregDataset, *mut HetregAnalysis) {
    unsafe {
        let ds = hetreg_dataset_new();
        assert_eq!(add(ds, "A", &[1.0; 3], 1, &[1.0, 2.0, 3.0]), HetregStatus::Ok);
        assert_eq!(add(ds, "B", &[1.0; 3], 1, &[2.0, 4.0, 6.0]), HetregStatus::Ok);
        let mut an = ptr::null_mut();
        assert_eq!(hetreg_analysis_new(ds, &mut an), HetregStatus::Ok);
        (ds, an)
    }
}

#[test]
fn statistic_and_pvalues_through_handles() {
    let (ds, an) = means_analysis();
    unsafe {
        assert_eq!(hetreg_dataset_group_count(ds), 2);
        assert!((hetreg_analysis_q0(an) - 2.4).abs() < 1e-12);
        assert_eq!((hetreg_analysis_df(an), hetreg_analysis_p(an)), (1, 1));

        let mut chi2 = 0.0;
        assert_eq!(hetreg_analysis_chi2_pvalue(an, &mut chi2), HetregStatus::Ok);
        assert!((chi2 - hetreg_chi2_sf(2.4, 1)).abs() < 1e-15);

        let mut a = HetregMcResult::default();
        let mut b = HetregMcResult::default();
        assert_eq!(hetreg_analysis_mc_pvalue(an, HetregEngine::Fiducial, 4000, 11, &mut a), HetregStatus::Ok);
        assert_eq!(hetreg_analysis_mc_pvalue(an, HetregEngine::Fiducial, 4000, 11, &mut b), HetregStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(a.draws, 4000);

        let mut beta = [0.0];
        let mut s2 = 0.0;
        assert_eq!(hetreg_analysis_group(an, 1, beta.as_mut_ptr(), &mut s2), HetregStatus::Ok);
        assert_eq!((beta[0], s2), (4.0, 4.0));
        assert_eq!(hetreg_analysis_group(an, 2, beta.as_mut_ptr(), &mut s2), HetregStatus::InvalidInput);
        assert!(last_error().contains("out of range"));

        hetreg_analysis_free(an);
        hetreg_dataset_free(ds);
    }
}

#[test]
fn coupled_discrepancy_by_coupling() {
    let (ds, an) = means_analysis();
    unsafe {
        let mut rotated = f64::NAN;
        let mut shared = f64::NAN;
        assert_eq!(
            hetreg_analysis_coupled_max_discrepancy(an, HetregCoupling::Rotated, 500, 3, &mut rotated),
            HetregStatus::Ok
        );
        assert_eq!(
            hetreg_analysis_coupled_max_discrepancy(an, HetregCoupling::Shared, 500, 3, &mut shared),
            HetregStatus::Ok
        );
        assert!(rotated < 1e-10, "{rotated}");
        assert!(shared > 1e-3, "{shared}");
        hetreg_analysis_free(an);
        hetreg_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let ds = hetreg_dataset_new();
        // n <= p
        assert_eq!(add(ds, "A", &[1.0, 0.0, 0.0, 1.0], 2, &[1.0, 2.0]), HetregStatus::InsufficientData);
        assert_eq!(add(ds, "A", &[1.0; 3], 1, &[1.0, 2.0, 3.0]), HetregStatus::Ok);
        let mut an = ptr::null_mut();
        assert_eq!(hetreg_analysis_new(ds, &mut an), HetregStatus::NeedTwoGroups);
        assert!(an.is_null());
        assert!(last_error().contains('1'));

        // constant response: zero residual variance
        assert_eq!(add(ds, "B", &[1.0; 3], 1, &[5.0; 3]), HetregStatus::Ok);
        assert_eq!(hetreg_analysis_new(ds, &mut an), HetregStatus::DegenerateFit);

        assert_eq!(hetreg_analysis_new(ptr::null(), &mut an), HetregStatus::NullPointer);
        assert_eq!(
            hetreg_dataset_add_group(ds, ptr::null(), ptr::null(), 3, 1, ptr::null()),
            HetregStatus::NullPointer
        );
        assert!(hetreg_analysis_q0(ptr::null()).is_nan());
        assert_eq!(hetreg_dataset_group_count(ptr::null()), 0);
        hetreg_dataset_free(ds);
        hetreg_dataset_free(ptr::null_mut());
        hetreg_analysis_free(ptr::null_mut());
    }
    assert!(hetreg_chi2_sf(1.0, 0).is_nan());
}

#[test]
fn version_matches_manifest() {
    let v = unsafe { CStr::from_ptr(hetreg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/hetreg.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["hetreg_analysis_new", "HETREG_STATUS_PANIC", "HetregMcResult", "HETREG_COUPLING_ROTATED"] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }

    let lib = ["debug", "release"]
        .iter()
        .map(|profile| target_dir().join(profile).join("libhetreg_ffi.a"))
        .find(|p| p.exists())
        .expect("static library is built alongside the tests");
    let exe = Path::new(env!("CARGO_TARGET_TMPDIR")).join("hetreg_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).ends_with("ok\n"));
}
