//! C ABI for `hetreg`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`HetregStatus`]; on failure [`hetreg_last_error_message`] describes the
//! error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hetreg::engines::{CoupledSampler, Engine};
use hetreg::model::{chi2_pvalue, compute_q0, fit_groups, GroupEstimate, PooledStatistic, RegressionGroup};
use hetreg::Error;
use nalgebra::{DMatrix, DVector};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InsufficientData = 3,
    RankDeficient = 4,
    DegenerateFit = 5,
    NeedTwoGroups = 6,
    DimensionMismatch = 7,
    NotSymmetric = 8,
    NotPositiveDefinite = 9,
    NumericallySingular = 10,
    InternalConsistency = 11,
    Panic = 99,
}

impl From<&Error> for HetregStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InsufficientData { .. } => HetregStatus::InsufficientData,
            Error::RankDeficient { .. } => HetregStatus::RankDeficient,
            Error::DegenerateFit { .. } => HetregStatus::DegenerateFit,
            Error::NeedTwoGroups(_) => HetregStatus::NeedTwoGroups,
            Error::DimensionMismatch(_) => HetregStatus::DimensionMismatch,
            Error::NotSymmetric(_) => HetregStatus::NotSymmetric,
            Error::NotPositiveDefinite(_) => HetregStatus::NotPositiveDefinite,
            Error::NumericallySingular(_) => HetregStatus::NumericallySingular,
            Error::InternalConsistency(_) => HetregStatus::InternalConsistency,
            Error::InvalidInput(_) | Error::Schema(_) | Error::Parse { .. } | Error::Io(_) => {
                HetregStatus::InvalidInput
            }
        }
    }
}

/// Monte Carlo engine selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetregEngine {
    Fiducial = 0,
    Generalized = 1,
}

/// How the fiducial side of a coupled draw reuses the normal draws `V`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetregCoupling {
    /// `V` as drawn.
    Shared = 0,
    /// `V` rotated by the polar factor of `D* P`; equal to `Q_G*` draw by draw.
    Rotated = 1,
}

/// Monte Carlo p-value with its binomial standard error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HetregMcResult {
    pub p_value: f64,
    pub exceedances: u64,
    pub draws: u64,
    pub seed: u64,
    pub std_error: f64,
}

/// Groups collected before fitting.
pub struct HetregDataset {
    groups: Vec<RegressionGroup>,
}

/// Fitted groups together with Q0.
pub struct HetregAnalysis {
    estimates: Vec<GroupEstimate>,
    stat: PooledStatistic,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), HetregFailure>) -> HetregStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HetregStatus::Ok,
        Ok(Err(HetregFailure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            HetregStatus::NullPointer
        }
        Ok(Err(HetregFailure::Lib(e))) => {
            set_last_error(e.to_string());
            HetregStatus::from(&e)
        }
        Err(_) => {
            set_last_error("panic inside hetreg".into());
            HetregStatus::Panic
        }
    }
}

enum HetregFailure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for HetregFailure {
    fn from(e: Error) -> Self {
        HetregFailure::Lib(e)
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, HetregFailure> {
    // SAFETY: callers pass handles obtained from this library or valid out-pointers.
    unsafe { p.as_ref() }.ok_or(HetregFailure::Null(what))
}

fn non_null_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, HetregFailure> {
    // SAFETY: as above; the pointer must be valid for writes.
    unsafe { p.as_mut() }.ok_or(HetregFailure::Null(what))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hetreg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hetreg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `P(χ²_df > x)`. Returns NaN for `df == 0`.
#[no_mangle]
pub extern "C" fn hetreg_chi2_sf(x: f64, df: u32) -> f64 {
    if df == 0 || x.is_nan() {
        return f64::NAN;
    }
    hetreg::chi2::chi2_sf(x, df as usize)
}

#[no_mangle]
pub extern "C" fn hetreg_dataset_new() -> *mut HetregDataset {
    Box::into_raw(Box::new(HetregDataset { groups: Vec::new() }))
}

/// # Safety
/// `ds` must be NULL or a handle from [`hetreg_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hetreg_dataset_free(ds: *mut HetregDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Appends one group. `design` is row-major `n x p`, `response` has `n`
/// entries, `label` may be NULL (a label `g<index>` is used).
///
/// # Safety
/// `design` and `response` must point to `n * p` and `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hetreg_dataset_add_group(
    ds: *mut HetregDataset,
    label: *const c_char,
    design: *const f64,
    n: usize,
    p: usize,
    response: *const f64,
) -> HetregStatus {
    guard(|| {
        let ds = non_null_mut(ds, "dataset")?;
        non_null(design, "design")?;
        non_null(response, "response")?;
        let label = if label.is_null() {
            format!("g{}", ds.groups.len() + 1)
        } else {
            CStr::from_ptr(label).to_string_lossy().into_owned()
        };
        let x = std::slice::from_raw_parts(design, n * p);
        let y = std::slice::from_raw_parts(response, n);
        let group = RegressionGroup::new(label, DMatrix::from_row_slice(n, p, x), DVector::from_column_slice(y))?;
        ds.groups.push(group);
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn hetreg_dataset_group_count(ds: *const HetregDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.groups.len())
}

/// Fits every group and computes Q0. On success `*out` receives a new handle.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_new(ds: *const HetregDataset, out: *mut *mut HetregAnalysis) -> HetregStatus {
    guard(|| {
        let ds = non_null(ds, "dataset")?;
        let out = non_null_mut(out, "out")?;
        *out = ptr::null_mut();
        let estimates = fit_groups(&ds.groups)?;
        let stat = compute_q0(&estimates)?;
        *out = Box::into_raw(Box::new(HetregAnalysis { estimates, stat }));
        Ok(())
    })
}

/// # Safety
/// `a` must be NULL or a handle from [`hetreg_analysis_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_free(a: *mut HetregAnalysis) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Q0, or NaN for a NULL handle.
///
/// # Safety
/// `a` must be NULL or a live analysis handle.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_q0(a: *const HetregAnalysis) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.stat.q0)
}

/// Chi-square degrees of freedom `p (k - 1)`, or 0 for a NULL handle.
///
/// # Safety
/// `a` must be NULL or a live analysis handle.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_df(a: *const HetregAnalysis) -> usize {
    a.as_ref().map_or(0, |a| a.stat.df_chi2)
}

/// Number of coefficients per group, or 0 for a NULL handle.
///
/// # Safety
/// `a` must be NULL or a live analysis handle.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_p(a: *const HetregAnalysis) -> usize {
    a.as_ref().map_or(0, |a| a.stat.p)
}

/// # Safety
/// `a` must be a live analysis handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_chi2_pvalue(a: *const HetregAnalysis, out: *mut f64) -> HetregStatus {
    guard(|| {
        let a = non_null(a, "analysis")?;
        *non_null_mut(out, "out")? = chi2_pvalue(&a.stat);
        Ok(())
    })
}

/// Fiducial or generalized Monte Carlo p-value with `draws` draws under `seed`.
///
/// # Safety
/// `a` must be a live analysis handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_mc_pvalue(
    a: *const HetregAnalysis,
    engine: HetregEngine,
    draws: usize,
    seed: u64,
    out: *mut HetregMcResult,
) -> HetregStatus {
    guard(|| {
        let a = non_null(a, "analysis")?;
        let out = non_null_mut(out, "out")?;
        let engine = match engine {
            HetregEngine::Fiducial => Engine::Fiducial,
            HetregEngine::Generalized => Engine::Generalized,
        };
        let r = hetreg::mc_pvalue(engine, &a.stat, &a.estimates, draws, seed)?;
        *out = HetregMcResult {
            p_value: r.p_value,
            exceedances: r.exceedances,
            draws: r.draws,
            seed: r.seed,
            std_error: r.std_error,
        };
        Ok(())
    })
}

/// Largest relative gap `|Q_G* - Q_F| / max(1, Q_F)` over `draws` coupled draws.
///
/// # Safety
/// `a` must be a live analysis handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_coupled_max_discrepancy(
    a: *const HetregAnalysis,
    coupling: HetregCoupling,
    draws: usize,
    seed: u64,
    out: *mut f64,
) -> HetregStatus {
    guard(|| {
        let a = non_null(a, "analysis")?;
        let out = non_null_mut(out, "out")?;
        let sampler = CoupledSampler::new(&a.estimates)?;
        let mut worst: f64 = 0.0;
        for m in 0..draws as u64 {
            let (g, f) = match coupling {
                HetregCoupling::Shared => sampler.pair(seed, m)?,
                HetregCoupling::Rotated => sampler.rotated_pair(seed, m)?,
            };
            worst = worst.max((g.q_value - f.q_value).abs() / f.q_value.max(1.0));
        }
        *out = worst;
        Ok(())
    })
}

/// Copies group `index`'s coefficient estimates (`p` doubles) and residual variance.
///
/// # Safety
/// `beta_out` must have room for `p` doubles; `s2_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hetreg_analysis_group(
    a: *const HetregAnalysis,
    index: usize,
    beta_out: *mut f64,
    s2_out: *mut f64,
) -> HetregStatus {
    guard(|| {
        let a = non_null(a, "analysis")?;
        non_null_mut(beta_out, "beta_out")?;
        let s2_out = non_null_mut(s2_out, "s2_out")?;
        let e = a.estimates.get(index).ok_or_else(|| {
            Error::InvalidInput(format!("group index {index} out of range ({} groups)", a.estimates.len()))
        })?;
        std::slice::from_raw_parts_mut(beta_out, e.p()).copy_from_slice(e.beta_hat.as_slice());
        *s2_out = e.s2;
        Ok(())
    })
}
