//! C ABI over the `kernelgamma` library.
//!
//! Every fallible call returns a [`KgStatus`]; on failure a message is
//! available from [`kg_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that must be released with their `_free`
//! function. Strings returned by the library are released with
//! [`kg_string_free`]. Panics never unwind into C; they surface as
//! `KG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kernelgamma::dataset::{parse_csv_str, parse_sparse_str, ScalingSpec};
use kernelgamma::dmm::{estimate, Variant};
use kernelgamma::geometry::compute_geometry;
use kernelgamma::kos::{KosModel, KosParams};
use kernelgamma::svm::{train_multiclass, SvmMulticlassModel, SvmParams};
use kernelgamma::{Dataset, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inconsistent input data.
    Data = 3,
    /// Degenerate geometry, rank-zero class, or solver failure.
    Numerical = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Which inter-class distance the γ estimate uses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgVariant {
    Avg = 0,
    Min = 1,
}

/// Closed-form γ and the quantities it was computed from.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KgEstimate {
    pub gamma: f64,
    pub sigma: f64,
    pub d_max: f64,
    pub d_used: f64,
}

/// Scalar summary of the class geometry.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KgGeometry {
    pub n_classes: usize,
    pub d_max: f64,
    pub d_min: f64,
    pub d_av: f64,
}

/// Opaque labeled dataset.
pub struct KgDataset(Dataset);

/// Opaque trained KOS model.
pub struct KgKosModel(KosModel);

/// Opaque trained one-vs-one SVM.
pub struct KgSvmModel(SvmMulticlassModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KgStatus {
    match e {
        Error::InvalidArgument(_) => KgStatus::InvalidArgument,
        Error::Io { .. } => KgStatus::Io,
        Error::DegenerateGeometry(_)
        | Error::DegenerateClass { .. }
        | Error::Numerical(_)
        | Error::NotConverged { .. } => KgStatus::Numerical,
        _ => KgStatus::Data,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, recording any error or panic for [`kg_last_error`].
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KgStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is NULL"));
            KgStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            KgStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null("text"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::Lib(Error::Data(format!("input is not UTF-8: {e}"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message describing the last failed call on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn kg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses LIBSVM sparse text (`label idx:value ...` per line).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_parse_sparse(text_ptr: *const c_char, out: *mut *mut KgDataset) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(KgDataset(parse_sparse_str(text(text_ptr)?)?));
        Ok(())
    })
}

/// Parses comma-separated text with the label in column `label_column`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_parse_csv(
    text_ptr: *const c_char,
    label_column: usize,
    out: *mut *mut KgDataset,
) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(KgDataset(parse_csv_str(text(text_ptr)?, label_column)?));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n_rows × n_cols` matrix and class ids.
///
/// # Safety
/// `features` must hold `n_rows * n_cols` values and `labels` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_from_dense(
    features: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const usize,
    out: *mut *mut KgDataset,
) -> KgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let total = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Error::InvalidArgument("matrix size overflows".into()))?;
        let x = slice(features, total, "features")?;
        let y = slice(labels, n_rows, "labels")?;
        let rows = if n_cols == 0 {
            vec![Vec::new(); n_rows]
        } else {
            x.chunks_exact(n_cols).map(<[f64]>::to_vec).collect()
        };
        *out = boxed(KgDataset(Dataset::from_rows(rows, y.to_vec())?));
        Ok(())
    })
}

/// Min-max scales every feature of `ds` into `[lo, hi]` as a new dataset.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_scale(
    ds: *const KgDataset,
    lo: f64,
    hi: f64,
    out: *mut *mut KgDataset,
) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let out = out_ptr(out, "out")?;
        let spec = ScalingSpec::fit(ds, (lo, hi))?;
        *out = boxed(KgDataset(spec.apply(ds)?));
        Ok(())
    })
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_len(ds: *const KgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_feature_dim(ds: *const KgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.feature_dim())
}

/// Number of classes, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_n_classes(ds: *const KgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_classes())
}

/// Serializes the dataset to its versioned JSON form.
///
/// # Safety
/// `ds` must be a live handle; free `*out` with [`kg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_to_json(ds: *const KgDataset, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        write_string(out, ds.to_json()?)
    })
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_dataset_free(ds: *mut KgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Class geometry of `ds` (exact pairwise computation).
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_geometry(ds: *const KgDataset, out: *mut KgGeometry) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let out = out_ptr(out, "out")?;
        let g = compute_geometry(ds)?;
        *out = KgGeometry {
            n_classes: g.n_classes(),
            d_max: g.d_max,
            d_min: g.d_min,
            d_av: g.d_av,
        };
        Ok(())
    })
}

/// Closed-form γ for `ds` as given (no scaling is applied).
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_estimate_gamma(ds: *const KgDataset, variant: KgVariant, out: *mut KgEstimate) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let out = out_ptr(out, "out")?;
        let variant = match variant {
            KgVariant::Avg => Variant::Avg,
            KgVariant::Min => Variant::Min,
        };
        let est = estimate(&compute_geometry(ds)?, variant)?;
        *out = KgEstimate {
            gamma: est.gamma,
            sigma: est.sigma,
            d_max: est.d_max,
            d_used: est.d_used,
        };
        Ok(())
    })
}

/// Fits a KOS model. A non-finite or non-positive `imbalance_factor`
/// disables class splitting.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_kos_fit(
    ds: *const KgDataset,
    gamma: f64,
    imbalance_factor: f64,
    seed: u64,
    out: *mut *mut KgKosModel,
) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let out = out_ptr(out, "out")?;
        let factor = if imbalance_factor.is_finite() && imbalance_factor > 0.0 {
            imbalance_factor
        } else {
            f64::INFINITY
        };
        let params = KosParams {
            imbalance_factor: factor,
            seed,
            ..KosParams::new(gamma)
        };
        *out = boxed(KgKosModel(KosModel::fit(ds, &params)?));
        Ok(())
    })
}

/// Predicts the class of one `dim`-dimensional point.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn kg_kos_predict(
    model: *const KgKosModel,
    x: *const f64,
    dim: usize,
    out_class: *mut usize,
) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        let out = out_ptr(out_class, "out_class")?;
        *out = m.predict(slice(x, dim, "x")?)?;
        Ok(())
    })
}

/// Predicts `n` row-major points of dimension `dim` into `out_classes`.
///
/// # Safety
/// `xs` must hold `n * dim` values and `out_classes` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn kg_kos_predict_batch(
    model: *const KgKosModel,
    xs: *const f64,
    n: usize,
    dim: usize,
    out_classes: *mut usize,
) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        predict_rows(xs, n, dim, out_classes, |rows| m.predict_batch(rows))
    })
}

/// # Safety
/// `model` must be a live handle; free `*out` with [`kg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn kg_kos_to_json(model: *const KgKosModel, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        write_string(out, serde_json::to_string(m).map_err(Error::from)?)
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_kos_free(model: *mut KgKosModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains a one-vs-one SVM. Fails with `KG_STATUS_NUMERICAL` if a binary
/// problem hits the iteration cap.
///
/// # Safety
/// `ds` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kg_svm_train(ds: *const KgDataset, gamma: f64, c: f64, out: *mut *mut KgSvmModel) -> KgStatus {
    guard(|| {
        let ds = &non_null(ds, "dataset")?.0;
        let out = out_ptr(out, "out")?;
        *out = boxed(KgSvmModel(train_multiclass(ds, &SvmParams::new(gamma, c))?));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle, `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn kg_svm_predict(
    model: *const KgSvmModel,
    x: *const f64,
    dim: usize,
    out_class: *mut usize,
) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        let out = out_ptr(out_class, "out_class")?;
        *out = m.predict(slice(x, dim, "x")?)?;
        Ok(())
    })
}

/// # Safety
/// `xs` must hold `n * dim` values and `out_classes` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn kg_svm_predict_batch(
    model: *const KgSvmModel,
    xs: *const f64,
    n: usize,
    dim: usize,
    out_classes: *mut usize,
) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        predict_rows(xs, n, dim, out_classes, |rows| m.predict_batch(rows))
    })
}

/// # Safety
/// `model` must be a live handle; free `*out` with [`kg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn kg_svm_to_json(model: *const KgSvmModel, out: *mut *mut c_char) -> KgStatus {
    guard(|| {
        let m = &non_null(model, "model")?.0;
        write_string(out, serde_json::to_string(m).map_err(Error::from)?)
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kg_svm_free(model: *mut KgSvmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn predict_rows<F>(
    xs: *const f64,
    n: usize,
    dim: usize,
    out_classes: *mut usize,
    predict: F,
) -> Result<(), Failure>
where
    F: FnOnce(&[&[f64]]) -> kernelgamma::Result<Vec<usize>>,
{
    if n == 0 {
        return Ok(());
    }
    let total = n
        .checked_mul(dim)
        .ok_or_else(|| Error::InvalidArgument("matrix size overflows".into()))?;
    let data = slice(xs, total, "xs")?;
    if out_classes.is_null() {
        return Err(Failure::Null("out_classes"));
    }
    let rows: Vec<&[f64]> = if dim == 0 {
        vec![&[][..]; n]
    } else {
        data.chunks_exact(dim).collect()
    };
    let pred = predict(&rows)?;
    std::slice::from_raw_parts_mut(out_classes, n).copy_from_slice(&pred);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let out = out_ptr(out, "out")?;
    let c = CString::new(s).map_err(|e| Error::Data(e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}
