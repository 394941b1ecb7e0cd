//! C ABI over the unicsi core: opaque bundle handles, status codes, and
//! flat-buffer entry points for the delay-domain pipeline and the
//! multi-rate encoders/decoders.
//!
//! Conventions: every fallible call returns [`UnicsiStatus`]; on any
//! non-`Ok` status a thread-local message is available through
//! [`unicsi_last_error`]. Callers own output buffers and pass their
//! lengths; handles returned by `unicsi_bundle_*` constructors must be
//! released with [`unicsi_bundle_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use unicsi::models::{
    build_masked, build_naive, build_saldr, load_bundle, save_bundle, AeBundle, Approach,
    CheckpointMeta, LambdaSet,
};
use unicsi::pipeline::{categorize, from_delay, to_delay, AntennaSlice, DelaySample};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicsiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    BadData = 4,
}

/// Encoder families addressable through the C ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicsiApproach {
    Naive = 0,
    Saldr = 1,
    Masked = 2,
}

/// Opaque handle around a multi-rate autoencoder bundle.
pub struct UnicsiBundle {
    inner: AeBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(msg).unwrap_or_default();
    });
}

fn status_of(err: &unicsi::Error) -> UnicsiStatus {
    match err {
        unicsi::Error::Io { .. } => UnicsiStatus::IoError,
        unicsi::Error::Corrupt { .. } => UnicsiStatus::BadData,
        _ => UnicsiStatus::InvalidArgument,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn unicsi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn unicsi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Map a resource-block count to its category transform size.
///
/// # Safety
/// `ifft_size_out` must be null or point to a writable u32.
#[no_mangle]
pub unsafe extern "C" fn unicsi_categorize(k: u32, ifft_size_out: *mut u32) -> UnicsiStatus {
    if ifft_size_out.is_null() {
        set_error("ifft_size_out is null");
        return UnicsiStatus::NullPointer;
    }
    match categorize(k as usize) {
        Ok(cat) => {
            unsafe { *ifft_size_out = cat.ifft_size as u32 };
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Zero-pad a K-bin frequency response and move it to the delay domain.
/// `out` receives the real plane then the imaginary plane and must hold
/// `2 * ifft_size(K)` values (see [`unicsi_categorize`]).
///
/// # Safety
/// `re` and `im` must point to `k` readable f64 values and `out` to
/// `out_len` writable f64 values; the ranges must not overlap.
#[no_mangle]
pub unsafe extern "C" fn unicsi_to_delay(
    re: *const f64,
    im: *const f64,
    k: usize,
    out: *mut f64,
    out_len: usize,
) -> UnicsiStatus {
    if re.is_null() || im.is_null() || out.is_null() {
        set_error("null buffer");
        return UnicsiStatus::NullPointer;
    }
    let cat = match categorize(k) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return status_of(&e);
        }
    };
    if out_len != 2 * cat.ifft_size {
        set_error(format!(
            "out_len {} != required {}",
            out_len,
            2 * cat.ifft_size
        ));
        return UnicsiStatus::InvalidArgument;
    }
    let slice = AntennaSlice {
        re: std::slice::from_raw_parts(re, k).to_vec(),
        im: std::slice::from_raw_parts(im, k).to_vec(),
        bs_index: 0,
        ue_index: 0,
    };
    match to_delay(&slice, cat) {
        Ok(d) => {
            std::ptr::copy_nonoverlapping(d.data.as_ptr(), out, d.data.len());
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Inverse of [`unicsi_to_delay`]: forward transform and crop to K bins.
/// `delay` holds `delay_len = 2 * N` values (N a supported transform
/// size); `scale` is the normalization factor to reapply (1.0 if none).
///
/// # Safety
/// `delay` must point to `delay_len` readable f64 values; `out_re` and
/// `out_im` must each point to `k` writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn unicsi_from_delay(
    delay: *const f64,
    delay_len: usize,
    scale: f64,
    k: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> UnicsiStatus {
    if delay.is_null() || out_re.is_null() || out_im.is_null() {
        set_error("null buffer");
        return UnicsiStatus::NullPointer;
    }
    let n = delay_len / 2;
    if !delay_len.is_multiple_of(2) || !n.is_power_of_two() || !(16..=256).contains(&n) {
        set_error(format!("delay_len {delay_len} is not twice a supported transform size"));
        return UnicsiStatus::InvalidArgument;
    }
    let cat = match categorize(n) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return status_of(&e);
        }
    };
    let sample = DelaySample {
        data: std::slice::from_raw_parts(delay, delay_len).to_vec(),
        scale,
        category: cat,
        origin: None,
    };
    match from_delay(&sample, k) {
        Ok(s) => {
            std::ptr::copy_nonoverlapping(s.re.as_ptr(), out_re, k);
            std::ptr::copy_nonoverlapping(s.im.as_ptr(), out_im, k);
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Normalized mean squared error between two equal-length vectors.
///
/// # Safety
/// `h` and `h_hat` must point to `len` readable f64 values and `out` to a
/// writable f64.
#[no_mangle]
pub unsafe extern "C" fn unicsi_nmse(
    h: *const f64,
    h_hat: *const f64,
    len: usize,
    out: *mut f64,
) -> UnicsiStatus {
    if h.is_null() || h_hat.is_null() || out.is_null() {
        set_error("null buffer");
        return UnicsiStatus::NullPointer;
    }
    let a = std::slice::from_raw_parts(h, len);
    let b = std::slice::from_raw_parts(h_hat, len);
    match unicsi::evalbench::nmse(a, b) {
        Ok(v) => {
            *out = v;
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

fn approach_of(a: UnicsiApproach) -> Approach {
    match a {
        UnicsiApproach::Naive => Approach::Naive,
        UnicsiApproach::Saldr => Approach::Saldr,
        UnicsiApproach::Masked => Approach::Masked,
    }
}

/// Build a freshly initialized (untrained) bundle for the category that
/// serves `k` resource blocks, supporting the given latent sizes.
///
/// # Safety
/// `lambdas` must point to `n_lambdas` readable u32 values; `out` must be
/// a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_build(
    approach: UnicsiApproach,
    k: u32,
    lambdas: *const u32,
    n_lambdas: usize,
    seed: u64,
    out: *mut *mut UnicsiBundle,
) -> UnicsiStatus {
    if lambdas.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    let ls: Vec<usize> = std::slice::from_raw_parts(lambdas, n_lambdas)
        .iter()
        .map(|v| *v as usize)
        .collect();
    let result = categorize(k as usize)
        .and_then(|cat| LambdaSet::uniform(ls).map(|set| (cat, set)))
        .and_then(|(cat, set)| match approach_of(approach) {
            Approach::Masked => build_masked(cat, &set, seed),
            Approach::Saldr => build_saldr(cat, &set, seed),
            Approach::Naive => build_naive(cat, &set, seed),
        });
    match result {
        Ok(bundle) => {
            *out = Box::into_raw(Box::new(UnicsiBundle { inner: bundle }));
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Load a bundle from a checkpoint file.
///
/// # Safety
/// `path` must be a readable NUL-terminated string; `out` must be a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_load(
    path: *const c_char,
    out: *mut *mut UnicsiBundle,
) -> UnicsiStatus {
    if path.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return UnicsiStatus::InvalidArgument;
        }
    };
    match load_bundle(Path::new(path)) {
        Ok((bundle, _meta)) => {
            *out = Box::into_raw(Box::new(UnicsiBundle { inner: bundle }));
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Save a bundle to a checkpoint file.
///
/// # Safety
/// `bundle` must be a live handle; `path` a writable NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_save(
    bundle: *const UnicsiBundle,
    path: *const c_char,
) -> UnicsiStatus {
    if bundle.is_null() || path.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    let b = &(*bundle).inner;
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return UnicsiStatus::InvalidArgument;
        }
    };
    let meta = CheckpointMeta::minimal(b, 0);
    match save_bundle(Path::new(path), b, &meta) {
        Ok(()) => UnicsiStatus::Ok,
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Release a handle returned by a `unicsi_bundle_*` constructor. A null
/// pointer is a no-op.
///
/// # Safety
/// `bundle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_free(bundle: *mut UnicsiBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Encoder input length (2 * transform size); 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_input_len(bundle: *const UnicsiBundle) -> usize {
    if bundle.is_null() {
        return 0;
    }
    (*bundle).inner.input_len()
}

/// Number of supported latent sizes; 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_lambda_count(bundle: *const UnicsiBundle) -> usize {
    if bundle.is_null() {
        return 0;
    }
    (*bundle).inner.lambda_set.len()
}

/// The i-th supported latent size (ascending); 0 if out of range.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_lambda_at(bundle: *const UnicsiBundle, index: usize) -> u32 {
    if bundle.is_null() {
        return 0;
    }
    (*bundle)
        .inner
        .lambda_set
        .lambdas()
        .get(index)
        .map(|l| *l as u32)
        .unwrap_or(0)
}

/// UE-side parameter count (encoders plus compression chain).
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_encoder_params(bundle: *const UnicsiBundle) -> u64 {
    if bundle.is_null() {
        return 0;
    }
    (*bundle).inner.encoder_param_count() as u64
}

/// Deterministic flop count of one encode at the given latent size.
///
/// # Safety
/// `bundle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_encode_flops(
    bundle: *const UnicsiBundle,
    lambda: u32,
    out: *mut u64,
) -> UnicsiStatus {
    if bundle.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    match (*bundle).inner.encode_flops(lambda as usize) {
        Ok(v) => {
            *out = v;
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Length of the latent produced for `lambda`: the full width for the
/// masked approach (zeros past lambda), exactly lambda otherwise.
///
/// # Safety
/// `bundle` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_latent_len(
    bundle: *const UnicsiBundle,
    lambda: u32,
    out: *mut usize,
) -> UnicsiStatus {
    if bundle.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    match (*bundle).inner.latent_len(lambda as usize) {
        Ok(v) => {
            *out = v;
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Compress one delay-domain input (length [`unicsi_bundle_input_len`])
/// into the latent for `lambda`. `out_len` must match
/// [`unicsi_bundle_latent_len`].
///
/// # Safety
/// `input` must point to `input_len` readable f64 values and `out` to
/// `out_len` writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_encode(
    bundle: *const UnicsiBundle,
    input: *const f64,
    input_len: usize,
    lambda: u32,
    out: *mut f64,
    out_len: usize,
) -> UnicsiStatus {
    if bundle.is_null() || input.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    let b = &(*bundle).inner;
    let x = std::slice::from_raw_parts(input, input_len);
    let want = match b.latent_len(lambda as usize) {
        Ok(w) => w,
        Err(e) => {
            set_error(e.to_string());
            return status_of(&e);
        }
    };
    if out_len != want {
        set_error(format!("out_len {out_len} != latent length {want}"));
        return UnicsiStatus::InvalidArgument;
    }
    match b.encode_vec(x, lambda as usize) {
        Ok(z) => {
            std::ptr::copy_nonoverlapping(z.as_ptr(), out, z.len());
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Reconstruct a delay-domain vector from a latent produced by
/// [`unicsi_bundle_encode`]. `out_len` must equal the encoder input length.
///
/// # Safety
/// `latent` must point to `latent_len` readable f64 values and `out` to
/// `out_len` writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn unicsi_bundle_decode(
    bundle: *const UnicsiBundle,
    latent: *const f64,
    latent_len: usize,
    lambda: u32,
    out: *mut f64,
    out_len: usize,
) -> UnicsiStatus {
    if bundle.is_null() || latent.is_null() || out.is_null() {
        set_error("null argument");
        return UnicsiStatus::NullPointer;
    }
    let b = &(*bundle).inner;
    if out_len != b.input_len() {
        set_error(format!("out_len {out_len} != input length {}", b.input_len()));
        return UnicsiStatus::InvalidArgument;
    }
    let z = std::slice::from_raw_parts(latent, latent_len);
    match b.decode_vec(z, lambda as usize) {
        Ok(y) => {
            std::ptr::copy_nonoverlapping(y.as_ptr(), out, y.len());
            UnicsiStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}
