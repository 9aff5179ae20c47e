//! C interface to compositing, trimaps, metrics and generator inference.
//!
//! Images are interleaved RGB `double` arrays of `height * width * 3`, mattes
//! are `height * width`, trimaps are label bytes {0 background, 1 unknown,
//! 2 foreground}. Every call returns a [`BgmStatus`]; on failure
//! [`bgm_last_error_message`] describes the cause on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use bgmatte::harness::predict_padded;
use bgmatte::imagecore::{compose, generate_trimap, AlphaMatte, Image, Trimap, TrimapLabel};
use bgmatte::metrics::evaluate_pair;
use bgmatte::netgen::Generator;
use bgmatte::trainer::load_generator;
use bgmatte::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgmStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    Domain = 3,
    Parameter = 4,
    Degenerate = 5,
    Config = 6,
    Io = 7,
    Format = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Four matting errors over the unknown region.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BgmMetrics {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
}

/// Opaque generator handle.
pub struct BgmGenerator {
    inner: Generator,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> BgmStatus {
    match e {
        Error::Shape(_) => BgmStatus::Shape,
        Error::Domain(_) => BgmStatus::Domain,
        Error::Parameter(_) => BgmStatus::Parameter,
        Error::Degenerate(_) => BgmStatus::Degenerate,
        Error::Config(_) | Error::Divergence { .. } => BgmStatus::Config,
        Error::Io { .. } | Error::Codec { .. } => BgmStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Csv(_) => BgmStatus::Format,
    }
}

struct Fail(BgmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BgmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BgmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BgmStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn size(height: usize, width: usize, ch: usize) -> Result<usize, Fail> {
    height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(ch))
        .ok_or_else(|| Fail(BgmStatus::Shape, format!("{height}x{width} overflows")))
}

fn trimap_from(labels: &[u8], height: usize, width: usize) -> Result<Trimap, Fail> {
    let labels = labels
        .iter()
        .map(|&b| TrimapLabel::from_index(b).ok_or_else(|| Fail(BgmStatus::Domain, format!("trimap label {b}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trimap::new(height, width, labels)?)
}

/// Writes `alpha * fg + (1 - alpha) * bg` to `out`.
///
/// # Safety
/// Pointers must be valid for the sizes implied by `height` and `width`.
#[no_mangle]
pub unsafe extern "C" fn bgm_compose(
    fg: *const f64,
    bg: *const f64,
    alpha: *const f64,
    height: usize,
    width: usize,
    out: *mut f64,
) -> BgmStatus {
    guard(|| {
        let n = size(height, width, 1)?;
        let fg = Image::new(height, width, input(fg, 3 * n, "fg")?.to_vec())?;
        let bg = Image::new(height, width, input(bg, 3 * n, "bg")?.to_vec())?;
        let alpha = AlphaMatte::new(height, width, input(alpha, n, "alpha")?.to_vec())?;
        let dst = output(out, 3 * n, "out")?;
        dst.copy_from_slice(compose(&fg, &bg, &alpha)?.as_slice());
        Ok(())
    })
}

/// Derives trimap labels from a matte with an unknown band of `band_radius` pixels.
///
/// # Safety
/// `alpha` must hold `height * width` values and `labels_out` as many bytes.
#[no_mangle]
pub unsafe extern "C" fn bgm_generate_trimap(
    alpha: *const f64,
    height: usize,
    width: usize,
    band_radius: usize,
    labels_out: *mut u8,
) -> BgmStatus {
    guard(|| {
        let n = size(height, width, 1)?;
        let alpha = AlphaMatte::new(height, width, input(alpha, n, "alpha")?.to_vec())?;
        let t = generate_trimap(&alpha, band_radius)?;
        let dst = output(labels_out, n, "labels_out")?;
        for (d, l) in dst.iter_mut().zip(t.labels()) {
            *d = *l as u8;
        }
        Ok(())
    })
}

/// SAD, MSE, GRAD and CONN of `pred` against `gt` over the unknown region.
///
/// # Safety
/// `pred`, `gt` must hold `height * width` values, `trimap` as many bytes.
#[no_mangle]
pub unsafe extern "C" fn bgm_evaluate_pair(
    pred: *const f64,
    gt: *const f64,
    trimap: *const u8,
    height: usize,
    width: usize,
    out: *mut BgmMetrics,
) -> BgmStatus {
    guard(|| {
        let n = size(height, width, 1)?;
        let pred = AlphaMatte::new(height, width, input(pred, n, "pred")?.to_vec())?;
        let gt = AlphaMatte::new(height, width, input(gt, n, "gt")?.to_vec())?;
        let trimap = trimap_from(input(trimap, n, "trimap")?, height, width)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = evaluate_pair(&pred, &gt, &trimap)?;
        *out = BgmMetrics {
            sad: r.sad,
            mse: r.mse,
            grad: r.grad,
            conn: r.conn,
        };
        Ok(())
    })
}

/// Loads the generator stored in a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bgm_generator_load(path: *const c_char, out: *mut *mut BgmGenerator) -> BgmStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(BgmStatus::InvalidUtf8, "path is not UTF-8".into()))?;
        let inner = load_generator(Path::new(path))?;
        *out = Box::into_raw(Box::new(BgmGenerator { inner }));
        Ok(())
    })
}

/// Predicts a matte from the composite, the (possibly distorted) background and trimap labels.
///
/// # Safety
/// `generator` must come from [`bgm_generator_load`]; buffers must match the sizes.
#[no_mangle]
pub unsafe extern "C" fn bgm_generator_predict(
    generator: *const BgmGenerator,
    composite: *const f64,
    background: *const f64,
    trimap: *const u8,
    height: usize,
    width: usize,
    alpha_out: *mut f64,
) -> BgmStatus {
    guard(|| {
        let g = generator.as_ref().ok_or_else(|| null("generator"))?;
        let n = size(height, width, 1)?;
        let c = Image::new(height, width, input(composite, 3 * n, "composite")?.to_vec())?;
        let b = Image::new(height, width, input(background, 3 * n, "background")?.to_vec())?;
        let t = trimap_from(input(trimap, n, "trimap")?, height, width)?;
        let alpha = predict_padded(&g.inner, &c, &b, &t)?;
        output(alpha_out, n, "alpha_out")?.copy_from_slice(alpha.as_slice());
        Ok(())
    })
}

/// Releases a generator; null is ignored.
///
/// # Safety
/// `generator` must be null or a live handle from [`bgm_generator_load`].
#[no_mangle]
pub unsafe extern "C" fn bgm_generator_free(generator: *mut BgmGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to `len`) into `buf` and returns the untruncated length excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bgm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
