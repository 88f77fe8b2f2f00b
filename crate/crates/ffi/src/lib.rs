//! C ABI over the flowdirector engine.
//!
//! Every fallible call returns an [`FdStatus`]; on failure a description is
//! available from [`fd_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Panics are caught and reported as
//! `FD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use flowdirector::config::RunConfig;
use flowdirector::io::fdt;
use flowdirector::metrics::{ssim_video, warp_metrics, FlowField};
use flowdirector::safc::{build_mask, AttentionMap, MaskConfig};
use flowdirector::scenes::{render_scene, SceneBundle, SceneSpec};
use flowdirector::{Dims, Error, SeedSpec, VideoTensor};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    InvalidArgument = 1,
    ShapeMismatch = 2,
    Singularity = 3,
    DegeneratePosterior = 4,
    NotFound = 5,
    Format = 6,
    Io = 7,
    /// A numerical failure inside an editing step.
    Runtime = 8,
    NullPointer = 9,
    Panic = 10,
}

/// Video tensor dimensions `(T, H, W, C)`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FdDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl From<Dims> for FdDims {
    fn from(d: Dims) -> Self {
        FdDims {
            frames: d.frames,
            height: d.height,
            width: d.width,
            channels: d.channels,
        }
    }
}

/// Temporal consistency scores.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FdWarpScores {
    pub warp_ssim: f64,
    pub warp_l1: f64,
    pub warp_l2: f64,
}

/// Opaque video tensor (`T*H*W*C` doubles, channel fastest).
pub struct FdTensor(VideoTensor);

/// Opaque rendered scene.
pub struct FdScene(SceneBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(FdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Json(_) => FdStatus::InvalidArgument,
            Error::ShapeMismatch { .. } => FdStatus::ShapeMismatch,
            Error::Singularity => FdStatus::Singularity,
            Error::DegeneratePosterior => FdStatus::DegeneratePosterior,
            Error::NotFound(_) => FdStatus::NotFound,
            Error::Format(_) => FdStatus::Format,
            Error::Io(_) => FdStatus::Io,
            _ => FdStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FdStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FdStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `len` doubles from `data` into a new tensor. `len` must equal
/// `frames * height * width * channels`.
///
/// # Safety
/// `data` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_new(dims: FdDims, data: *const f64, len: usize, out: *mut *mut FdTensor) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let t = VideoTensor::new(Dims::new(dims.frames, dims.height, dims.width, dims.channels), values)?;
        *out = boxed(FdTensor(t));
        Ok(())
    })
}

/// Releases a tensor. NULL is ignored.
///
/// # Safety
/// `t` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_free(t: *mut FdTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live tensor handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_dims(t: *const FdTensor, out: *mut FdDims) -> FdStatus {
    guard(|| {
        *out_ptr(out, "out")? = borrow(t, "tensor")?.0.dims().into();
        Ok(())
    })
}

/// Copies the samples into `buf`, which must hold exactly the tensor's
/// element count.
///
/// # Safety
/// `t` must be a live tensor handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_copy_data(t: *const FdTensor, buf: *mut f64, len: usize) -> FdStatus {
    guard(|| {
        let t = &borrow(t, "tensor")?.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len != t.len() {
            return Err(Failure(
                FdStatus::ShapeMismatch,
                format!("buffer holds {len} values, tensor has {}", t.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(t.data());
        Ok(())
    })
}

/// Reads an FDT1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_read_fdt(path: *const c_char, out: *mut *mut FdTensor) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = fdt::read(Path::new(utf8(path, "path")?))?;
        *out = boxed(FdTensor(t));
        Ok(())
    })
}

/// Writes an FDT1 file atomically.
///
/// # Safety
/// `t` must be a live tensor handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fd_tensor_write_fdt(t: *const FdTensor, path: *const c_char) -> FdStatus {
    guard(|| {
        fdt::write(Path::new(utf8(path, "path")?), &borrow(t, "tensor")?.0)?;
        Ok(())
    })
}

/// Builds an editing mask from two single-channel attention tensors.
///
/// # Safety
/// `a_src` and `a_tar` must be live tensor handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_build_mask(
    a_src: *const FdTensor,
    a_tar: *const FdTensor,
    kernel: usize,
    delta: f64,
    soften: bool,
    out: *mut *mut FdTensor,
) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let a = AttentionMap::from_tensor(&borrow(a_src, "a_src")?.0)?;
        let b = AttentionMap::from_tensor(&borrow(a_tar, "a_tar")?.0)?;
        let cfg = MaskConfig {
            kernel,
            delta,
            apply_softening: soften,
        };
        *out = boxed(FdTensor(build_mask(&a, &b, &cfg)?.to_tensor()));
        Ok(())
    })
}

/// Mean per-frame SSIM between two videos of equal shape.
///
/// # Safety
/// `a` and `b` must be live tensor handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_ssim(a: *const FdTensor, b: *const FdTensor, out: *mut f64) -> FdStatus {
    guard(|| {
        *out_ptr(out, "out")? = ssim_video(&borrow(a, "a")?.0, &borrow(b, "b")?.0)?;
        Ok(())
    })
}

/// Warp metrics of `edited` under `flow` (`(T-1) x H x W x 2`, `(dy, dx)`).
///
/// # Safety
/// `edited` and `flow` must be live tensor handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_warp_metrics(edited: *const FdTensor, flow: *const FdTensor, out: *mut FdWarpScores) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let flow = FlowField::new(borrow(flow, "flow")?.0.clone())?;
        let s = warp_metrics(&borrow(edited, "edited")?.0, &flow)?;
        *out = FdWarpScores {
            warp_ssim: s.warp_ssim,
            warp_l1: s.warp_l1,
            warp_l2: s.warp_l2,
        };
        Ok(())
    })
}

/// Parses and renders a scene manifest given as JSON text.
///
/// # Safety
/// `manifest_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_scene_render(manifest_json: *const c_char, seed: u64, out: *mut *mut FdScene) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = SceneSpec::from_json(utf8(manifest_json, "manifest_json")?)?;
        *out = boxed(FdScene(render_scene(&spec, SeedSpec::new(seed, 0, 0))?));
        Ok(())
    })
}

/// Releases a scene. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fd_scene_free(s: *mut FdScene) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// New tensor holding the rendered video.
///
/// # Safety
/// `s` must be a live scene handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_scene_video(s: *const FdScene, out: *mut *mut FdTensor) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(FdTensor(borrow(s, "scene")?.0.video.clone()));
        Ok(())
    })
}

/// New tensor holding the ground-truth flow.
///
/// # Safety
/// `s` must be a live scene handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_scene_flow(s: *const FdScene, out: *mut *mut FdTensor) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(FdTensor(borrow(s, "scene")?.0.flow.tensor().clone()));
        Ok(())
    })
}

/// Runs an edit described by a JSON run config and returns the edited video.
/// A relative scene path resolves against `base_dir` (the current directory
/// when NULL).
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `base_dir` NULL or one;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_edit(config_json: *const c_char, base_dir: *const c_char, out: *mut *mut FdTensor) -> FdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mut cfg = RunConfig::from_json(utf8(config_json, "config_json")?)?;
        let base = if base_dir.is_null() {
            PathBuf::from(".")
        } else {
            PathBuf::from(utf8(base_dir, "base_dir")?)
        };
        cfg.resolve_scene(&base)?;
        *out = boxed(FdTensor(cfg.execute()?.output));
        Ok(())
    })
}
