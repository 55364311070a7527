//! C interface to msvbx.
//!
//! Objects cross the boundary as opaque handles created by `*_read`,
//! `*_load` or `msvbx_cluster` and released with the matching `*_free`.
//! Every fallible call returns an [`MsvbxStatus`]; on failure a description
//! is available from [`msvbx_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use msvbx::pipeline::{cluster_recording, Mode, PipelineConfig};
use msvbx::recording::{read_recording, ChunkedRecording};
use msvbx::stitch::{write_rttm, DiarizationResult, Segment};
use msvbx::{Error, InferenceConfig, PldaBackend};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsvbxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Constraint = 6,
    Internal = 7,
    Panic = 8,
}

/// Clustering settings; obtain defaults from [`msvbx_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsvbxConfig {
    pub fa: f64,
    pub fb: f64,
    pub p_loop: f64,
    pub tau: f64,
    pub max_iters: u32,
    pub elbo_rel_tol: f64,
    pub pi_drop_eps: f64,
    pub cahc_threshold: f64,
    pub activity_threshold: f64,
    pub median_window: f64,
    /// 0 for multi-stream inference, 1 for single-stream VBx.
    pub mode: u32,
}

/// One speaker turn; `speaker` is the k of `spk<k>`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsvbxSegment {
    pub speaker: u32,
    pub onset: f64,
    pub duration: f64,
}

pub struct MsvbxRecording {
    inner: ChunkedRecording,
}

pub struct MsvbxBackend {
    inner: PldaBackend,
}

pub struct MsvbxResult {
    result: DiarizationResult,
    segments: Vec<Segment>,
    elbo: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn classify(err: &Error) -> MsvbxStatus {
    match err {
        Error::Io(_) => MsvbxStatus::Io,
        Error::Json(_)
        | Error::BadMagic
        | Error::Truncated { .. }
        | Error::DimensionOverflow(_)
        | Error::TrailingBytes(_)
        | Error::Rttm { .. } => MsvbxStatus::Format,
        Error::NotPositiveDefinite(_) | Error::InfeasibleChunk(_) | Error::DegenerateModel => {
            MsvbxStatus::Numerical
        }
        Error::ConstraintViolation { .. } => MsvbxStatus::Constraint,
        Error::Internal(_) => MsvbxStatus::Internal,
        _ => MsvbxStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (MsvbxStatus, String)>) -> MsvbxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MsvbxStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside msvbx");
            MsvbxStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (MsvbxStatus, String) {
    (classify(&e), e.to_string())
}

fn null(what: &str) -> (MsvbxStatus, String) {
    (MsvbxStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, (MsvbxStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MsvbxStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Thread-local message for the last failed call; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn msvbx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn msvbx_config_default() -> MsvbxConfig {
    let p = PipelineConfig::default();
    MsvbxConfig {
        fa: p.inference.fa,
        fb: p.inference.fb,
        p_loop: p.inference.p_loop,
        tau: p.inference.tau,
        max_iters: p.inference.max_iters as u32,
        elbo_rel_tol: p.inference.elbo_rel_tol,
        pi_drop_eps: p.inference.pi_drop_eps,
        cahc_threshold: p.cahc_threshold,
        activity_threshold: p.activity_threshold,
        median_window: p.median_window,
        mode: 0,
    }
}

fn pipeline_config(c: &MsvbxConfig) -> Result<PipelineConfig, (MsvbxStatus, String)> {
    let mode = match c.mode {
        0 => Mode::Msvbx,
        1 => Mode::Vbx,
        m => return Err((MsvbxStatus::InvalidArgument, format!("unknown mode {m}"))),
    };
    let cfg = PipelineConfig {
        inference: InferenceConfig {
            fa: c.fa,
            fb: c.fb,
            p_loop: c.p_loop,
            tau: c.tau,
            max_iters: c.max_iters as usize,
            elbo_rel_tol: c.elbo_rel_tol,
            pi_drop_eps: c.pi_drop_eps,
            ..Default::default()
        },
        cahc_threshold: c.cahc_threshold,
        activity_threshold: c.activity_threshold,
        median_window: c.median_window,
        mode,
        ..Default::default()
    };
    cfg.validate().map_err(lib_err)?;
    Ok(cfg)
}

/// Reads an MSVB1 recording file; the recording id is the file stem.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msvbx_recording_read(path: *const c_char, out: *mut *mut MsvbxRecording) -> MsvbxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = read_recording(path_arg(path)?).map_err(lib_err)?;
        put(out, MsvbxRecording { inner });
        Ok(())
    })
}

/// Builds a recording from row-major arrays: `activities` holds
/// `num_chunks * num_streams * frames_per_chunk` values and `embeddings`
/// `num_chunks * num_streams * embed_dim` values.
///
/// # Safety
/// `recording_id` must be NUL-terminated, the arrays must hold the stated
/// number of floats and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn msvbx_recording_from_arrays(
    recording_id: *const c_char,
    num_chunks: usize,
    num_streams: usize,
    embed_dim: usize,
    frames_per_chunk: usize,
    frame_step: f32,
    activities: *const f32,
    embeddings: *const f32,
    out: *mut *mut MsvbxRecording,
) -> MsvbxStatus {
    guard(|| {
        if out.is_null() || activities.is_null() || embeddings.is_null() {
            return Err(null("argument"));
        }
        let id = path_arg(recording_id)?;
        let n_act = num_chunks
            .checked_mul(num_streams)
            .and_then(|v| v.checked_mul(frames_per_chunk))
            .ok_or((MsvbxStatus::InvalidArgument, "size overflow".to_string()))?;
        let n_emb = num_chunks
            .checked_mul(num_streams)
            .and_then(|v| v.checked_mul(embed_dim))
            .ok_or((MsvbxStatus::InvalidArgument, "size overflow".to_string()))?;
        let act = std::slice::from_raw_parts(activities, n_act).to_vec();
        let emb = std::slice::from_raw_parts(embeddings, n_emb).to_vec();
        let inner = ChunkedRecording::new(
            id,
            num_chunks,
            num_streams,
            embed_dim,
            frames_per_chunk,
            frame_step,
            act,
            emb,
        )
        .map_err(lib_err)?;
        put(out, MsvbxRecording { inner });
        Ok(())
    })
}

/// # Safety
/// `rec` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msvbx_recording_free(rec: *mut MsvbxRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Number of chunks, or 0 for a null handle.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msvbx_recording_num_chunks(rec: *const MsvbxRecording) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.num_chunks())
}

/// Loads a trained backend model (JSON).
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msvbx_backend_load(path: *const c_char, out: *mut *mut MsvbxBackend) -> MsvbxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = PldaBackend::load(path_arg(path)?).map_err(lib_err)?;
        put(out, MsvbxBackend { inner });
        Ok(())
    })
}

/// # Safety
/// `backend` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msvbx_backend_free(backend: *mut MsvbxBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Output dimension of the backend, or 0 for a null handle.
///
/// # Safety
/// `backend` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msvbx_backend_dim(backend: *const MsvbxBackend) -> usize {
    backend.as_ref().map_or(0, |b| b.inner.lda_dim())
}

/// Clusters one recording. A null `config` means defaults.
///
/// # Safety
/// Handles must be live; `config` null or valid; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msvbx_cluster(
    rec: *const MsvbxRecording,
    backend: *const MsvbxBackend,
    config: *const MsvbxConfig,
    out: *mut *mut MsvbxResult,
) -> MsvbxStatus {
    guard(|| {
        let rec = rec.as_ref().ok_or_else(|| null("recording"))?;
        let backend = backend.as_ref().ok_or_else(|| null("backend"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = match config.as_ref() {
            Some(c) => pipeline_config(c)?,
            None => PipelineConfig::default(),
        };
        let outcome = cluster_recording(&rec.inner, &backend.inner, &cfg).map_err(lib_err)?;
        let segments = outcome.result.segments();
        put(
            out,
            MsvbxResult {
                result: outcome.result,
                segments,
                elbo: outcome.diagnostics.iter().map(|d| d.elbo).collect(),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `res` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_free(res: *mut MsvbxResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_num_speakers(res: *const MsvbxResult) -> usize {
    res.as_ref().map_or(0, |r| r.result.num_speakers())
}

/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_num_segments(res: *const MsvbxResult) -> usize {
    res.as_ref().map_or(0, |r| r.segments.len())
}

/// Copies segment `index` (onset order) into `out`.
///
/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_segment(
    res: *const MsvbxResult,
    index: usize,
    out: *mut MsvbxSegment,
) -> MsvbxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = res.segments.get(index).ok_or_else(|| {
            (
                MsvbxStatus::InvalidArgument,
                format!("segment {index} out of range ({} segments)", res.segments.len()),
            )
        })?;
        let speaker = s
            .speaker
            .strip_prefix("spk")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| (MsvbxStatus::Internal, format!("unexpected speaker id {}", s.speaker)))?;
        *out = MsvbxSegment {
            speaker,
            onset: s.onset,
            duration: s.duration,
        };
        Ok(())
    })
}

/// Number of VB iterations that were run.
///
/// # Safety
/// `res` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_num_iterations(res: *const MsvbxResult) -> usize {
    res.as_ref().map_or(0, |r| r.elbo.len())
}

/// ELBO after iteration `iter`.
///
/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_elbo(res: *const MsvbxResult, iter: usize, out: *mut f64) -> MsvbxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = *res
            .elbo
            .get(iter)
            .ok_or_else(|| (MsvbxStatus::InvalidArgument, format!("iteration {iter} out of range")))?;
        Ok(())
    })
}

/// Writes the result as RTTM.
///
/// # Safety
/// `res` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msvbx_result_write_rttm(res: *const MsvbxResult, path: *const c_char) -> MsvbxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| null("result"))?;
        write_rttm(&res.result, path_arg(path)?).map_err(lib_err)
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn msvbx_status_name(status: MsvbxStatus) -> *const c_char {
    let name: &'static CStr = match status {
        MsvbxStatus::Ok => c"ok",
        MsvbxStatus::NullPointer => c"null pointer",
        MsvbxStatus::InvalidArgument => c"invalid argument",
        MsvbxStatus::Io => c"i/o error",
        MsvbxStatus::Format => c"format error",
        MsvbxStatus::Numerical => c"numerical failure",
        MsvbxStatus::Constraint => c"constraint violation",
        MsvbxStatus::Internal => c"internal error",
        MsvbxStatus::Panic => c"panic",
    };
    name.as_ptr()
}
