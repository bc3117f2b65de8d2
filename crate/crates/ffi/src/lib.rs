//! C ABI over the `tsca` crate.
//!
//! Every fallible function returns a `TscaStatus`; on failure a description
//! is available from `tsca_last_error_message` on the same thread. Models are
//! opaque `TscaModel` handles released with `tsca_model_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use tsca::dataio::{canonicalize, Preprocess};
use tsca::encoder::{encode, init_params, project, EncoderConfig};
use tsca::evaluate::{contrastive_accuracy_jobs, pearson, CAConfig};
use tsca::harness::{load_checkpoint, save_checkpoint};
use tsca::training::{cosine_similarity, info_nce, Checkpoint, Provenance, TrainConfig};
use tsca::{CheckpointError, Error};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TscaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    BadMagic = 5,
    Truncated = 6,
    ShapeMismatch = 7,
    CheckpointHeader = 8,
    Numerical = 9,
    Config = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Encoder size presets for `tsca_model_init`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TscaPreset {
    Default = 0,
    Compact = 1,
    Tiny = 2,
}

/// Opaque model handle.
pub struct TscaModel {
    ckpt: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TscaStatus {
    match e {
        Error::Format { .. } | Error::UnrecoverableRecord { .. } | Error::Json(_) => {
            TscaStatus::Format
        }
        Error::InvalidArgument(_) => TscaStatus::InvalidArgument,
        Error::NumericalDegeneracy(_)
        | Error::NonFinite { .. }
        | Error::UndefinedCorrelation(_) => TscaStatus::Numerical,
        Error::Config(_) => TscaStatus::Config,
        Error::Io { .. } => TscaStatus::Io,
        Error::Checkpoint(c) => match c {
            CheckpointError::BadMagic { .. } => TscaStatus::BadMagic,
            CheckpointError::Truncated { .. } => TscaStatus::Truncated,
            CheckpointError::ShapeMismatch { .. } | CheckpointError::OffsetMismatch { .. } => {
                TscaStatus::ShapeMismatch
            }
            CheckpointError::Header { .. } => TscaStatus::CheckpointHeader,
        },
    }
}

enum Failure {
    Status(TscaStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TscaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TscaStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            TscaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(TscaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(
    p: *mut f64,
    cap: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [f64], Failure> {
    if cap < need {
        return Err(Failure::Status(
            TscaStatus::BufferTooSmall,
            format!("{what} holds {cap} values, {need} needed"),
        ));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(TscaStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn model<'a>(m: *const TscaModel) -> Result<&'a TscaModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = v;
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tsca_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint file.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_load(
    path: *const c_char,
    out: *mut *mut TscaModel,
) -> TscaStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = load_checkpoint(&path)?;
        *out = Box::into_raw(Box::new(TscaModel { ckpt }));
        Ok(())
    })
}

/// Freshly initialized (untrained) model; `preset` is a `TscaPreset` value.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_init(
    preset: u32,
    seed: u64,
    out: *mut *mut TscaModel,
) -> TscaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = match preset {
            p if p == TscaPreset::Default as u32 => EncoderConfig::default(),
            p if p == TscaPreset::Compact as u32 => EncoderConfig::compact(),
            p if p == TscaPreset::Tiny as u32 => EncoderConfig::tiny(),
            p => {
                return Err(Failure::Status(
                    TscaStatus::InvalidArgument,
                    format!("unknown preset {p}"),
                ));
            }
        };
        let params = init_params(&config, seed)?;
        let train = TrainConfig {
            epochs: 0,
            seed,
            ..TrainConfig::default()
        };
        let provenance = Provenance {
            dataset: String::new(),
            num_series: 0,
            train,
            augment: tsca::augment::CropResizeConfig {
                out_len: config.seq_len,
                ..Default::default()
            },
            seed,
            epochs_run: 0,
            final_loss: None,
            epoch_losses: Vec::new(),
        };
        *out = Box::into_raw(Box::new(TscaModel {
            ckpt: Checkpoint { params, provenance },
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tsca_model_save(m: *const TscaModel, path: *const c_char) -> TscaStatus {
    guard(|| {
        let m = model(m)?;
        save_checkpoint(&m.ckpt, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_free(m: *mut TscaModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Input length the encoder expects; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_seq_len(m: *const TscaModel) -> usize {
    m.as_ref().map_or(0, |m| m.ckpt.params.config.seq_len)
}

#[no_mangle]
pub unsafe extern "C" fn tsca_model_embedding_dim(m: *const TscaModel) -> usize {
    m.as_ref().map_or(0, |m| m.ckpt.params.config.token_dim)
}

#[no_mangle]
pub unsafe extern "C" fn tsca_model_projection_dim(m: *const TscaModel) -> usize {
    m.as_ref().map_or(0, |m| m.ckpt.params.config.proj_out)
}

#[no_mangle]
pub unsafe extern "C" fn tsca_model_num_params(m: *const TscaModel) -> usize {
    m.as_ref().map_or(0, |m| m.ckpt.params.num_params())
}

/// Z-normalizes and resamples `values` to `out_len` points.
#[no_mangle]
pub unsafe extern "C" fn tsca_canonicalize(
    values: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> TscaStatus {
    guard(|| {
        let pre = Preprocess {
            seq_len: out_len,
            znormalize: true,
        };
        let v = canonicalize(input(values, len, "values")?, &pre)?;
        output(out, out_len, v.len(), "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Backbone embedding of one canonical series of `tsca_model_seq_len` points.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_encode(
    m: *const TscaModel,
    series: *const f64,
    len: usize,
    out: *mut f64,
    out_cap: usize,
) -> TscaStatus {
    guard(|| {
        let m = model(m)?;
        let e = encode(&m.ckpt.params, input(series, len, "series")?)?;
        output(out, out_cap, e.0.len(), "out")?.copy_from_slice(&e.0);
        Ok(())
    })
}

/// Projector output for one canonical series.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_project(
    m: *const TscaModel,
    series: *const f64,
    len: usize,
    out: *mut f64,
    out_cap: usize,
) -> TscaStatus {
    guard(|| {
        let m = model(m)?;
        let p = &m.ckpt.params;
        let z = project(p, &encode(p, input(series, len, "series")?)?)?;
        output(out, out_cap, z.len(), "out")?.copy_from_slice(&z);
        Ok(())
    })
}

/// Contrastive accuracy on `n` canonical series stored row-major, each of
/// `tsca_model_seq_len` points.
#[no_mangle]
pub unsafe extern "C" fn tsca_model_contrastive_accuracy(
    m: *const TscaModel,
    series: *const f64,
    n: usize,
    len: usize,
    draws: usize,
    eval_batch: usize,
    seed: u64,
    out: *mut f64,
) -> TscaStatus {
    guard(|| {
        let m = model(m)?;
        let total = n.checked_mul(len).ok_or_else(|| {
            Failure::Status(TscaStatus::InvalidArgument, "n * len overflows".into())
        })?;
        let flat = input(series, total, "series")?;
        let set: Vec<tsca::dataio::TimeSeries> = flat
            .chunks(len.max(1))
            .map(|c| tsca::dataio::TimeSeries::unlabeled(c.to_vec()))
            .collect();
        let cfg = CAConfig {
            draws,
            eval_batch,
            seed,
        };
        let ca = contrastive_accuracy_jobs(&m.ckpt, &set, &cfg, 1)?;
        write_out(out, ca)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tsca_cosine_similarity(
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> TscaStatus {
    guard(|| {
        let s = cosine_similarity(input(a, len, "a")?, input(b, len, "b")?)?;
        write_out(out, s)
    })
}

/// InfoNCE of a row-major `b`×`b` similarity matrix with positives on the diagonal.
#[no_mangle]
pub unsafe extern "C" fn tsca_info_nce(
    sim: *const f64,
    b: usize,
    temperature: f64,
    out: *mut f64,
) -> TscaStatus {
    guard(|| {
        let total = b.checked_mul(b).ok_or_else(|| {
            Failure::Status(TscaStatus::InvalidArgument, "b * b overflows".into())
        })?;
        let flat = input(sim, total, "sim")?;
        let rows: Vec<Vec<f64>> = flat.chunks(b.max(1)).map(<[f64]>::to_vec).collect();
        write_out(out, info_nce(&rows, temperature)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn tsca_pearson(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> TscaStatus {
    guard(|| {
        let r = pearson(input(xs, n, "xs")?, input(ys, n, "ys")?)?;
        write_out(out, r)
    })
}
