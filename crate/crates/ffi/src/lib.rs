//! C interface to trained cdfag pipelines.
//!
//! Handles are opaque. Every fallible call returns a [`CdfagStatus`]; on
//! failure the message is available from [`cdfag_last_error_message`] on the
//! same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cdfag::io::read_features;
use cdfag::persist::{load_model, save_model};
use cdfag::pipeline::{generalize_domain, SOURCE, TARGET};
use cdfag::svm::svm_predict;
use cdfag::{train_pipeline, Error, ErrorKind, PipelineConfig, PipelineModel};
use nalgebra::DMatrix;

/// Status codes; the nonzero error classes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfagStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfagDomain {
    Source = 0,
    Target = 1,
}

/// A trained pipeline.
pub struct CdfagPipeline {
    model: PipelineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdfagStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdfagStatus::Ok,
        Ok(Err(Failure::Arg(m))) => {
            set_error(m);
            CdfagStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Config => CdfagStatus::Config,
                ErrorKind::Data => CdfagStatus::Data,
                ErrorKind::Numerical => CdfagStatus::Numerical,
            }
        }
        Err(_) => {
            set_error("internal panic".into());
            CdfagStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::Arg(format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a>(h: *const CdfagPipeline) -> Result<&'a CdfagPipeline, Failure> {
    h.as_ref().ok_or_else(|| Failure::Arg("pipeline handle is null".into()))
}

fn domain_index(d: CdfagDomain) -> usize {
    match d {
        CdfagDomain::Source => SOURCE,
        CdfagDomain::Target => TARGET,
    }
}

/// Message for the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cdfag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdfag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a pipeline model file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_load(path: *const c_char, out: *mut *mut CdfagPipeline) -> CdfagStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("out is null".into()));
        }
        let path = path_arg(path, "path")?;
        let model: PipelineModel = load_model(&path)?;
        *out = Box::into_raw(Box::new(CdfagPipeline { model }));
        Ok(())
    })
}

/// Trains from two feature CSV files. `config` holds `key=value` lines and
/// may be null for defaults.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_train(
    source_csv: *const c_char,
    target_csv: *const c_char,
    config: *const c_char,
    out: *mut *mut CdfagPipeline,
) -> CdfagStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("out is null".into()));
        }
        let source = read_features(&path_arg(source_csv, "source_csv")?)?;
        let target = read_features(&path_arg(target_csv, "target_csv")?)?;
        let config = if config.is_null() {
            PipelineConfig::default()
        } else {
            let text = CStr::from_ptr(config)
                .to_str()
                .map_err(|_| Failure::Arg("config is not valid UTF-8".into()))?;
            PipelineConfig::parse(text)?
        };
        let (model, _) = train_pipeline(&source, &target, &config)?;
        *out = Box::into_raw(Box::new(CdfagPipeline { model }));
        Ok(())
    })
}

/// Writes the pipeline to `path`.
///
/// # Safety
/// `pipeline` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_save(pipeline: *const CdfagPipeline, path: *const c_char) -> CdfagStatus {
    guard(|| {
        let p = handle(pipeline)?;
        save_model(&p.model, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Raw feature width expected for `domain`.
///
/// # Safety
/// `pipeline` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_input_dim(
    pipeline: *const CdfagPipeline,
    domain: CdfagDomain,
    out: *mut usize,
) -> CdfagStatus {
    guard(|| {
        let p = handle(pipeline)?;
        if out.is_null() {
            return Err(Failure::Arg("out is null".into()));
        }
        *out = p
            .model
            .input_dim(domain_index(domain))
            .ok_or_else(|| Failure::Arg("unknown domain".into()))?;
        Ok(())
    })
}

/// Number of classes the pipeline predicts.
///
/// # Safety
/// `pipeline` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_class_count(pipeline: *const CdfagPipeline, out: *mut usize) -> CdfagStatus {
    guard(|| {
        let p = handle(pipeline)?;
        if out.is_null() {
            return Err(Failure::Arg("out is null".into()));
        }
        *out = p.model.targets.class_count();
        Ok(())
    })
}

/// Predicts labels for `rows` row-major samples of width `cols` from
/// `domain`, writing `rows` labels to `labels`.
///
/// # Safety
/// `data` must hold `rows * cols` doubles and `labels` room for `rows`
/// values.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_predict(
    pipeline: *const CdfagPipeline,
    domain: CdfagDomain,
    data: *const f64,
    rows: usize,
    cols: usize,
    labels: *mut usize,
) -> CdfagStatus {
    guard(|| {
        let p = handle(pipeline)?;
        if data.is_null() || labels.is_null() {
            return Err(Failure::Arg("data or labels is null".into()));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure::Arg("rows * cols overflows".into()))?;
        if rows == 0 {
            return Err(Failure::Core(Error::EmptyInput));
        }
        let x = DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(data, len));
        let [_, _, generalized] = generalize_domain(&p.model, domain_index(domain), &x)?;
        let pred = svm_predict(&p.model.svm, &generalized)?;
        std::slice::from_raw_parts_mut(labels, rows).copy_from_slice(&pred);
        Ok(())
    })
}

/// Releases a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdfag_pipeline_free(pipeline: *mut CdfagPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
