//! C ABI over the steerage pipeline: opaque dataset and model handles,
//! status codes mirroring the library's error kinds, and a thread-local
//! last-error message.
//!
//! Conventions: every fallible call returns a [`SteerageStatus`] and writes
//! its result through an out-pointer only on `Ok`. Handles are created and
//! destroyed exclusively by this library; passing a handle after `free` is
//! undefined behavior. String arguments are NUL-terminated UTF-8. Panics
//! are caught at the boundary and surface as `Panic`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use steerage::autodiff::Tensor;
use steerage::data::{
    load_log, normalize_image, read_ppm, split, synth_generate, DrivingRecord, SynthConfig,
};
use steerage::embed::Embedding;
use steerage::error::Error;
use steerage::nn::{rollout, Mode};
use steerage::train::{evaluate, lookup_for_config, train_joint, Model, TrainConfig, TrainInputs};

/// Result of every fallible call. `Ok` is zero; everything else leaves a
/// message in `steerage_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteerageStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    Shape = 3,
    Config = 4,
    Contract = 5,
    Parse = 6,
    Header = 7,
    Monotone = 8,
    Training = 9,
    Io = 10,
    /// An internal panic was caught at the boundary.
    Panic = 11,
}

/// A driving log with its frames loaded and a train/test boundary.
pub struct SteerageDataset {
    records: Vec<DrivingRecord>,
    frames: Vec<Tensor>,
    n_train: usize,
}

/// A trained (or freshly initialized) worker/manager pair.
pub struct SteerageModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_message(msg: &str) {
    let owned = CString::new(msg.replace('\0', "?")).expect("NUL stripped");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn fail(e: &Error) -> SteerageStatus {
    set_message(&e.to_string());
    match e {
        Error::Shape(_) => SteerageStatus::Shape,
        Error::Config(_) => SteerageStatus::Config,
        Error::Contract(_) => SteerageStatus::Contract,
        Error::Parse { .. } => SteerageStatus::Parse,
        Error::Header { .. } => SteerageStatus::Header,
        Error::NonMonotone { .. } => SteerageStatus::Monotone,
        Error::Training(_) => SteerageStatus::Training,
        Error::Io { .. } => SteerageStatus::Io,
    }
}

fn null_argument(what: &str) -> SteerageStatus {
    set_message(&format!("{what} must not be NULL"));
    SteerageStatus::NullArgument
}

/// Catches panics so they cannot unwind across the C boundary.
fn guarded(f: impl FnOnce() -> SteerageStatus) -> SteerageStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_message("internal panic");
            SteerageStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or a NUL-terminated string.
unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, SteerageStatus> {
    if ptr.is_null() {
        return Err(null_argument(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_message(&format!("{what} is not valid UTF-8"));
        SteerageStatus::InvalidUtf8
    })
}

/// Message for the most recent failure on this thread; the empty string if
/// none. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn steerage_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn steerage_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn build_dataset(log: &Path, train_fraction: f64) -> Result<SteerageDataset, Error> {
    let records = load_log(log)?;
    let base = log.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let frames = records
        .iter()
        .map(|r| Ok(normalize_image(&read_ppm(base.join(&r.frame_path))?)))
        .collect::<Result<Vec<_>, Error>>()?;
    let dataset = split(records, train_fraction)?;
    let n_train = dataset.n_train();
    Ok(SteerageDataset {
        records: dataset.records().to_vec(),
        frames,
        n_train,
    })
}

/// Loads a driving log CSV and every referenced frame. Frames resolve
/// relative to the log's directory; `train_fraction` sets the split.
///
/// # Safety
/// `log_path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steerage_dataset_load(
    log_path: *const c_char,
    train_fraction: f64,
    out: *mut *mut SteerageDataset,
) -> SteerageStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let log = match text(log_path, "log_path") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        match build_dataset(&log, train_fraction) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(ds));
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Generates a synthetic driving log under `dir`, then loads it like
/// `steerage_dataset_load`.
///
/// # Safety
/// `dir` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steerage_dataset_synth(
    dir: *const c_char,
    n: usize,
    seed: u64,
    image_size: usize,
    noise: f64,
    m: usize,
    train_fraction: f64,
    out: *mut *mut SteerageDataset,
) -> SteerageStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let dir = match text(dir, "dir") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        let cfg = SynthConfig { n, seed, image_size, noise, m };
        if let Err(e) = synth_generate(&dir, &cfg) {
            return fail(&e);
        }
        match build_dataset(&dir.join("log.csv"), train_fraction) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(ds));
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of records; 0 for NULL.
///
/// # Safety
/// `ds` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn steerage_dataset_len(ds: *const SteerageDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).records.len()
}

/// First test index (records below it train); 0 for NULL.
///
/// # Safety
/// `ds` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn steerage_dataset_train_len(ds: *const SteerageDataset) -> usize {
    if ds.is_null() {
        return 0;
    }
    (*ds).n_train
}

/// # Safety
/// `ds` must come from this library and not be freed twice; NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn steerage_dataset_free(ds: *mut SteerageDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model on the dataset. `config_text` holds `key=value` lines
/// (same keys as the run config's training section); `embedding_path` may
/// be NULL except for the centroid modes gt-tsne and pred-tsne.
///
/// # Safety
/// `ds` must be a live dataset handle; strings NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_train(
    ds: *const SteerageDataset,
    config_text: *const c_char,
    embedding_path: *const c_char,
    out: *mut *mut SteerageModel,
) -> SteerageStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        if ds.is_null() {
            return null_argument("ds");
        }
        let ds = &*ds;
        let text_cfg = match text(config_text, "config_text") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let mut config = TrainConfig::default();
        for (i, raw) in text_cfg.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parsed = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", i + 1)))
                .and_then(|(k, v)| config.apply(k.trim(), v.trim()));
            if let Err(e) = parsed {
                return fail(&e);
            }
        }
        let lookup = if matches!(config.mode, Mode::GtTsne | Mode::PredTsne) {
            let path = if embedding_path.is_null() {
                return fail(&Error::config(format!(
                    "mode {} needs an embedding_path",
                    config.mode
                )));
            } else {
                match text(embedding_path, "embedding_path") {
                    Ok(s) => PathBuf::from(s),
                    Err(status) => return status,
                }
            };
            match Embedding::load(&path).and_then(|emb| lookup_for_config(&emb, &config)) {
                Ok(lk) => Some(lk),
                Err(e) => return fail(&e),
            }
        } else {
            None
        };
        let inputs = TrainInputs {
            records: &ds.records,
            frames: &ds.frames,
            n_train: ds.n_train,
            lookup: lookup.as_ref(),
        };
        match train_joint(&inputs, &config) {
            Ok((model, _)) => {
                *out = Box::into_raw(Box::new(SteerageModel { inner: model }));
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_load(
    path: *const c_char,
    out: *mut *mut SteerageModel,
) -> SteerageStatus {
    guarded(|| {
        if out.is_null() {
            return null_argument("out");
        }
        let path = match text(path, "path") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        match Model::load(&path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SteerageModel { inner }));
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `model` must be a live model handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_save(
    model: *const SteerageModel,
    path: *const c_char,
) -> SteerageStatus {
    guarded(|| {
        if model.is_null() {
            return null_argument("model");
        }
        let path = match text(path, "path") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        match (*model).inner.save(&path) {
            Ok(()) => SteerageStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Training mode of the model as a static string (`none`, `gt-tsne`,
/// `pred-tsne`, or `learned`); NULL for a NULL model.
///
/// # Safety
/// `model` must be a live model handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_mode(model: *const SteerageModel) -> *const c_char {
    if model.is_null() {
        return std::ptr::null();
    }
    match (*model).inner.config.mode {
        Mode::None => c"none".as_ptr(),
        Mode::GtTsne => c"gt-tsne".as_ptr(),
        Mode::PredTsne => c"pred-tsne".as_ptr(),
        Mode::Learned => c"learned".as_ptr(),
    }
}

/// Autoregressive rollout over the dataset's test split; writes the RMSE
/// and MAE of the predicted angles.
///
/// # Safety
/// Handles must be live; `rmse` and `mae` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_evaluate(
    model: *const SteerageModel,
    ds: *const SteerageDataset,
    rmse: *mut f64,
    mae: *mut f64,
) -> SteerageStatus {
    guarded(|| {
        if model.is_null() {
            return null_argument("model");
        }
        if ds.is_null() {
            return null_argument("ds");
        }
        if rmse.is_null() || mae.is_null() {
            return null_argument("rmse/mae");
        }
        let ds = &*ds;
        match evaluate(
            &(*model).inner.worker,
            &(*model).inner.manager,
            &ds.frames,
            &ds.records,
            ds.n_train,
        ) {
            Ok(eval) => {
                *rmse = eval.rmse;
                *mae = eval.mae;
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Autoregressive rollout over samples `start..end`; writes one predicted
/// angle per sample into `angles`, which must hold `end - start` doubles.
///
/// # Safety
/// Handles must be live; `angles` must point to `end - start` doubles.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_predict(
    model: *const SteerageModel,
    ds: *const SteerageDataset,
    start: usize,
    end: usize,
    angles: *mut f64,
) -> SteerageStatus {
    guarded(|| {
        if model.is_null() {
            return null_argument("model");
        }
        if ds.is_null() {
            return null_argument("ds");
        }
        if angles.is_null() {
            return null_argument("angles");
        }
        if end <= start {
            return fail(&Error::contract(format!(
                "empty prediction range {start}..{end}"
            )));
        }
        let ds = &*ds;
        let model = &(*model).inner;
        match rollout(&model.worker, &model.manager, &ds.frames, &ds.records, start, end) {
            Ok(preds) => {
                let out = std::slice::from_raw_parts_mut(angles, end - start);
                for (slot, p) in out.iter_mut().zip(&preds) {
                    *slot = p.predicted;
                }
                SteerageStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice; NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn steerage_model_free(model: *mut SteerageModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
